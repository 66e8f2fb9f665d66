"""Differentiable backward warping of rasters by per-pixel flow fields.

A flow field V maps reference-grid coordinates to source coordinates: the
warped value at pixel (x, y) is the bilinear sample of the source raster at
(x + u, y + v). Consequently the ground-truth flow for content that moved by
+delta between the source frame and the reference is -delta at the content's
reference footprint.

Samples whose bilinear footprint leaves the source raster produce value 0 and
a False mask; masked pixels are meant to be excluded from all losses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass
class FlowField:
    """Per-pixel displacement (u: columns/x, v: rows/y) in pixels."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise ValueError("u and v must be 2D rasters of equal shape")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise ValueError("flow values must be finite")

    @classmethod
    def zeros(cls, height: int, width: int) -> "FlowField":
        return cls(np.zeros((height, width)), np.zeros((height, width)))

    def copy(self) -> "FlowField":
        return FlowField(self.u.copy(), self.v.copy())

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)


@dataclass
class WarpResult:
    """Warped raster, validity mask, and reverse-mode gradient operators.

    ``d_image(cotangent)`` returns the gradient w.r.t. the source raster.
    ``d_flow(cotangent)`` returns (grad_u, grad_v). Both accept a cotangent
    raster of the warped shape and are linear, so repeated calls compose by
    summation.
    """

    warped: np.ndarray
    mask: np.ndarray
    d_image: Callable[[np.ndarray], np.ndarray]
    d_flow: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


def warp(m: np.ndarray, flow: FlowField) -> WarpResult:
    """Backward-bilinear warp of ``m`` by ``flow``.

    The sample point for output pixel (row r, col c) is
    (c + u[r, c], r + v[r, c]); it is valid iff it lies inside
    [0, W-1] x [0, H-1], i.e. iff every bilinear corner with nonzero weight is
    inside the raster. Invalid pixels get value 0.

    Gradients: w.r.t. the image through the bilinear weights, w.r.t. the flow
    through the image x-/y-derivatives of the bilinear surface at the sample
    point.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("image must be 2D")
    h, w = m.shape
    if h < 2 or w < 2:
        raise ValueError("image must be at least 2x2 for bilinear sampling")
    if flow.u.shape != m.shape:
        raise ValueError("flow shape must match image shape")

    cols, rows = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    sx = cols + flow.u
    sy = rows + flow.v
    valid = (sx >= 0.0) & (sx <= w - 1.0) & (sy >= 0.0) & (sy <= h - 1.0)

    # Clamp the anchor corner to W-2/H-2 so an exactly-on-boundary sample
    # (sx == W-1) uses the in-bounds cell with fractional weight 1.
    x0 = np.clip(np.floor(sx), 0, w - 2).astype(np.intp)
    y0 = np.clip(np.floor(sy), 0, h - 2).astype(np.intp)
    x1 = x0 + 1
    y1 = y0 + 1
    fx = np.where(valid, sx - x0, 0.0)
    fy = np.where(valid, sy - y0, 0.0)

    c00 = m[y0, x0]
    c01 = m[y0, x1]
    c10 = m[y1, x0]
    c11 = m[y1, x1]

    w00 = (1.0 - fy) * (1.0 - fx)
    w01 = (1.0 - fy) * fx
    w10 = fy * (1.0 - fx)
    w11 = fy * fx

    warped = np.where(valid, w00 * c00 + w01 * c01 + w10 * c10 + w11 * c11, 0.0)

    def d_image(cotangent: np.ndarray) -> np.ndarray:
        g = np.zeros_like(m)
        ct = np.where(valid, np.asarray(cotangent, dtype=np.float64), 0.0)
        np.add.at(g, (y0, x0), w00 * ct)
        np.add.at(g, (y0, x1), w01 * ct)
        np.add.at(g, (y1, x0), w10 * ct)
        np.add.at(g, (y1, x1), w11 * ct)
        return g

    def d_flow(cotangent: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ct = np.where(valid, np.asarray(cotangent, dtype=np.float64), 0.0)
        ddx = (1.0 - fy) * (c01 - c00) + fy * (c11 - c10)
        ddy = (1.0 - fx) * (c10 - c00) + fx * (c11 - c01)
        return ct * ddx, ct * ddy

    return WarpResult(warped=warped, mask=valid, d_image=d_image, d_flow=d_flow)


def masked_fraction(masks: Sequence[np.ndarray]) -> float:
    """Fraction of pixels invalid in at least one mask (union over frames)."""
    if len(masks) == 0:
        raise ValueError("at least one mask is required")
    shape = np.asarray(masks[0]).shape
    invalid = np.zeros(shape, dtype=bool)
    for mask in masks:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != shape:
            raise ValueError("masks must share shape")
        invalid |= ~mask
    return float(invalid.mean())
