"""Loss functions with values and hand-written reverse-mode gradients.

All losses are means (over pixels, frames, axes, pairs as applicable), not
sums, so weights are resolution-independent; multiply by the pixel count to
convert to per-image sums. Depth losses are in meters. Absolute-value kinks
use subgradient 0 at exactly 0.

The depth loss supports a phase-unwrap mode: the per-pixel wrapped error
e = |d_hat - d_label| is replaced by min(e, d_max - e), which equals the
candidate search over whole-wrap shifts k in {-1, 0, 1}; its gradient is the
plain gradient with the sign flipped wherever e >= d_max / 2, so unwrapping
costs one comparison in the backward pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.ndimage import uniform_filter

from .core import (
    DEFAULT_EPSILON,
    SPEED_OF_LIGHT,
    DepthImage,
    d_max,
)
from .warp import FlowField, masked_fraction, warp

_TINY = 1e-12


@dataclass
class LossValue:
    """Scalar loss with gradients per input.

    ``grads`` mirrors the input structure of the producing loss; keys are
    documented per function. Gradients are finite wherever the value is.
    """

    value: float
    grads: dict[str, Any]
    all_masked: bool = False


@dataclass(frozen=True)
class LossWeights:
    """Weights and internal parameters of the regularized total loss.

    ``smooth_edge_weight`` is the edge-weighting factor inside the smoothing
    loss (calibrated for instance-normalized measurements), ``edge_shift``
    bounds the edge-loss gradients and ``edge_eps`` stabilizes its weight
    term.
    """

    lambda_smooth: float = 1.0
    lambda_edge: float = 0.1
    lambda_sim: float = 0.01
    smooth_edge_weight: float = 10.0
    edge_shift: float = 100.0
    edge_eps: float = 1e-3

    def __post_init__(self) -> None:
        for name in ("lambda_smooth", "lambda_edge", "lambda_sim", "smooth_edge_weight", "edge_eps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.edge_shift <= 0:
            raise ValueError("edge_shift must be > 0")


@dataclass
class LossReport:
    """Per-iteration loss summary, serializable to one CSV row."""

    iteration: int
    l_tof: float
    l_photo: float
    l_smooth: float
    l_edge: float
    l_sim: float
    total: float
    masked_fraction: float
    all_masked: bool = False
    weights: LossWeights | None = None

    CSV_HEADER = "iteration,L_ToF,L_photo,L_smooth,L_edge,L_sim,total,masked_fraction"

    def csv_row(self) -> str:
        cells = [str(self.iteration)] + [
            repr(float(v))
            for v in (
                self.l_tof,
                self.l_photo,
                self.l_smooth,
                self.l_edge,
                self.l_sim,
                self.total,
                self.masked_fraction,
            )
        ]
        return ",".join(cells)


def _combine_masks(shape: tuple[int, ...], masks: Sequence[np.ndarray] | None) -> np.ndarray:
    valid = np.ones(shape, dtype=bool)
    if masks is not None:
        for m in masks:
            m = np.asarray(m, dtype=bool)
            if m.shape != shape:
                raise ValueError("mask shape mismatch")
            valid &= m
    return valid


def loss_photo(
    warped: Sequence[np.ndarray],
    targets: Sequence[np.ndarray],
    masks: Sequence[np.ndarray] | None = None,
) -> LossValue:
    """Mean absolute photometric error over unmasked pixels and frames.

    grads["warped"]: list of gradients, one per warped frame. If every pixel
    is masked the loss is defined as 0 with zero gradient and flagged.
    """
    if len(warped) != len(targets):
        raise ValueError("need one target per warped frame")
    warped = [np.asarray(w, dtype=np.float64) for w in warped]
    targets = [np.asarray(t, dtype=np.float64) for t in targets]
    shape = warped[0].shape
    valids = []
    for k, (w, t) in enumerate(zip(warped, targets)):
        if w.shape != shape or t.shape != shape:
            raise ValueError("frame shape mismatch")
        valids.append(_combine_masks(shape, None if masks is None else [masks[k]]))
    count = int(sum(v.sum() for v in valids))
    if count == 0:
        zeros = [np.zeros(shape) for _ in warped]
        return LossValue(0.0, {"warped": zeros}, all_masked=True)
    value = 0.0
    grads = []
    for w, t, v in zip(warped, targets, valids):
        res = w - t
        value += float(np.abs(res)[v].sum())
        grads.append(np.where(v, np.sign(res), 0.0) / count)
    return LossValue(value / count, {"warped": grads})


def _depth_and_partials(
    m0: np.ndarray,
    m1: np.ndarray,
    m2: np.ndarray,
    m3: np.ndarray,
    frequency_hz: float,
    epsilon: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reconstructed depth plus its partials w.r.t. m0 and m3.

    By antisymmetry d(depth)/dm2 = -d(depth)/dm0 and d(depth)/dm1 =
    -d(depth)/dm3. The stabilizer sign is piecewise constant, so it carries
    no gradient; the wrap shift into [0, d_max) is additive and carries none
    either.
    """
    x = m0 - m2
    y = m3 - m1
    s = np.where(x >= 0, 1.0, -1.0)
    xs = x + s * epsilon
    r2 = xs * xs + y * y
    k = SPEED_OF_LIGHT / (4.0 * math.pi * frequency_hz)
    phase = np.arctan2(y, xs)
    depth = k * phase
    depth = np.where(depth < 0, depth + d_max(frequency_hz), depth)
    d_dm0 = k * (-y) / r2
    d_dm3 = k * xs / r2
    return depth, d_dm0, d_dm3


def unwrapped_error_min(d_hat: np.ndarray, d_label: np.ndarray, dm: float) -> np.ndarray:
    """Wrap-corrected error as min(e, d_max - e) for e = |d_hat - d_label|."""
    e = np.abs(np.asarray(d_hat, dtype=np.float64) - np.asarray(d_label, dtype=np.float64))
    return np.minimum(e, dm - e)


def unwrapped_error_lookup(d_hat: np.ndarray, d_label: np.ndarray, dm: float) -> np.ndarray:
    """Wrap-corrected error via the candidate table over k in {-1, 0, 1}.

    With both depths in [0, d_max) the closest candidate d_hat + k * d_max is
    k = -1 when the signed difference exceeds +d_max/2, k = +1 when it is at
    or below -d_max/2, otherwise k = 0. Agrees with unwrapped_error_min
    everywhere (at |difference| = d_max/2 both candidates tie).
    """
    delta = np.asarray(d_hat, dtype=np.float64) - np.asarray(d_label, dtype=np.float64)
    k = np.where(delta > dm / 2.0, -1.0, np.where(delta <= -dm / 2.0, 1.0, 0.0))
    return np.abs(delta + k * dm)


def loss_tof(
    m0: np.ndarray,
    m1: np.ndarray,
    m2: np.ndarray,
    m3: np.ndarray,
    label: DepthImage,
    frequency_hz: float,
    epsilon: float = DEFAULT_EPSILON,
    masks: Sequence[np.ndarray] | None = None,
    unwrap: bool = True,
) -> LossValue:
    """Mean depth error between the reconstruction of m0..m3 and the label.

    The label must be wrapped into [0, d_max). With ``unwrap`` the per-pixel
    error is min(e, d_max - e) and the gradient sign is flipped wherever
    e >= d_max / 2. Gradients chain analytically through the stabilized
    arctan2 reconstruction; grads keys: "m0".."m3".
    """
    if frequency_hz <= 0:
        raise ValueError("frequency must be positive")
    rasters = [np.asarray(m, dtype=np.float64) for m in (m0, m1, m2, m3)]
    shape = rasters[0].shape
    if any(r.shape != shape for r in rasters) or label.values.shape != shape:
        raise ValueError("rasters and label must share shape")
    valid = _combine_masks(shape, masks) & label.valid_mask
    dm = d_max(frequency_hz)
    depth, d_dm0, d_dm3 = _depth_and_partials(*rasters, frequency_hz, epsilon)
    e = np.abs(depth - label.values)
    e_eff = np.minimum(e, dm - e) if unwrap else e
    count = int(valid.sum())
    zeros = {k: np.zeros(shape) for k in ("m0", "m1", "m2", "m3")}
    if count == 0:
        return LossValue(0.0, zeros, all_masked=True)
    value = float(e_eff[valid].mean())
    sign = np.sign(depth - label.values)
    if unwrap:
        sign = np.where(e >= dm / 2.0, -sign, sign)
    g = np.where(valid, sign, 0.0) / count
    grads = {
        "m0": g * d_dm0,
        "m1": -(g * d_dm3),
        "m2": -(g * d_dm0),
        "m3": g * d_dm3,
    }
    return LossValue(value, grads)


def _fdiff_x(a: np.ndarray) -> np.ndarray:
    return a[:, 1:] - a[:, :-1]


def _fdiff_y(a: np.ndarray) -> np.ndarray:
    return a[1:, :] - a[:-1, :]


def loss_smooth(flow: FlowField, m: np.ndarray, edge_weight: float) -> LossValue:
    """Edge-weighted first-order flow smoothness.

    Mean over pixels, both flow components and both image axes of
    exp(-edge_weight * |dm/dx_j|) * |dV/dx_j| with forward differences. The
    measurement is treated as constant: grads keys are "u" and "v" only.
    """
    m = np.asarray(m, dtype=np.float64)
    if flow.u.shape != m.shape:
        raise ValueError("flow and measurement must share shape")
    wx = np.exp(-edge_weight * np.abs(_fdiff_x(m)))
    wy = np.exp(-edge_weight * np.abs(_fdiff_y(m)))
    gu = np.zeros_like(flow.u)
    gv = np.zeros_like(flow.v)
    total = 0.0
    terms = 0
    for comp, grad in ((flow.u, gu), (flow.v, gv)):
        for diff_fn, wgt in ((_fdiff_x, wx), (_fdiff_y, wy)):
            d = diff_fn(comp)
            total += float((wgt * np.abs(d)).mean())
            terms += 1
            t = wgt * np.sign(d) / d.size
            if diff_fn is _fdiff_x:
                grad[:, 1:] += t
                grad[:, :-1] -= t
            else:
                grad[1:, :] += t
                grad[:-1, :] -= t
    gu /= terms
    gv /= terms
    return LossValue(total / terms, {"u": gu, "v": gv})


def loss_edge(
    warped: np.ndarray,
    reference: np.ndarray,
    edge_eps: float,
    shift: float,
    mask: np.ndarray | None = None,
) -> LossValue:
    """Edge-alignment penalty between a warped frame and the reference.

    Mean over pixels and axes of
    exp(-1 / (edge_eps + |d(reference)/dx_j|)) / (|d(warped)/dx_j| + shift):
    cheap where the reference is flat, and rewards strong warped gradients
    where the reference has edges. Gradients flow into the warped frame only
    (grads key "warped"); difference positions touching a masked pixel are
    excluded.
    """
    if shift <= 0:
        raise ValueError("shift must be > 0")
    warped = np.asarray(warped, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if warped.shape != reference.shape:
        raise ValueError("warped and reference must share shape")
    valid = _combine_masks(warped.shape, None if mask is None else [mask])
    g = np.zeros_like(warped)
    total = 0.0
    axes = 0
    for diff_fn in (_fdiff_x, _fdiff_y):
        wgt = np.exp(-1.0 / (edge_eps + np.abs(diff_fn(reference))))
        dw = diff_fn(warped)
        if diff_fn is _fdiff_x:
            pos_valid = valid[:, 1:] & valid[:, :-1]
        else:
            pos_valid = valid[1:, :] & valid[:-1, :]
        n = int(pos_valid.sum())
        axes += 1
        if n == 0:
            continue
        denom = np.abs(dw) + shift
        total += float((wgt / denom)[pos_valid].mean())
        t = np.where(pos_valid, -wgt * np.sign(dw) / (denom * denom), 0.0) / n
        if diff_fn is _fdiff_x:
            g[:, 1:] += t
            g[:, :-1] -= t
        else:
            g[1:, :] += t
            g[:-1, :] -= t
    g /= axes
    return LossValue(total / axes, {"warped": g})


def loss_sim(features: Sequence[np.ndarray], measure: str = "cosine") -> LossValue:
    """Latent-similarity loss over column vectors of feature stacks.

    Mean over ordered pairs i != j and spatial positions of the chosen
    measure applied to the channel columns: "l1"/"l2" distances, "cost"
    (negative dot product) or "cosine" (negative cosine similarity; positions
    with a zero-norm column are skipped). grads key "features": one gradient
    stack per input.
    """
    measure = measure.lower()
    if measure not in ("l1", "l2", "cost", "cosine"):
        raise ValueError(f"unknown similarity measure {measure!r}")
    stacks = [np.asarray(f, dtype=np.float64) for f in features]
    if len(stacks) < 2:
        raise ValueError("at least two feature stacks are required")
    shape = stacks[0].shape
    if any(s.shape != shape for s in stacks) or len(shape) != 3:
        raise ValueError("feature stacks must share shape (channels, H, W)")
    grads = [np.zeros(shape) for _ in stacks]
    total = 0.0
    count = 0
    for i in range(len(stacks)):
        for j in range(len(stacks)):
            if i == j:
                continue
            a, b = stacks[i], stacks[j]
            if measure == "l1":
                diff = a - b
                vals = np.abs(diff).sum(axis=0)
                ga = np.sign(diff)
                gb = -ga
                pos_valid = np.ones(vals.shape, dtype=bool)
            elif measure == "l2":
                diff = a - b
                vals = np.sqrt((diff * diff).sum(axis=0))
                safe = np.where(vals > _TINY, vals, 1.0)
                ga = np.where(vals > _TINY, diff / safe, 0.0)
                gb = -ga
                pos_valid = np.ones(vals.shape, dtype=bool)
            elif measure == "cost":
                vals = -(a * b).sum(axis=0)
                ga = -b
                gb = -a
                pos_valid = np.ones(vals.shape, dtype=bool)
            else:
                na = np.sqrt((a * a).sum(axis=0))
                nb = np.sqrt((b * b).sum(axis=0))
                pos_valid = (na > _TINY) & (nb > _TINY)
                na_s = np.where(pos_valid, na, 1.0)
                nb_s = np.where(pos_valid, nb, 1.0)
                dot = (a * b).sum(axis=0)
                vals = np.where(pos_valid, -dot / (na_s * nb_s), 0.0)
                ga = np.where(pos_valid, -b / (na_s * nb_s) + dot * a / (na_s**3 * nb_s), 0.0)
                gb = np.where(pos_valid, -a / (na_s * nb_s) + dot * b / (nb_s**3 * na_s), 0.0)
            total += float(vals[pos_valid].sum())
            count += int(pos_valid.sum())
            grads[i] += np.where(pos_valid, ga, 0.0)
            grads[j] += np.where(pos_valid, gb, 0.0)
    if count == 0:
        return LossValue(0.0, {"features": grads}, all_masked=True)
    for g in grads:
        g /= count
    return LossValue(total / count, {"features": grads})


def extract_features(m: np.ndarray, sizes: tuple[int, int] = (5, 11)) -> np.ndarray:
    """Hand-crafted modality-robust feature stack (6 channels).

    Per scale: locally mean/variance-normalized intensity plus its forward
    x/y differences. The normalization makes the channels invariant to
    a * m + b (a > 0); a constant raster maps to all zeros.
    """
    m = np.asarray(m, dtype=np.float64)
    channels = []
    for size in sizes:
        mu = uniform_filter(m, size=size, mode="nearest")
        var = uniform_filter(m * m, size=size, mode="nearest") - mu * mu
        sigma = np.sqrt(np.clip(var, 0.0, None))
        normed = np.where(sigma > _TINY, (m - mu) / np.where(sigma > _TINY, sigma, 1.0), 0.0)
        gx = np.zeros_like(normed)
        gx[:, :-1] = _fdiff_x(normed)
        gy = np.zeros_like(normed)
        gy[:-1, :] = _fdiff_y(normed)
        channels.extend([normed, gx, gy])
    return np.stack(channels)


def evaluate_total(
    bundle,
    flows: Sequence[FlowField],
    weights: LossWeights,
    unwrap: bool = True,
    epsilon: float = DEFAULT_EPSILON,
    exclude: np.ndarray | None = None,
    similarity: bool = True,
):
    """Full loss evaluation: report, flow gradients, warped frames, masks.

    Measurements are instance-normalized internally (the static targets are
    mapped through the moving stack's affine so residuals stay comparable);
    the depth loss is unaffected by this. ``exclude`` marks pixels to drop
    from the depth and photometric losses on top of the warp masks.

    Returns (LossReport, flow_grads, warped_frames, warp_masks) where
    flow_grads is one (grad_u, grad_v) pair per non-reference timestep and
    warped frames are in normalized units.
    """
    config = bundle.config
    metas = config.frame_meta()
    ref_t = config.reference_timestep
    if len(flows) != ref_t:
        raise ValueError(f"expected {ref_t} flow fields, got {len(flows)}")

    mov = bundle.moving.frames
    mu = float(mov.mean())
    sd = float(mov.std())
    if sd < 1e-12:
        sd = 1.0
    mov = (mov - mu) / sd
    stat = (bundle.static_gt.frames - mu) / sd

    shape = mov.shape[1:]
    base_exclude = None if exclude is None else np.asarray(exclude, dtype=bool)

    warped: list[np.ndarray] = []
    warp_masks: list[np.ndarray] = []
    results = []
    nonref: list[int] = []
    for i, meta in enumerate(metas):
        if meta.timestep == ref_t:
            warped.append(mov[i])
            warp_masks.append(np.ones(shape, dtype=bool))
            results.append(None)
        else:
            wr = warp(mov[i], flows[meta.timestep])
            warped.append(wr.warped)
            warp_masks.append(wr.mask)
            results.append(wr)
            nonref.append(i)

    def loss_valid(i: int) -> np.ndarray:
        v = warp_masks[i]
        return v if base_exclude is None else (v & ~base_exclude)

    grad_warped = [np.zeros(shape) for _ in metas]
    groups = config.frequency_groups()
    tof_values = []
    all_masked = False
    for f, idx in groups:
        lv = loss_tof(
            warped[idx[0]],
            warped[idx[1]],
            warped[idx[2]],
            warped[idx[3]],
            bundle.depth_gt[f],
            f,
            epsilon=epsilon,
            masks=[loss_valid(i) for i in idx],
            unwrap=unwrap,
        )
        tof_values.append(lv.value)
        all_masked |= lv.all_masked
        for key, i in zip(("m0", "m1", "m2", "m3"), idx):
            grad_warped[i] += lv.grads[key] / len(groups)
    l_tof = float(np.mean(tof_values))

    if nonref:
        lv_photo = loss_photo(
            [warped[i] for i in nonref],
            [stat[i] for i in nonref],
            [loss_valid(i) for i in nonref],
        )
        l_photo = lv_photo.value
        all_masked |= lv_photo.all_masked
    else:
        l_photo = 0.0

    flow_grads = [
        (np.zeros(shape), np.zeros(shape)) for _ in range(ref_t)
    ]

    l_smooth = 0.0
    l_edge = 0.0
    if nonref:
        reference_frame = mov[-1]
        n = len(nonref)
        for i in nonref:
            t = metas[i].timestep
            if weights.lambda_smooth > 0:
                lv = loss_smooth(flows[t], mov[i], weights.smooth_edge_weight)
                l_smooth += lv.value / n
                flow_grads[t][0][...] += weights.lambda_smooth * lv.grads["u"] / n
                flow_grads[t][1][...] += weights.lambda_smooth * lv.grads["v"] / n
            if weights.lambda_edge > 0:
                lv = loss_edge(
                    warped[i],
                    reference_frame,
                    weights.edge_eps,
                    weights.edge_shift,
                    mask=warp_masks[i],
                )
                l_edge += lv.value / n
                grad_warped[i] += weights.lambda_edge * lv.grads["warped"] / n

    for i in nonref:
        t = metas[i].timestep
        gu, gv = results[i].d_flow(grad_warped[i])
        flow_grads[t][0][...] += gu
        flow_grads[t][1][...] += gv

    l_sim = 0.0
    if similarity and weights.lambda_sim > 0:
        feats = [extract_features(fr) for fr in stat]
        l_sim = loss_sim(feats, "cosine").value

    total = (
        l_tof
        + weights.lambda_smooth * l_smooth
        + weights.lambda_edge * l_edge
        + weights.lambda_sim * l_sim
    )
    frac = masked_fraction([warp_masks[i] for i in nonref]) if nonref else 0.0
    report = LossReport(
        iteration=0,
        l_tof=l_tof,
        l_photo=l_photo,
        l_smooth=l_smooth,
        l_edge=l_edge,
        l_sim=l_sim,
        total=total,
        masked_fraction=frac,
        all_masked=all_masked,
        weights=weights,
    )
    return report, flow_grads, warped, warp_masks


def total_loss(
    bundle,
    flows: Sequence[FlowField],
    weights: LossWeights,
    unwrap: bool = True,
    epsilon: float = DEFAULT_EPSILON,
    exclude: np.ndarray | None = None,
) -> LossReport:
    """Weighted total loss of a bundle under the given flows.

    The depth loss is computed per frequency group and averaged, with
    unwrapping as requested; the similarity term is computed from static
    features when its weight is positive (it carries no flow gradient).
    """
    report, _, _, _ = evaluate_total(
        bundle, flows, weights, unwrap=unwrap, epsilon=epsilon, exclude=exclude, similarity=True
    )
    return report
