"""Binary raster file format: raw little-endian float32 plus a JSON sidecar.

A raster file is a pair sharing a basename: ``name.raw`` holds the payload
(row-major within a frame, frame-major across frames, exactly
4 * width * height * frames bytes) and ``name.json`` holds the metadata:

    {"width", "height", "frames", "frequencies_hz", "phase_shifts", "taps",
     "timestep_layout", "reference_timestep", "dtype": "f32",
     "endianness": "LE", "kind": ...}

``kind`` distinguishes measurement stacks ("measurements"), per-frequency
depth rasters ("depth") and flow fields ("flows", stored as u0, v0, u1, v1,
... per non-reference timestep). Round trips are lossless at float32.

Single frames can be exported to PFM, and value rasters to 8-bit grayscale
PNG over a fixed range for visualization (PNGs are presentation-only and are
never read back).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .core import DepthImage, MeasurementStack, SensorConfig
from .warp import FlowField

SIDECAR_REQUIRED = (
    "width",
    "height",
    "frames",
    "frequencies_hz",
    "phase_shifts",
    "taps",
    "timestep_layout",
    "reference_timestep",
    "dtype",
    "endianness",
)


class RasterFormatError(ValueError):
    """Malformed or inconsistent raster file pair."""


def _paths(path: str | Path) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix == ".json":
        return p.with_suffix(".raw"), p
    if p.suffix == ".raw":
        return p, p.with_suffix(".json")
    return p.with_suffix(p.suffix + ".raw"), p.with_suffix(p.suffix + ".json")


def write_raster(path: str | Path, frames: np.ndarray, sidecar: dict) -> tuple[Path, Path]:
    """Write a frame stack and its sidecar; returns (raw_path, json_path)."""
    frames = np.asarray(frames)
    if frames.ndim == 2:
        frames = frames[None]
    if frames.ndim != 3:
        raise RasterFormatError("frames must have shape (n, height, width)")
    raw_path, json_path = _paths(path)
    meta = dict(sidecar)
    meta.update(
        {
            "width": int(frames.shape[2]),
            "height": int(frames.shape[1]),
            "frames": int(frames.shape[0]),
            "dtype": "f32",
            "endianness": "LE",
        }
    )
    for key in SIDECAR_REQUIRED:
        meta.setdefault(key, None)
    raw_path.write_bytes(np.ascontiguousarray(frames, dtype="<f4").tobytes())
    json_path.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return raw_path, json_path


def read_raster(path: str | Path) -> tuple[np.ndarray, dict]:
    """Read a raster pair; returns (frames float32 as float64, sidecar)."""
    raw_path, json_path = _paths(path)
    if not json_path.exists():
        raise RasterFormatError(f"missing sidecar {json_path}")
    if not raw_path.exists():
        raise RasterFormatError(f"missing payload {raw_path}")
    try:
        meta = json.loads(json_path.read_text())
    except json.JSONDecodeError as exc:
        raise RasterFormatError(f"sidecar {json_path} is not valid JSON: {exc}") from exc
    for key in ("width", "height", "frames"):
        if not isinstance(meta.get(key), int):
            raise RasterFormatError(f"sidecar {json_path}: field {key!r} must be an integer")
    if meta.get("dtype") != "f32" or meta.get("endianness") != "LE":
        raise RasterFormatError(f"sidecar {json_path}: unsupported dtype/endianness")
    n, h, w = meta["frames"], meta["height"], meta["width"]
    payload = raw_path.read_bytes()
    if len(payload) != 4 * n * h * w:
        raise RasterFormatError(
            f"{raw_path}: payload is {len(payload)} bytes, expected {4 * n * h * w}"
        )
    frames = np.frombuffer(payload, dtype="<f4").reshape(n, h, w).astype(np.float64)
    return frames, meta


def config_sidecar(config: SensorConfig) -> dict:
    return {
        "frequencies_hz": list(config.frequencies_hz),
        "phase_shifts": list(config.phase_shifts),
        "taps": config.taps,
        "timestep_layout": list(config.timestep_layout),
        "reference_timestep": config.reference_timestep,
    }


def config_from_sidecar(meta: dict) -> SensorConfig:
    try:
        return SensorConfig(
            frequencies_hz=tuple(meta["frequencies_hz"]),
            taps=int(meta["taps"]),
            phase_shifts=tuple(meta["phase_shifts"]),
            timestep_layout=tuple(meta["timestep_layout"]),
            reference_timestep=int(meta["reference_timestep"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise RasterFormatError(f"sidecar does not describe a valid capture layout: {exc}") from exc


def write_stack(path: str | Path, stack: MeasurementStack, config: SensorConfig) -> tuple[Path, Path]:
    sidecar = config_sidecar(config)
    sidecar["kind"] = "measurements"
    return write_raster(path, stack.frames, sidecar)


def read_stack(path: str | Path) -> tuple[MeasurementStack, SensorConfig]:
    frames, meta = read_raster(path)
    config = config_from_sidecar(meta)
    if frames.shape[0] != config.n_frames:
        raise RasterFormatError(
            f"stack has {frames.shape[0]} frames but the layout needs {config.n_frames}"
        )
    return MeasurementStack.from_config(frames, config), config


def write_depth(
    path: str | Path, depth: dict[float, DepthImage], config: SensorConfig
) -> tuple[Path, Path]:
    """One frame per frequency, in the config's frequency order."""
    frames = np.stack([depth[f].values for f in config.frequencies_hz])
    sidecar = config_sidecar(config)
    sidecar["kind"] = "depth"
    return write_raster(path, frames, sidecar)


def read_depth(path: str | Path) -> dict[float, DepthImage]:
    frames, meta = read_raster(path)
    freqs = meta.get("frequencies_hz") or []
    if len(freqs) != frames.shape[0]:
        raise RasterFormatError("depth raster needs one frame per frequency")
    return {
        float(f): DepthImage(values=frames[i], valid_mask=np.ones(frames[i].shape, bool))
        for i, f in enumerate(freqs)
    }


def write_flows(
    path: str | Path, flows: list[FlowField], config: SensorConfig
) -> tuple[Path, Path]:
    """Flows stored as u, v frame pairs per non-reference timestep."""
    if flows:
        frames = np.stack([comp for f in flows for comp in (f.u, f.v)])
    else:
        frames = np.zeros((0, 1, 1))
    sidecar = config_sidecar(config)
    sidecar["kind"] = "flows"
    return write_raster(path, frames, sidecar)


def read_flows(path: str | Path) -> list[FlowField]:
    frames, meta = read_raster(path)
    if frames.shape[0] % 2 != 0:
        raise RasterFormatError("flow raster needs an even frame count (u, v pairs)")
    return [FlowField(frames[2 * i], frames[2 * i + 1]) for i in range(frames.shape[0] // 2)]


def write_pfm(path: str | Path, frame: np.ndarray) -> Path:
    """Single-frame grayscale PFM export (little endian, bottom-up rows)."""
    frame = np.asarray(frame, dtype="<f4")
    if frame.ndim != 2:
        raise RasterFormatError("PFM export needs a single 2D frame")
    p = Path(path)
    h, w = frame.shape
    with p.open("wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(frame[::-1]).tobytes())
    return p


def write_png(path: str | Path, values: np.ndarray, vmin: float, vmax: float) -> Path:
    """8-bit grayscale visualization over a fixed value range."""
    if vmax <= vmin:
        raise ValueError("vmax must exceed vmin")
    scaled = (np.asarray(values, dtype=np.float64) - vmin) / (vmax - vmin)
    img = (np.clip(scaled, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    p = Path(path)
    Image.fromarray(img, mode="L").save(p, format="PNG")
    return p
