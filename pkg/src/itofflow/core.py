"""Domain types and depth arithmetic for AMCW indirect time-of-flight sensors.

An iToF camera correlates the returned light signal with phase-shifted copies
of the emitted modulation, producing one correlation sample per phase shift.
With the canonical four-sample schedule theta in {0, pi/2, pi, 3pi/2} the
phase offset of the return is arctan2(m3 - m1, m0 - m2) and depth follows as
c * phase / (4 * pi * f), unambiguous up to d_max = c / (2 f).

All rasters are row-major numpy arrays; computation is float64, file storage
is float32 (see raster_io).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
"""Speed of light in m/s."""

DEFAULT_EPSILON = 1e-6
"""Default arctan2 denominator stabilizer, in normalized measurement units."""

FOUR_PHASES = (0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi)
"""Canonical four-sample phase-shift schedule (radians)."""


@dataclass(frozen=True)
class PhysicalConstants:
    """Physical constants used by the reconstruction.

    ``epsilon`` keeps the arctan2 denominator bounded away from zero; it must
    be strictly positive for instances of this type (operations still accept
    an explicit 0 for the exact path).
    """

    c: float = SPEED_OF_LIGHT
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.c <= 0:
            raise ValueError("c must be > 0")


@dataclass(frozen=True)
class FrameMeta:
    """Per-frame capture metadata: which modality produced the raster."""

    frequency_hz: float
    phase_shift: float
    tap: int
    timestep: int


@dataclass(frozen=True)
class SensorConfig:
    """Capture layout of a single-/multi-frequency, multi-tap sensor.

    Frames are indexed canonically: frequency-major, and within one frequency
    in phase order m0..m3 (theta = 0, pi/2, pi, 3pi/2). ``timestep_layout``
    maps each canonical frame index to the timestep it is captured at:

    * 1 tap:  one phase per timestep, 4 timesteps per frequency
    * 2 taps: (m0, m2) share a timestep, (m1, m3) share the next
    * 4 taps: all four phases in one timestep

    so the number of timesteps is (4 / taps) * n_frequencies and the reference
    timestep is the last one.
    """

    frequencies_hz: tuple[float, ...]
    taps: int
    phase_shifts: tuple[float, ...]
    timestep_layout: tuple[int, ...]
    reference_timestep: int

    def __post_init__(self) -> None:
        if self.taps not in (1, 2, 4):
            raise ValueError(f"taps must be 1, 2 or 4, got {self.taps}")
        if not self.frequencies_hz:
            raise ValueError("at least one modulation frequency is required")
        if any(f <= 0 for f in self.frequencies_hz):
            raise ValueError("modulation frequencies must be positive")
        n = 4 * len(self.frequencies_hz)
        if len(self.phase_shifts) != n or len(self.timestep_layout) != n:
            raise ValueError("phase_shifts and timestep_layout must have one entry per frame")
        for k in range(len(self.frequencies_hz)):
            block = self.phase_shifts[4 * k : 4 * k + 4]
            if tuple(block) != FOUR_PHASES:
                raise ValueError(
                    f"phase shifts for frequency index {k} must be (0, pi/2, pi, 3pi/2) in order"
                )
        n_steps = 4 * len(self.frequencies_hz) // self.taps
        if sorted(set(self.timestep_layout)) != list(range(n_steps)):
            raise ValueError(f"timestep_layout must cover exactly timesteps 0..{n_steps - 1}")
        if self.reference_timestep != n_steps - 1:
            raise ValueError("reference_timestep must be the last timestep")

    @classmethod
    def create(cls, frequencies_hz: Sequence[float], taps: int) -> "SensorConfig":
        """Build the canonical layout for the given frequencies and tap count."""
        freqs = tuple(float(f) for f in frequencies_hz)
        if taps not in (1, 2, 4):
            raise ValueError(f"taps must be 1, 2 or 4, got {taps}")
        steps_per_freq = 4 // taps
        layout: list[int] = []
        for k in range(len(freqs)):
            base = k * steps_per_freq
            for p in range(4):
                if taps == 1:
                    layout.append(base + p)
                elif taps == 2:
                    layout.append(base + (p % 2))
                else:
                    layout.append(base)
        n_steps = steps_per_freq * len(freqs)
        return cls(
            frequencies_hz=freqs,
            taps=taps,
            phase_shifts=FOUR_PHASES * len(freqs),
            timestep_layout=tuple(layout),
            reference_timestep=n_steps - 1,
        )

    @property
    def n_frames(self) -> int:
        return 4 * len(self.frequencies_hz)

    @property
    def n_timesteps(self) -> int:
        return 4 * len(self.frequencies_hz) // self.taps

    def frame_meta(self) -> tuple[FrameMeta, ...]:
        """Per-frame metadata derived from the layout."""
        metas = []
        for i, (theta, t) in enumerate(zip(self.phase_shifts, self.timestep_layout)):
            p = i % 4
            if self.taps == 1:
                tap = 0
            elif self.taps == 2:
                tap = 0 if p < 2 else 1
            else:
                tap = p
            metas.append(FrameMeta(self.frequencies_hz[i // 4], theta, tap, t))
        return tuple(metas)

    def frequency_groups(self) -> list[tuple[float, list[int]]]:
        """Frame indices (m0..m3) per modulation frequency, in capture order."""
        return [
            (f, [4 * k + p for p in range(4)])
            for k, f in enumerate(self.frequencies_hz)
        ]


@dataclass
class MeasurementStack:
    """Ordered raw correlation rasters with per-frame modality tags.

    ``frames`` has shape (n_frames, height, width); frame order matches the
    canonical capture order of the producing SensorConfig.
    """

    frames: np.ndarray
    meta: tuple[FrameMeta, ...]

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3:
            raise ValueError("frames must have shape (n, height, width)")
        if len(self.meta) != self.frames.shape[0]:
            raise ValueError("one FrameMeta per frame is required")

    @classmethod
    def from_config(cls, frames: np.ndarray, config: SensorConfig) -> "MeasurementStack":
        frames = np.asarray(frames, dtype=np.float64)
        if frames.shape[0] != config.n_frames:
            raise ValueError(
                f"expected {config.n_frames} frames for this layout, got {frames.shape[0]}"
            )
        return cls(frames=frames, meta=config.frame_meta())

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]


@dataclass
class DepthImage:
    """Wrapped ToF depth raster in meters with a per-pixel validity mask."""

    values: np.ndarray
    valid_mask: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.valid_mask = np.asarray(self.valid_mask, dtype=bool)
        if self.values.shape != self.valid_mask.shape:
            raise ValueError("values and valid_mask must share shape")


@dataclass
class TapCalibration:
    """Per-pixel linear response model mapping tap-B samples onto tap A.

    r(m_B) = gain * m_B + offset. Sensors whose response depends on the phase
    shift use one instance per phase slot.
    """

    gain: np.ndarray
    offset: np.ndarray

    def __post_init__(self) -> None:
        self.gain = np.asarray(self.gain, dtype=np.float64)
        self.offset = np.asarray(self.offset, dtype=np.float64)
        if self.gain.shape != self.offset.shape:
            raise ValueError("gain and offset must share shape")
        if not np.all(self.gain > 0):
            raise ValueError("gains must be strictly positive")

    @classmethod
    def identity(cls, shape: tuple[int, int]) -> "TapCalibration":
        return cls(np.ones(shape), np.zeros(shape))

    def apply(self, m_b: np.ndarray) -> np.ndarray:
        m_b = np.asarray(m_b, dtype=np.float64)
        if m_b.shape != self.gain.shape:
            raise ValueError("raster shape does not match calibration shape")
        return self.gain * m_b + self.offset


def d_max(frequency_hz: float) -> float:
    """Unambiguous range c / (2 f) in meters."""
    if frequency_hz <= 0:
        raise ValueError(f"frequency must be positive, got {frequency_hz}")
    return SPEED_OF_LIGHT / (2.0 * frequency_hz)


def wrap_depth(depth_m, frequency_hz: float):
    """Wrap depth into [0, d_max) for the given modulation frequency."""
    return np.mod(depth_m, d_max(frequency_hz))


def reconstruct_depth(
    m0,
    m1,
    m2,
    m3,
    frequency_hz: float,
    epsilon: float = DEFAULT_EPSILON,
) -> DepthImage:
    """Recover wrapped depth from the four phase samples.

    The arctan2 denominator m0 - m2 is shifted by sign(m0 - m2) * epsilon
    (with sign(0) := +1) so its magnitude never drops below epsilon. The
    phase, returned by arctan2 in (-pi, pi], is mapped into [0, 2*pi) by
    adding a full turn where negative, which places the depth in [0, d_max).

    The result is invariant under m_i -> a * m_i + b (a > 0) on the exact
    epsilon = 0 path because the ratio of sample differences cancels both.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    rasters = [np.asarray(m, dtype=np.float64) for m in (m0, m1, m2, m3)]
    shape = rasters[0].shape
    if any(r.shape != shape for r in rasters):
        raise ValueError("the four phase rasters must share shape")
    x = rasters[0] - rasters[2]
    y = rasters[3] - rasters[1]
    s = np.where(x >= 0, 1.0, -1.0)
    phase = np.arctan2(y, x + s * epsilon)
    dm = d_max(frequency_hz)
    depth = (SPEED_OF_LIGHT / (4.0 * math.pi * frequency_hz)) * phase
    depth = np.where(depth < 0, depth + dm, depth)
    return DepthImage(values=depth, valid_mask=np.ones(shape, dtype=bool))


def combine_taps(m_a, m_b, calibration: TapCalibration | None = None) -> np.ndarray:
    """Two-tap difference m_A - r(m_B) with optional response calibration."""
    m_a = np.asarray(m_a, dtype=np.float64)
    m_b = np.asarray(m_b, dtype=np.float64)
    if m_a.shape != m_b.shape:
        raise ValueError("tap rasters must share shape")
    if calibration is None:
        return m_a - m_b
    return m_a - calibration.apply(m_b)


def fit_tap_calibration(static_pairs: Sequence[tuple[np.ndarray, np.ndarray]]) -> TapCalibration:
    """Least-squares per-pixel (gain, offset) mapping tap-B onto tap-A samples.

    Requires at least two static capture pairs. Pixels where m_B has no
    variance fall back to gain 1 and offset mean(m_A - m_B).
    """
    if len(static_pairs) < 2:
        raise ValueError("at least two static capture pairs are required")
    a = np.stack([np.asarray(p[0], dtype=np.float64) for p in static_pairs])
    b = np.stack([np.asarray(p[1], dtype=np.float64) for p in static_pairs])
    if a.shape != b.shape:
        raise ValueError("tap rasters must share shape")
    mean_a = a.mean(axis=0)
    mean_b = b.mean(axis=0)
    var_b = ((b - mean_b) ** 2).mean(axis=0)
    cov = ((b - mean_b) * (a - mean_a)).mean(axis=0)
    degenerate = var_b <= 1e-12
    gain = np.where(degenerate, 1.0, cov / np.where(degenerate, 1.0, var_b))
    offset = mean_a - gain * mean_b
    return TapCalibration(gain=gain, offset=offset)


def instance_normalize(stack: MeasurementStack) -> MeasurementStack:
    """Zero-mean unit-std normalization over all frames of the stack jointly.

    A near-constant stack (std < 1e-12) is divided by 1 instead. This does
    not change the epsilon = 0 depth reconstruction, which is invariant to
    uniform scaling and translation of the measurements.
    """
    if stack.frames.size == 0:
        raise ValueError("stack must be nonempty")
    mu = float(stack.frames.mean())
    sd = float(stack.frames.std())
    if sd < 1e-12:
        sd = 1.0
    return MeasurementStack(frames=(stack.frames - mu) / sd, meta=stack.meta)


def reconstruct_stack(
    stack: MeasurementStack,
    epsilon: float = DEFAULT_EPSILON,
    calibration: TapCalibration | None = None,
) -> dict[float, DepthImage]:
    """Wrapped depth per modulation frequency from a full measurement stack.

    Two-tap stacks are combined first (m0 - r(m2) and m1 - r(m3), one
    difference per timestep); the combined pair feeds the same stabilized
    reconstruction via (c0, c1, 0, 0), which leaves the arctan2 arguments
    unchanged. Single- and four-tap stacks reconstruct from the raw phases.
    """
    groups: dict[float, list[tuple[float, np.ndarray, int]]] = {}
    for frame, meta in zip(stack.frames, stack.meta):
        groups.setdefault(meta.frequency_hz, []).append((meta.phase_shift, frame, meta.tap))
    out: dict[float, DepthImage] = {}
    for freq, entries in groups.items():
        if len(entries) != 4:
            raise ValueError(
                f"need 4 phase samples per frequency, got {len(entries)} at {freq} Hz"
            )
        entries.sort(key=lambda e: e[0])
        phases = tuple(e[0] for e in entries)
        if not np.allclose(phases, FOUR_PHASES):
            raise ValueError(f"unexpected phase schedule {phases} at {freq} Hz")
        m = [e[1] for e in entries]
        taps = {e[2] for e in entries}
        if len(taps) == 2:
            c0 = combine_taps(m[0], m[2], calibration)
            c1 = combine_taps(m[1], m[3], calibration)
            zero = np.zeros_like(c0)
            out[freq] = reconstruct_depth(c0, c1, zero, zero, freq, epsilon)
        else:
            out[freq] = reconstruct_depth(m[0], m[1], m[2], m[3], freq, epsilon)
    return out
