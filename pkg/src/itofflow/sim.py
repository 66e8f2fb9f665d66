"""Synthetic iToF capture simulation with per-timestep motion.

Scenes are front-parallel: a constant-depth background (optionally textured)
plus rigid sprites at constant depth moving with piecewise-constant velocity
in image space. This keeps the per-timestep ground-truth flows exact, so the
simulator can emit a motion-free reference stack, wrapped ground-truth depth
per frequency and analytic flow fields for every non-reference timestep.

The correlation waveform is sinusoidal: m_theta = O + A * cos(phi + theta)
with phi = 4 * pi * f * depth / c, so the four-phase reconstruction returns
+phi exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    SPEED_OF_LIGHT,
    DepthImage,
    MeasurementStack,
    SensorConfig,
    d_max,
    wrap_depth,
)
from .warp import FlowField


@dataclass(frozen=True)
class TextureSpec:
    """Procedural modulation of the background amplitude/ambient fields.

    kind "sinusoid": product of axis sinusoids with the given period.
    kind "smooth_noise": sum of ``waves`` random plane waves (seeded), which
    is smooth and can be evaluated at shifted coordinates exactly.
    ``amplitude`` is the relative modulation depth, kept < 1 so fields stay
    positive.
    """

    kind: str = "sinusoid"
    amplitude: float = 0.2
    period: float = 16.0
    waves: int = 8
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("sinusoid", "smooth_noise"):
            raise ValueError(f"unknown texture kind {self.kind!r}")
        if not 0 <= self.amplitude < 1:
            raise ValueError("texture amplitude must be in [0, 1)")
        if self.period <= 0:
            raise ValueError("texture period must be positive")


@dataclass(frozen=True)
class Sprite:
    """Rigid front-parallel sprite: constant depth, amplitude and offset.

    ``center`` is the (x, y) position at timestep 0; ``velocity`` is added
    once per timestep (pixels/timestep). ``size`` is (width, height) for
    rectangles and the radius for disks.
    """

    shape: str
    depth: float
    amplitude: float
    offset: float
    center: tuple[float, float]
    size: tuple[float, float] | float
    velocity: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if self.shape not in ("rectangle", "disk"):
            raise ValueError(f"sprite shape must be 'rectangle' or 'disk', got {self.shape!r}")
        if self.depth <= 0:
            raise ValueError("sprite depth must be positive")
        if self.amplitude <= 0:
            raise ValueError("sprite amplitude must be positive")
        if self.offset < 0:
            raise ValueError("sprite offset must be non-negative")

    def footprint(self, xs: np.ndarray, ys: np.ndarray, center: tuple[float, float]) -> np.ndarray:
        cx, cy = center
        if self.shape == "rectangle":
            sw, sh = self.size  # type: ignore[misc]
            return (np.abs(xs - cx) <= sw / 2.0) & (np.abs(ys - cy) <= sh / 2.0)
        r = float(self.size)  # type: ignore[arg-type]
        return (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r


@dataclass(frozen=True)
class SceneSpec:
    """Scene description: background fields plus moving sprites and camera.

    ``camera_velocity`` is the image-space translation of all scene content
    per timestep; sprite velocities compose additively with it.
    """

    width: int
    height: int
    background_depth: float
    background_amplitude: float = 1.0
    background_offset: float = 0.5
    camera_velocity: tuple[float, float] = (0.0, 0.0)
    sprites: tuple[Sprite, ...] = ()
    texture: TextureSpec | None = None

    def __post_init__(self) -> None:
        if self.width < 2 or self.height < 2:
            raise ValueError("scene must be at least 2x2 pixels")
        if self.background_depth <= 0:
            raise ValueError("background depth must be positive")
        if self.background_amplitude <= 0:
            raise ValueError("background amplitude must be positive")
        if self.background_offset < 0:
            raise ValueError("background offset must be non-negative")

    def validate_depth_range(self, frequencies_hz: tuple[float, ...]) -> None:
        """Depths must lie in (0, 2 * d_max) of the lowest frequency so the
        simulation exercises at most one phase wrap."""
        limit = 2.0 * d_max(min(frequencies_hz))
        depths = [self.background_depth] + [s.depth for s in self.sprites]
        for d in depths:
            if not 0 < d < limit:
                raise ValueError(f"scene depth {d} outside (0, {limit:.3f}) for these frequencies")


def _texture_pattern(scene: SceneSpec, xs: np.ndarray, ys: np.ndarray, seed: int) -> np.ndarray:
    """Evaluate the texture pattern in [-1, 1] at (possibly shifted) coords."""
    tex = scene.texture
    assert tex is not None
    if tex.kind == "sinusoid":
        k = 2.0 * math.pi / tex.period
        return np.sin(k * xs) * np.sin(k * ys)
    rng = np.random.default_rng(tex.seed if tex.seed is not None else seed)
    angles = rng.uniform(0.0, 2.0 * math.pi, tex.waves)
    freqs = rng.uniform(0.5, 2.0, tex.waves) * (2.0 * math.pi / tex.period)
    phases = rng.uniform(0.0, 2.0 * math.pi, tex.waves)
    pattern = np.zeros_like(xs)
    for a, k, p in zip(angles, freqs, phases):
        pattern += np.sin(k * (np.cos(a) * xs + np.sin(a) * ys) + p)
    return pattern / tex.waves


def _scene_maps(
    scene: SceneSpec, timestep: int, seed: int = 0
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-pixel (depth, amplitude, offset) maps at the given timestep."""
    xs, ys = np.meshgrid(
        np.arange(scene.width, dtype=np.float64), np.arange(scene.height, dtype=np.float64)
    )
    cam = scene.camera_velocity
    depth = np.full(xs.shape, scene.background_depth)
    amplitude = np.full(xs.shape, scene.background_amplitude)
    offset = np.full(xs.shape, scene.background_offset)
    if scene.texture is not None:
        # content moved by +t*cam, so sample the base pattern at x - t*cam
        pattern = _texture_pattern(
            scene, xs - timestep * cam[0], ys - timestep * cam[1], seed
        )
        amplitude = amplitude * (1.0 + scene.texture.amplitude * pattern)
    # far sprites first so nearer sprites overwrite them
    order = sorted(range(len(scene.sprites)), key=lambda i: -scene.sprites[i].depth)
    for i in order:
        sp = scene.sprites[i]
        cx = sp.center[0] + timestep * (sp.velocity[0] + cam[0])
        cy = sp.center[1] + timestep * (sp.velocity[1] + cam[1])
        inside = sp.footprint(xs, ys, (cx, cy))
        depth[inside] = sp.depth
        amplitude[inside] = sp.amplitude
        offset[inside] = sp.offset
    return depth, amplitude, offset


def _occupancy(scene: SceneSpec, timestep: int, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Index of the front-most sprite at each (float) coordinate, -1 = background."""
    cam = scene.camera_velocity
    owner = np.full(xs.shape, -1, dtype=np.int64)
    order = sorted(range(len(scene.sprites)), key=lambda i: -scene.sprites[i].depth)
    for i in order:
        sp = scene.sprites[i]
        cx = sp.center[0] + timestep * (sp.velocity[0] + cam[0])
        cy = sp.center[1] + timestep * (sp.velocity[1] + cam[1])
        owner[sp.footprint(xs, ys, (cx, cy))] = i
    return owner


def render_measurement(
    scene: SceneSpec,
    timestep: int,
    frequency_hz: float,
    phase_shift: float,
    seed: int = 0,
) -> np.ndarray:
    """Render one correlation raster m = O + A * cos(4*pi*f*d/c + theta)."""
    depth, amplitude, offset = _scene_maps(scene, timestep, seed)
    phi = 4.0 * math.pi * frequency_hz * depth / SPEED_OF_LIGHT
    return offset + amplitude * np.cos(phi + phase_shift)


@dataclass
class CaptureBundle:
    """A simulated capture with its motion-free supervision data.

    ``true_flows[t]`` aligns timestep t to the reference under backward
    warping (flow value = content position at t minus position at reference,
    evaluated on the reference grid). ``disoccluded[t]`` marks reference
    pixels whose true-flow sample lands on different content at timestep t
    (background revealed by a moving sprite); those pixels have no correct
    photometric counterpart.
    """

    config: SensorConfig
    moving: MeasurementStack
    static_gt: MeasurementStack
    depth_gt: dict[float, DepthImage]
    true_flows: list[FlowField] = field(default_factory=list)
    disoccluded: list[np.ndarray] = field(default_factory=list)


def simulate_bundle(scene: SceneSpec, config: SensorConfig, seed: int = 0) -> CaptureBundle:
    """Render a moving capture, its static reference and exact ground truth.

    Frames follow the canonical capture order of ``config``; every frame is
    rendered at its own timestep for the moving stack and at the reference
    timestep for the static stack. Ground-truth depth is the wrapped scene
    depth at the reference timestep.
    """
    scene.validate_depth_range(config.frequencies_hz)
    metas = config.frame_meta()
    ref = config.reference_timestep

    moving = np.stack(
        [
            render_measurement(scene, meta.timestep, meta.frequency_hz, meta.phase_shift, seed)
            for meta in metas
        ]
    )
    static = np.stack(
        [
            render_measurement(scene, ref, meta.frequency_hz, meta.phase_shift, seed)
            for meta in metas
        ]
    )
    depth_ref, _, _ = _scene_maps(scene, ref, seed)
    depth_gt = {
        f: DepthImage(values=wrap_depth(depth_ref, f), valid_mask=np.ones(depth_ref.shape, bool))
        for f in config.frequencies_hz
    }

    xs, ys = np.meshgrid(
        np.arange(scene.width, dtype=np.float64), np.arange(scene.height, dtype=np.float64)
    )
    owner_ref = _occupancy(scene, ref, xs, ys)
    cam = np.asarray(scene.camera_velocity, dtype=np.float64)
    true_flows: list[FlowField] = []
    disoccluded: list[np.ndarray] = []
    for t in range(ref):
        dt = float(t - ref)
        u = np.full(xs.shape, dt * cam[0])
        v = np.full(xs.shape, dt * cam[1])
        for i, sp in enumerate(scene.sprites):
            sel = owner_ref == i
            u[sel] = dt * (sp.velocity[0] + cam[0])
            v[sel] = dt * (sp.velocity[1] + cam[1])
        sample_owner = _occupancy(scene, t, xs + u, ys + v)
        inside = (
            (xs + u >= 0)
            & (xs + u <= scene.width - 1)
            & (ys + v >= 0)
            & (ys + v <= scene.height - 1)
        )
        disoccluded.append(inside & (sample_owner != owner_ref))
        true_flows.append(FlowField(u=u, v=v))

    return CaptureBundle(
        config=config,
        moving=MeasurementStack(frames=moving, meta=metas),
        static_gt=MeasurementStack(frames=static, meta=metas),
        depth_gt=depth_gt,
        true_flows=true_flows,
        disoccluded=disoccluded,
    )


class SceneError(ValueError):
    """Scene document violates the schema; the message names the field."""


def _as_number(doc: dict, key: str, path: str, default=None, minimum=None, strict=False):
    if key not in doc:
        if default is not None:
            return default
        raise SceneError(f"{path}.{key}: required field is missing")
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SceneError(f"{path}.{key}: expected a number, got {value!r}")
    if minimum is not None and (value <= minimum if strict else value < minimum):
        op = ">" if strict else ">="
        raise SceneError(f"{path}.{key}: must be {op} {minimum}, got {value}")
    return float(value)


def _as_pair(doc: dict, key: str, path: str, default=None):
    if key not in doc:
        if default is not None:
            return default
        raise SceneError(f"{path}.{key}: required field is missing")
    value = doc[key]
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in value)
    ):
        raise SceneError(f"{path}.{key}: expected a pair of numbers, got {value!r}")
    return (float(value[0]), float(value[1]))


def scene_from_json(doc: dict) -> SceneSpec:
    """Parse a scene document (see README for the schema).

    Raises SceneError naming the offending field on schema violations.
    """
    if not isinstance(doc, dict):
        raise SceneError("scene: expected a JSON object")
    for key in ("width", "height"):
        if key not in doc:
            raise SceneError(f"scene.{key}: required field is missing")
        if isinstance(doc[key], bool) or not isinstance(doc[key], int) or doc[key] < 2:
            raise SceneError(f"scene.{key}: expected an integer >= 2, got {doc[key]!r}")
    bg = doc.get("background")
    if not isinstance(bg, dict):
        raise SceneError("scene.background: required object is missing")
    background_depth = _as_number(bg, "depth", "scene.background", minimum=0, strict=True)
    background_amplitude = _as_number(bg, "amplitude", "scene.background", default=1.0, minimum=0, strict=True)
    background_offset = _as_number(bg, "offset", "scene.background", default=0.5, minimum=0)
    camera_velocity = _as_pair(doc, "camera_velocity", "scene", default=(0.0, 0.0))

    texture = None
    if doc.get("texture") is not None:
        tex = doc["texture"]
        if not isinstance(tex, dict) or "kind" not in tex:
            raise SceneError("scene.texture.kind: required field is missing")
        try:
            texture = TextureSpec(
                kind=tex["kind"],
                amplitude=_as_number(tex, "amplitude", "scene.texture", default=0.2, minimum=0),
                period=_as_number(tex, "period", "scene.texture", default=16.0, minimum=0, strict=True),
                waves=int(_as_number(tex, "waves", "scene.texture", default=8.0, minimum=1)),
                seed=None if tex.get("seed") is None else int(tex["seed"]),
            )
        except ValueError as exc:
            raise SceneError(f"scene.texture: {exc}") from exc

    sprites = []
    raw_sprites = doc.get("sprites", [])
    if not isinstance(raw_sprites, list):
        raise SceneError("scene.sprites: expected a list")
    for i, sp in enumerate(raw_sprites):
        path = f"scene.sprites[{i}]"
        if not isinstance(sp, dict):
            raise SceneError(f"{path}: expected an object")
        shape = sp.get("shape")
        if shape not in ("rectangle", "disk"):
            raise SceneError(f"{path}.shape: expected 'rectangle' or 'disk', got {shape!r}")
        if shape == "rectangle":
            size = _as_pair(sp, "size", path)
            if size[0] <= 0 or size[1] <= 0:
                raise SceneError(f"{path}.size: rectangle sides must be positive")
        else:
            size = _as_number(sp, "size", path, minimum=0, strict=True)
        try:
            sprites.append(
                Sprite(
                    shape=shape,
                    depth=_as_number(sp, "depth", path, minimum=0, strict=True),
                    amplitude=_as_number(sp, "amplitude", path, minimum=0, strict=True),
                    offset=_as_number(sp, "offset", path, minimum=0),
                    center=_as_pair(sp, "center", path),
                    size=size,
                    velocity=_as_pair(sp, "velocity", path, default=(0.0, 0.0)),
                )
            )
        except SceneError:
            raise
        except ValueError as exc:
            raise SceneError(f"{path}: {exc}") from exc

    try:
        return SceneSpec(
            width=doc["width"],
            height=doc["height"],
            background_depth=background_depth,
            background_amplitude=background_amplitude,
            background_offset=background_offset,
            camera_velocity=camera_velocity,
            sprites=tuple(sprites),
            texture=texture,
        )
    except ValueError as exc:
        raise SceneError(f"scene: {exc}") from exc


def apply_shot_noise(stack: MeasurementStack, scale: float, seed: int) -> MeasurementStack:
    """Additive Gaussian shot-noise approximation, variance scale * |m|.

    n ~ Normal(0, scale * max(|m|, 1e-6)) per pixel. Per-frame RNG streams
    are spawned from the seed, so parallel and serial rendering agree
    bit-exactly and scale = 0 is the identity.
    """
    if scale < 0:
        raise ValueError("noise scale must be >= 0")
    if scale == 0:
        return MeasurementStack(frames=stack.frames.copy(), meta=stack.meta)
    streams = np.random.SeedSequence(seed).spawn(stack.frames.shape[0])
    noisy = np.empty_like(stack.frames)
    for i, frame in enumerate(stack.frames):
        rng = np.random.default_rng(streams[i])
        std = np.sqrt(scale * np.maximum(np.abs(frame), 1e-6))
        noisy[i] = frame + rng.normal(0.0, 1.0, frame.shape) * std
    return MeasurementStack(frames=noisy, meta=stack.meta)
