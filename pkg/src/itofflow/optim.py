"""First-order optimization drivers and the finite-difference gradient oracle.

The flow optimizer replaces a learned predictor with direct per-pixel flow
variables: one flow field per non-reference timestep, descended on the
weighted total loss with gradients chained through the warp. This isolates
the loss design from any network architecture.

The toy reconstruction experiment recovers the fourth phase sample from the
other three and a wrapped depth label by gradient descent on the depth loss;
with plain gradients only pixels whose label lies on the initialization's
arctan2 branch converge, while the unwrap gradient flip resolves the wrap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.ndimage import zoom

from .core import (
    DEFAULT_EPSILON,
    SPEED_OF_LIGHT,
    DepthImage,
    MeasurementStack,
    d_max,
    reconstruct_stack,
    wrap_depth,
)
from .losses import (
    LossReport,
    LossWeights,
    _depth_and_partials,
    evaluate_total,
    loss_edge,
    loss_photo,
    loss_sim,
    loss_smooth,
    loss_tof,
)
from .sim import CaptureBundle
from .warp import FlowField, warp

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class OptimConfig:
    """First-order optimizer settings.

    method "adam" is the moment-averaged default for flow fitting; "gd" is
    plain gradient descent (used by the toy experiment). ``tolerance`` stops
    the loop once the loss delta between iterations drops below it (0
    disables). ``pyramid`` enables optional 3-level coarse-to-fine flow
    fitting.
    """

    method: str = "adam"
    step: float = 0.2
    iterations: int = 500
    tolerance: float = 0.0
    seed: int = 0
    unwrap: bool = True
    pyramid: bool = False
    pyramid_levels: int = 3

    def __post_init__(self) -> None:
        if self.method not in ("adam", "gd"):
            raise ValueError(f"method must be 'adam' or 'gd', got {self.method!r}")
        if self.step <= 0:
            raise ValueError("step must be > 0")
        if self.iterations < 1:
            raise ValueError("iteration budget must be >= 1")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")


@dataclass
class Trace:
    """Per-iteration loss reports plus the returned variables."""

    reports: list[LossReport] = field(default_factory=list)
    converged: bool = False
    final: object = None


class DivergenceError(RuntimeError):
    """Raised when a loss becomes non-finite; carries the trace so far."""

    def __init__(self, message: str, trace: Trace):
        super().__init__(message)
        self.trace = trace


class _Updater:
    """Adam / plain-GD update shared by the optimizers."""

    def __init__(self, cfg: OptimConfig, arrays: Sequence[np.ndarray]):
        self.cfg = cfg
        self.t = 0
        if cfg.method == "adam":
            self.m = [np.zeros_like(a) for a in arrays]
            self.v = [np.zeros_like(a) for a in arrays]

    def step(self, arrays: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        cfg = self.cfg
        if cfg.method == "gd":
            for a, g in zip(arrays, grads):
                a -= cfg.step * g
            return
        self.t += 1
        c1 = 1.0 - ADAM_BETA1**self.t
        c2 = 1.0 - ADAM_BETA2**self.t
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            a -= cfg.step * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


def _optimize_level(
    bundle: CaptureBundle,
    weights: LossWeights,
    cfg: OptimConfig,
    iterations: int,
    init: list[FlowField] | None,
    iteration_offset: int,
) -> tuple[list[FlowField], Trace]:
    n_flows = bundle.config.reference_timestep
    shape = (bundle.moving.height, bundle.moving.width)
    if init is None:
        arrays = [np.zeros(shape) for _ in range(2 * n_flows)]
    else:
        arrays = []
        for fl in init:
            arrays.extend([fl.u.copy(), fl.v.copy()])
    updater = _Updater(cfg, arrays)

    trace = Trace()
    best_total = math.inf
    best_arrays = [a.copy() for a in arrays]
    prev_total: float | None = None
    for k in range(iterations):
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise DivergenceError("flow variables became non-finite", trace)
        flows = [FlowField(arrays[2 * t], arrays[2 * t + 1]) for t in range(n_flows)]
        report, flow_grads, _, _ = evaluate_total(
            bundle, flows, weights, unwrap=cfg.unwrap, similarity=False
        )
        report = replace(report, iteration=iteration_offset + k)
        trace.reports.append(report)
        if not math.isfinite(report.total):
            raise DivergenceError("loss became non-finite", trace)
        if report.total < best_total:
            best_total = report.total
            best_arrays = [a.copy() for a in arrays]
        if prev_total is not None and cfg.tolerance > 0 and abs(report.total - prev_total) < cfg.tolerance:
            trace.converged = True
            break
        prev_total = report.total
        if k == iterations - 1:
            break
        grads: list[np.ndarray] = []
        for gu, gv in flow_grads:
            grads.extend([gu, gv])
        updater.step(arrays, grads)
    best = [FlowField(best_arrays[2 * t], best_arrays[2 * t + 1]) for t in range(n_flows)]
    trace.final = best
    return best, trace


def _downsample2(a: np.ndarray) -> np.ndarray:
    """2x2 block mean; odd trailing rows/columns are cropped."""
    h, w = a.shape[-2], a.shape[-1]
    a = a[..., : h - h % 2, : w - w % 2]
    return 0.25 * (a[..., ::2, ::2] + a[..., 1::2, ::2] + a[..., ::2, 1::2] + a[..., 1::2, 1::2])


def _downsample_bundle(bundle: CaptureBundle) -> CaptureBundle:
    moving = MeasurementStack(_downsample2(bundle.moving.frames), bundle.moving.meta)
    static = MeasurementStack(_downsample2(bundle.static_gt.frames), bundle.static_gt.meta)
    # Depth labels are re-derived from the downsampled static capture so the
    # optimum at this level stays exactly reachable.
    depth_gt = reconstruct_stack(static, epsilon=0.0)
    return CaptureBundle(
        config=bundle.config,
        moving=moving,
        static_gt=static,
        depth_gt=depth_gt,
        true_flows=[],
        disoccluded=[],
    )


def _upsample_flow(flow: FlowField, shape: tuple[int, int]) -> FlowField:
    zy = shape[0] / flow.u.shape[0]
    zx = shape[1] / flow.u.shape[1]
    u = zoom(flow.u, (zy, zx), order=1, mode="nearest", grid_mode=True) * zx
    v = zoom(flow.v, (zy, zx), order=1, mode="nearest", grid_mode=True) * zy
    return FlowField(u, v)


def optimize_flows(
    bundle: CaptureBundle,
    weights: LossWeights,
    cfg: OptimConfig,
    init: Sequence[FlowField] | None = None,
) -> tuple[list[FlowField], Trace]:
    """Fit one flow field per non-reference timestep by descending the total.

    Flows start at zero (or ``init``). Depth and edge gradients chain through
    the warp into the flows; smoothness gradients act on the flows directly.
    The latent-similarity weight is forced to zero here (it is defined on
    static captures and carries no flow gradient). Returns the best-loss
    iterate, which is never worse than the initial one.
    """
    if bundle.config.reference_timestep == 0:
        report, _, _, _ = evaluate_total(bundle, [], weights, unwrap=cfg.unwrap, similarity=False)
        trace = Trace(reports=[report], converged=True, final=[])
        return [], trace
    if not cfg.pyramid:
        return _optimize_level(bundle, weights, cfg, cfg.iterations, list(init) if init else None, 0)

    levels = [bundle]
    for _ in range(cfg.pyramid_levels - 1):
        levels.append(_downsample_bundle(levels[-1]))
    levels.reverse()  # coarsest first
    per_level = cfg.iterations // cfg.pyramid_levels
    budgets = [per_level] * cfg.pyramid_levels
    budgets[-1] += cfg.iterations - per_level * cfg.pyramid_levels

    flows: list[FlowField] | None = None
    merged = Trace()
    offset = 0
    for lvl, (b, budget) in enumerate(zip(levels, budgets)):
        if budget < 1:
            budget = 1
        flows, trace = _optimize_level(b, weights, cfg, budget, flows, offset)
        merged.reports.extend(trace.reports)
        merged.converged = trace.converged
        offset += len(trace.reports)
        if lvl < len(levels) - 1:
            target = (levels[lvl + 1].moving.height, levels[lvl + 1].moving.width)
            flows = [_upsample_flow(f, target) for f in flows]
    merged.final = flows
    return flows, merged  # type: ignore[return-value]


def toy_reconstruct_m3(
    m0: np.ndarray,
    m1: np.ndarray,
    m2: np.ndarray,
    label: DepthImage,
    frequency_hz: float,
    cfg: OptimConfig,
    epsilon: float = 0.0,
    initial: np.ndarray | None = None,
) -> tuple[np.ndarray, Trace]:
    """Reconstruct the fourth phase sample by descending the depth loss.

    The estimate starts at zero (or ``initial``) and is updated with
    per-pixel subgradients (pixels are independent one-dimensional problems,
    so no pixel-count normalization is applied to the step). With
    ``cfg.unwrap`` the gradient sign is flipped wherever the wrapped error
    reaches d_max / 2, which walks wrong-branch pixels through the arctan2
    discontinuity.
    """
    m0 = np.asarray(m0, dtype=np.float64)
    m1 = np.asarray(m1, dtype=np.float64)
    m2 = np.asarray(m2, dtype=np.float64)
    if not (m0.shape == m1.shape == m2.shape == label.values.shape):
        raise ValueError("rasters and label must share shape")
    dm = d_max(frequency_hz)
    m3 = np.zeros_like(m0) if initial is None else np.asarray(initial, dtype=np.float64).copy()
    if m3.shape != m0.shape:
        raise ValueError("initial value must share the raster shape")
    trace = Trace()
    for k in range(cfg.iterations):
        depth, _, d_dm3 = _depth_and_partials(m0, m1, m2, m3, frequency_hz, epsilon)
        e = np.abs(depth - label.values)
        e_eff = np.minimum(e, dm - e) if cfg.unwrap else e
        value = float(e_eff[label.valid_mask].mean())
        trace.reports.append(
            LossReport(
                iteration=k,
                l_tof=value,
                l_photo=0.0,
                l_smooth=0.0,
                l_edge=0.0,
                l_sim=0.0,
                total=value,
                masked_fraction=0.0,
            )
        )
        if not math.isfinite(value):
            raise DivergenceError("toy loss became non-finite", trace)
        if (
            cfg.tolerance > 0
            and len(trace.reports) >= 2
            and abs(trace.reports[-1].total - trace.reports[-2].total) < cfg.tolerance
        ):
            trace.converged = True
            break
        if k == cfg.iterations - 1:
            break
        sign = np.sign(depth - label.values)
        if cfg.unwrap:
            sign = np.where(e >= dm / 2.0, -sign, sign)
        g = np.where(label.valid_mask, sign * d_dm3, 0.0)
        m3 = m3 - cfg.step * g
    trace.final = m3
    return m3, trace


@dataclass
class ToyProblem:
    """Inputs for the phase-unwrap reconstruction experiment.

    The depth field is a smooth ramp spanning [0.85, 1.15] of the wrap range
    (plus a small seeded perturbation), so the wrapped label crosses the
    arctan2 branch boundary while the denominator stays positive everywhere.
    The offset exceeds the amplitude, which pins the zero-initialized
    estimate to the negative-numerator branch; ``same_branch`` marks pixels
    whose true sample shares that branch.
    """

    m0: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    m3_true: np.ndarray
    label: DepthImage
    depth_true: np.ndarray
    same_branch: np.ndarray
    frequency_hz: float
    amplitude: float = 1.0
    offset: float = 1.5


def toy_problem(
    width: int, height: int, frequency_hz: float = 20e6, seed: int = 0
) -> ToyProblem:
    """Build the synthetic both-branch reconstruction task."""
    dm = d_max(frequency_hz)
    xs, ys = np.meshgrid(
        np.linspace(0.0, 1.0, width), np.linspace(0.0, 1.0, height)
    )
    ramp = 0.5 * (xs + ys)
    rng = np.random.default_rng(seed)
    pert = np.zeros_like(ramp)
    for _ in range(3):
        a = rng.uniform(0.0, 2.0 * math.pi)
        k = rng.uniform(1.0, 3.0)
        p = rng.uniform(0.0, 2.0 * math.pi)
        pert += np.sin(2.0 * math.pi * k * (math.cos(a) * xs + math.sin(a) * ys) + p)
    depth_true = dm * (0.85 + 0.30 * ramp + 0.02 * pert / 3.0)
    amplitude, offset = 1.0, 1.5
    phi = 4.0 * math.pi * frequency_hz * depth_true / SPEED_OF_LIGHT
    m = [offset + amplitude * np.cos(phi + t) for t in (0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi)]
    label = DepthImage(wrap_depth(depth_true, frequency_hz), np.ones(depth_true.shape, bool))
    same_branch = np.sign(0.0 - m[1]) == np.sign(m[3] - m[1])
    return ToyProblem(
        m0=m[0],
        m1=m[1],
        m2=m[2],
        m3_true=m[3],
        label=label,
        depth_true=depth_true,
        same_branch=same_branch,
        frequency_hz=frequency_hz,
        amplitude=amplitude,
        offset=offset,
    )


# ---------------------------------------------------------------------------
# Finite-difference gradient oracle
# ---------------------------------------------------------------------------

FD_STEP = 1e-4
_MARGIN = 10 * FD_STEP  # keep sampled inputs this far from non-smooth sets


@dataclass
class GradCheckResult:
    op: str
    trials: int
    compared: int
    max_rel_error: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.threshold


def _central_diff(value_fn: Callable[[], float], x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central differences of a scalar function w.r.t. every element of x.

    Perturbs x in place; value_fn must read the live array.
    """
    g = np.zeros(x.shape)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = value_fn()
        flat[i] = orig - step
        fm = value_fn()
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * step)
    return g


def _rel_errors(analytic: np.ndarray, fd: np.ndarray, compare: np.ndarray | None = None) -> tuple[float, int]:
    a = analytic.ravel()
    f = fd.ravel()
    if compare is not None:
        sel = compare.ravel()
        a = a[sel]
        f = f[sel]
    if a.size == 0:
        return 0.0, 0
    scale = np.maximum(np.abs(a), np.abs(f))
    live = scale > 1e-9
    if not live.any():
        return 0.0, int(a.size)
    rel = np.abs(a - f)[live] / scale[live]
    return float(rel.max()), int(a.size)


def _check_warp(rng: np.random.Generator, trials: int) -> tuple[float, int]:
    h, w = 7, 9
    cols, rows = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    worst, compared = 0.0, 0
    for _ in range(trials):
        m = rng.uniform(-1.0, 1.0, (h, w))
        tx = rng.integers(1, w - 2, (h, w)) + rng.uniform(0.05, 0.95, (h, w))
        ty = rng.integers(1, h - 2, (h, w)) + rng.uniform(0.05, 0.95, (h, w))
        u = tx - cols
        v = ty - rows
        cot = rng.uniform(-1.0, 1.0, (h, w))
        res = warp(m, FlowField(u.copy(), v.copy()))
        g_img = res.d_image(cot)
        g_u, g_v = res.d_flow(cot)

        def value() -> float:
            return float((cot * warp(m, FlowField(u, v)).warped).sum())

        for analytic, x in ((g_img, m), (g_u, u), (g_v, v)):
            err, n = _rel_errors(analytic, _central_diff(value, x))
            worst = max(worst, err)
            compared += n
    return worst, compared


def _check_photo(rng: np.random.Generator, trials: int) -> tuple[float, int]:
    shape = (6, 8)
    worst, compared = 0.0, 0
    for _ in range(trials):
        targets = [rng.uniform(-1.0, 1.0, shape) for _ in range(2)]
        resid = [
            rng.choice([-1.0, 1.0], shape) * rng.uniform(_MARGIN * 2, 0.5, shape) for _ in range(2)
        ]
        warped = [t + r for t, r in zip(targets, resid)]
        masks = [rng.uniform(size=shape) > 0.2 for _ in range(2)]

        def value() -> float:
            return loss_photo(warped, targets, masks).value

        grads = loss_photo(warped, targets, masks).grads["warped"]
        for g, x in zip(grads, warped):
            err, n = _rel_errors(g, _central_diff(value, x))
            worst = max(worst, err)
            compared += n
    return worst, compared


def _tof_inputs(rng: np.random.Generator, unwrap: bool):
    shape = (6, 8)
    f = 20e6
    dm = d_max(f)
    amp = rng.uniform(0.8, 1.2, shape)
    off = rng.uniform(0.3, 0.7, shape)
    # keep the phase away from quadrant boundaries so neither arctan2
    # argument can cross zero under the FD step
    quadrant = rng.integers(0, 4, shape)
    phi = quadrant * (math.pi / 2) + rng.uniform(0.1, math.pi / 2 - 0.1, shape)
    depth = phi * dm / (2.0 * math.pi)
    mags = rng.uniform(0.05 * dm, 0.45 * dm, shape)
    if unwrap:
        flip = rng.uniform(size=shape) > 0.5
        mags = np.where(flip, dm - mags, mags)  # errors in (0.55, 0.95) dm too
    e_signed = rng.choice([-1.0, 1.0], shape) * mags
    label = DepthImage(wrap_depth(depth - e_signed, f), np.ones(shape, bool))
    rasters = [off + amp * np.cos(phi + t) for t in (0.0, math.pi / 2, math.pi, 1.5 * math.pi)]
    masks = [rng.uniform(size=shape) > 0.15]
    return rasters, label, f, masks


def _check_tof(rng: np.random.Generator, trials: int, unwrap: bool) -> tuple[float, int]:
    worst, compared = 0.0, 0
    for _ in range(trials):
        rasters, label, f, masks = _tof_inputs(rng, unwrap)

        def value() -> float:
            return loss_tof(*rasters, label, f, epsilon=1e-6, masks=masks, unwrap=unwrap).value

        lv = loss_tof(*rasters, label, f, epsilon=1e-6, masks=masks, unwrap=unwrap)
        for key, x in zip(("m0", "m1", "m2", "m3"), rasters):
            err, n = _rel_errors(lv.grads[key], _central_diff(value, x))
            worst = max(worst, err)
            compared += n
    return worst, compared


def _neighbor_ok(ok_x: np.ndarray, ok_y: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """A coordinate is comparable when every incident difference is safe."""
    ok = np.ones(shape, dtype=bool)
    ok[:, 1:] &= ok_x
    ok[:, :-1] &= ok_x
    ok[1:, :] &= ok_y
    ok[:-1, :] &= ok_y
    return ok


def _check_smooth(rng: np.random.Generator, trials: int) -> tuple[float, int]:
    shape = (6, 8)
    worst, compared = 0.0, 0
    for _ in range(trials):
        u = rng.uniform(-1.0, 1.0, shape)
        v = rng.uniform(-1.0, 1.0, shape)
        m = rng.uniform(-1.0, 1.0, shape)

        def value() -> float:
            return loss_smooth(FlowField(u, v), m, edge_weight=1.0).value

        lv = loss_smooth(FlowField(u.copy(), v.copy()), m, edge_weight=1.0)
        for comp, x, key in ((u, u, "u"), (v, v, "v")):
            ok = _neighbor_ok(
                np.abs(comp[:, 1:] - comp[:, :-1]) > _MARGIN,
                np.abs(comp[1:, :] - comp[:-1, :]) > _MARGIN,
                shape,
            )
            err, n = _rel_errors(lv.grads[key], _central_diff(value, x), ok)
            worst = max(worst, err)
            compared += n
    return worst, compared


def _check_edge(rng: np.random.Generator, trials: int) -> tuple[float, int]:
    shape = (6, 8)
    worst, compared = 0.0, 0
    for _ in range(trials):
        warped = rng.uniform(-1.0, 1.0, shape)
        reference = rng.uniform(-1.0, 1.0, shape)
        mask = rng.uniform(size=shape) > 0.1

        def value() -> float:
            return loss_edge(warped, reference, 1e-3, 1.0, mask).value

        lv = loss_edge(warped, reference, 1e-3, 1.0, mask)
        dx_ok = (np.abs(warped[:, 1:] - warped[:, :-1]) > _MARGIN) | ~(mask[:, 1:] & mask[:, :-1])
        dy_ok = (np.abs(warped[1:, :] - warped[:-1, :]) > _MARGIN) | ~(mask[1:, :] & mask[:-1, :])
        ok = _neighbor_ok(dx_ok, dy_ok, shape)
        err, n = _rel_errors(lv.grads["warped"], _central_diff(value, warped), ok)
        worst = max(worst, err)
        compared += n
    return worst, compared


def _check_sim(rng: np.random.Generator, trials: int, measure: str) -> tuple[float, int]:
    c, h, w = 4, 5, 6
    worst, compared = 0.0, 0
    for _ in range(trials):
        f0 = rng.normal(size=(c, h, w))
        if measure in ("l1", "l2"):
            delta = rng.choice([-1.0, 1.0], (c, h, w)) * rng.uniform(0.05, 0.6, (c, h, w))
            f1 = f0 + delta
        else:
            f1 = rng.normal(size=(c, h, w))
        stacks = [f0, f1]

        def value() -> float:
            return loss_sim(stacks, measure).value

        lv = loss_sim(stacks, measure)
        if measure == "cosine":
            norms_ok = (np.sqrt((f0 * f0).sum(axis=0)) > 0.1) & (
                np.sqrt((f1 * f1).sum(axis=0)) > 0.1
            )
            ok = np.broadcast_to(norms_ok, (c, h, w))
        else:
            ok = np.ones((c, h, w), dtype=bool)
        for g, x in zip(lv.grads["features"], stacks):
            err, n = _rel_errors(g, _central_diff(value, x), ok)
            worst = max(worst, err)
            compared += n
    return worst, compared


GRADCHECK_OPS: dict[str, tuple[Callable[[np.random.Generator, int], tuple[float, int]], float]] = {
    "warp": (_check_warp, 1e-4),
    "loss_photo": (_check_photo, 1e-6),
    "loss_tof": (lambda rng, n: _check_tof(rng, n, unwrap=False), 1e-4),
    "loss_tof_pu": (lambda rng, n: _check_tof(rng, n, unwrap=True), 1e-4),
    "loss_smooth": (_check_smooth, 1e-4),
    "loss_edge": (_check_edge, 1e-4),
    "loss_sim_l1": (lambda rng, n: _check_sim(rng, n, "l1"), 1e-6),
    "loss_sim_l2": (lambda rng, n: _check_sim(rng, n, "l2"), 1e-4),
    "loss_sim_cost": (lambda rng, n: _check_sim(rng, n, "cost"), 1e-4),
    "loss_sim_cosine": (lambda rng, n: _check_sim(rng, n, "cosine"), 1e-4),
}


def gradcheck(op: str, trials: int = 100, seed: int = 0) -> GradCheckResult:
    """Compare one op's analytic gradients against central differences.

    Inputs are sampled away from the documented non-smooth sets (zero
    residuals, zero arctan2 arguments, wrap boundaries, integer sampling
    coordinates, zero forward differences). Failures are reported, not
    raised.
    """
    if op not in GRADCHECK_OPS:
        raise KeyError(f"unknown gradcheck op {op!r}; known: {sorted(GRADCHECK_OPS)}")
    fn, threshold = GRADCHECK_OPS[op]
    rng = np.random.default_rng(np.random.SeedSequence([seed, _op_index(op)]))
    worst, compared = fn(rng, trials)
    return GradCheckResult(
        op=op, trials=trials, compared=compared, max_rel_error=worst, threshold=threshold
    )


def _op_index(op: str) -> int:
    return sorted(GRADCHECK_OPS).index(op)


def gradcheck_all(trials: int = 100, seed: int = 0) -> list[GradCheckResult]:
    """Run every registered op once, in registry order."""
    return [gradcheck(op, trials=trials, seed=seed) for op in GRADCHECK_OPS]
