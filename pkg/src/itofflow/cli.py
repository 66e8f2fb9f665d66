"""Command-line surface: simulate, reconstruct, optimize, toy, gradcheck.

Every artifact-producing command writes a run manifest next to its outputs
recording the resolved parameters, the tool version and SHA-256 hashes of all
inputs and outputs; ``itofflow rerun <manifest>`` re-executes the run and
verifies that the outputs are byte-identical.

Exit codes: 0 success, 1 verification failure, 2 input error, 3 numerical
divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    DEFAULT_EPSILON,
    SensorConfig,
    d_max,
    reconstruct_depth,
    reconstruct_stack,
)
from .losses import LossReport, LossWeights, total_loss, unwrapped_error_min
from .optim import (
    DivergenceError,
    OptimConfig,
    Trace,
    gradcheck_all,
    optimize_flows,
    toy_problem,
    toy_reconstruct_m3,
)
from .raster_io import (
    RasterFormatError,
    _paths as raster_paths,
    read_depth,
    read_raster,
    read_stack,
    write_depth,
    write_flows,
    write_pfm,
    write_png,
    write_raster,
    write_stack,
)
from .sim import CaptureBundle, SceneError, apply_shot_noise, scene_from_json, simulate_bundle
from .warp import FlowField, warp

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_INPUT = 2
EXIT_DIVERGED = 3


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_run_manifest(
    manifest_path: str | Path,
    command: str,
    params: dict,
    inputs: list[str | Path],
    outputs: list[str | Path],
) -> Path:
    doc = {
        "tool": "itofflow",
        "version": __version__,
        "command": command,
        "parameters": params,
        "seed": params.get("seed"),
        "inputs": {str(p): file_sha256(p) for p in sorted(str(x) for x in inputs)},
        "outputs": {str(p): file_sha256(p) for p in sorted(str(x) for x in outputs)},
    }
    p = Path(manifest_path)
    p.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return p


def _write_trace_csv(path: str | Path, reports: list[LossReport]) -> Path:
    lines = [LossReport.CSV_HEADER] + [r.csv_row() for r in reports]
    p = Path(path)
    p.write_text("\n".join(lines) + "\n")
    return p


def _parse_frequencies(text: str) -> list[float]:
    try:
        freqs = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise SceneError(f"--frequencies: {exc}") from exc
    if not freqs:
        raise SceneError("--frequencies: at least one frequency is required")
    return freqs


# ---------------------------------------------------------------------------
# Commands (each takes resolved, JSON-serializable parameters so a manifest
# rerun can re-invoke it verbatim)
# ---------------------------------------------------------------------------


def run_simulate(params: dict) -> int:
    scene_path = Path(params["scene"])
    if not scene_path.exists():
        print(f"error: scene file {scene_path} does not exist", file=sys.stderr)
        return EXIT_INPUT
    try:
        doc = json.loads(scene_path.read_text())
    except json.JSONDecodeError as exc:
        print(f"error: scene: not valid JSON: {exc}", file=sys.stderr)
        return EXIT_INPUT
    scene = scene_from_json(doc)
    config = SensorConfig.create(params["frequencies"], params["taps"])
    seed = params["seed"]
    bundle = simulate_bundle(scene, config, seed)
    moving = bundle.moving
    if params["noise"] > 0:
        moving = apply_shot_noise(moving, params["noise"], seed)

    prefix = params["output"]
    outputs: list[Path] = []
    outputs += write_stack(f"{prefix}_moving", moving, config)
    outputs += write_stack(f"{prefix}_static", bundle.static_gt, config)
    outputs += write_depth(f"{prefix}_depth", bundle.depth_gt, config)
    outputs += write_flows(f"{prefix}_flows", bundle.true_flows, config)
    for i, f in enumerate(config.frequencies_hz):
        outputs.append(
            write_png(f"{prefix}_depth_f{i}.png", bundle.depth_gt[f].values, 0.0, d_max(f))
        )
    write_run_manifest(f"{prefix}_manifest.json", "simulate", params, [scene_path], outputs)
    print(
        f"simulate: wrote {config.n_frames} frames over {config.n_timesteps} timesteps "
        f"({len(config.frequencies_hz)} frequencies, {config.taps} tap(s)) to {prefix}_*"
    )
    return EXIT_OK


def run_reconstruct(params: dict) -> int:
    stack, config = read_stack(params["stack"])
    depth = reconstruct_stack(stack, epsilon=params["epsilon"])
    out = params["output"]
    base = out[: -len(".raw")] if out.endswith(".raw") else out
    outputs: list[Path] = []
    outputs += write_depth(base, depth, config)
    for i, f in enumerate(config.frequencies_hz):
        outputs.append(write_png(f"{base}_f{i}.png", depth[f].values, 0.0, d_max(f)))
    inputs = list(raster_paths(params["stack"]))
    stats = []
    if params.get("gt"):
        gt = read_depth(params["gt"])
        inputs += list(raster_paths(params["gt"]))
        errors = []
        for f in config.frequencies_hz:
            if f not in gt:
                print(f"error: ground truth lacks frequency {f}", file=sys.stderr)
                return EXIT_INPUT
            err = float(np.abs(depth[f].values - gt[f].values).mean())
            errors.append(err)
            stats.append(f"mean_abs_error_m[{f:g}Hz]={err:.9g}")
        stats.append(f"mean_abs_error_m={float(np.mean(errors)):.9g}")
    write_run_manifest(f"{base}_manifest.json", "reconstruct", params, inputs, outputs)
    line = " ".join(["reconstruct:"] + stats) if stats else "reconstruct: done"
    print(line)
    return EXIT_OK


def _load_bundle(prefix: str) -> CaptureBundle:
    moving, config = read_stack(f"{prefix}_moving")
    static, config2 = read_stack(f"{prefix}_static")
    if config2 != config:
        raise RasterFormatError("moving and static stacks disagree on the capture layout")
    depth_gt = read_depth(f"{prefix}_depth")
    missing = [f for f in config.frequencies_hz if f not in depth_gt]
    if missing:
        raise RasterFormatError(f"ground-truth depth lacks frequencies {missing}")
    return CaptureBundle(config=config, moving=moving, static_gt=static, depth_gt=depth_gt)


def run_optimize(params: dict) -> int:
    bundle = _load_bundle(params["bundle"])
    config = bundle.config
    weights = LossWeights(
        lambda_smooth=params["lambda_smooth"],
        lambda_edge=params["lambda_edge"],
        lambda_sim=params["lambda_sim"],
        smooth_edge_weight=params["smooth_edge_weight"],
        edge_shift=params["edge_shift"],
        edge_eps=params["edge_eps"],
    )
    shape = (bundle.moving.height, bundle.moving.width)
    out = params["output"]
    unwrap = params["unwrap"] != "off"

    if params["iters"] == 0:
        flows = [FlowField.zeros(*shape) for _ in range(config.reference_timestep)]
        trace = Trace(reports=[], converged=False, final=flows)
    else:
        cfg = OptimConfig(
            method=params["method"],
            step=params["step"],
            iterations=params["iters"],
            seed=params["seed"],
            unwrap=unwrap,
            pyramid=params["pyramid"],
        )
        try:
            flows, trace = optimize_flows(bundle, weights, cfg)
        except DivergenceError as exc:
            _write_trace_csv(f"{out}_trace.csv", exc.trace.reports)
            print(f"error: optimization diverged: {exc}", file=sys.stderr)
            return EXIT_DIVERGED

    outputs: list[Path] = []
    outputs.append(_write_trace_csv(f"{out}_trace.csv", trace.reports))
    outputs += write_flows(f"{out}_flows", flows, config)

    warped_frames = bundle.moving.frames.copy()
    for i, meta in enumerate(config.frame_meta()):
        if meta.timestep != config.reference_timestep:
            warped_frames[i] = warp(bundle.moving.frames[i], flows[meta.timestep]).warped
    warped_stack = type(bundle.moving)(frames=warped_frames, meta=bundle.moving.meta)
    outputs += write_stack(f"{out}_warped", warped_stack, config)
    depth = reconstruct_stack(warped_stack, epsilon=params["epsilon"])
    outputs += write_depth(f"{out}_depth", depth, config)
    for i, f in enumerate(config.frequencies_hz):
        outputs.append(write_png(f"{out}_depth_f{i}.png", depth[f].values, 0.0, d_max(f)))

    report = total_loss(bundle, flows, weights, unwrap=unwrap)
    inputs = [
        Path(f"{params['bundle']}_{part}{ext}")
        for part in ("moving", "static", "depth")
        for ext in (".raw", ".json")
    ]
    write_run_manifest(f"{out}_manifest.json", "optimize", params, inputs, outputs)
    print(
        f"optimize: L_photo={report.l_photo:.6g} L_ToF={report.l_tof:.6g} "
        f"mask={100.0 * report.masked_fraction:.3f}%"
    )
    return EXIT_OK


def run_toy(params: dict) -> int:
    problem = toy_problem(params["width"], params["height"], params["freq"], params["seed"])
    dm = d_max(problem.frequency_hz)
    modes = {"on": [True], "off": [False], "both": [True, False]}[params["unwrap"]]
    out = params["output"]
    outputs: list[Path] = []
    error_rasters: dict[bool, np.ndarray] = {}
    lines = []
    for unwrap in modes:
        tag = "pu" if unwrap else "nopu"
        cfg = OptimConfig(
            method="gd",
            step=params["step"],
            iterations=params["iters"],
            seed=params["seed"],
            unwrap=unwrap,
        )
        m3, trace = toy_reconstruct_m3(
            problem.m0, problem.m1, problem.m2, problem.label, problem.frequency_hz, cfg
        )
        depth = reconstruct_depth(
            problem.m0, problem.m1, problem.m2, m3, problem.frequency_hz, epsilon=0.0
        ).values
        err = unwrapped_error_min(depth, problem.label.values, dm)
        error_rasters[unwrap] = err
        converged = err < 1e-3 * dm
        frac = float(converged.mean())
        sidecar = {"kind": "toy", "frequencies_hz": [problem.frequency_hz]}
        outputs += write_raster(f"{out}_m3_{tag}", m3[None], sidecar)
        outputs += write_raster(f"{out}_err_{tag}", err[None], sidecar)
        outputs.append(write_png(f"{out}_err_{tag}.png", err, 0.0, dm / 2.0))
        outputs.append(_write_trace_csv(f"{out}_trace_{tag}.csv", trace.reports))
        line = f"toy[{tag}]: converged={100.0 * frac:.2f}% final_L_ToF={trace.reports[-1].l_tof:.6g}"
        if not unwrap:
            same = problem.same_branch
            inter = float(np.logical_and(converged, same).sum())
            union = float(np.logical_or(converged, same).sum())
            iou = inter / union if union else 1.0
            line += f" same_branch_iou={iou:.4f}"
        lines.append(line)
    if len(modes) == 2:
        side = np.concatenate([error_rasters[True], error_rasters[False]], axis=1)
        outputs.append(write_png(f"{out}_err_side_by_side.png", side, 0.0, dm / 2.0))
    write_run_manifest(f"{out}_manifest.json", "toy", params, [], outputs)
    for line in lines:
        print(line)
    return EXIT_OK


def run_gradcheck(params: dict) -> int:
    results = gradcheck_all(trials=params["trials"], seed=params["seed"])
    header = f"{'op':<16} {'trials':>6} {'coords':>8} {'max_rel_err':>12} {'threshold':>10} status"
    print(header)
    print("-" * len(header))
    rows = []
    for r in results:
        status = "pass" if r.passed else "FAIL"
        print(
            f"{r.op:<16} {r.trials:>6} {r.compared:>8} {r.max_rel_error:>12.3e} "
            f"{r.threshold:>10.0e} {status}"
        )
        rows.append(f"{r.op},{r.trials},{r.compared},{r.max_rel_error!r},{r.threshold!r},{status}")
    if params.get("output"):
        out = params["output"]
        report_path = Path(f"{out}_gradcheck.csv")
        report_path.write_text(
            "op,trials,coords,max_rel_error,threshold,status\n" + "\n".join(rows) + "\n"
        )
        write_run_manifest(f"{out}_manifest.json", "gradcheck", params, [], [report_path])
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def run_export_pfm(params: dict) -> int:
    frames, _ = read_raster(params["stack"])
    idx = params["frame"]
    if not 0 <= idx < frames.shape[0]:
        print(f"error: frame index {idx} out of range (stack has {frames.shape[0]})", file=sys.stderr)
        return EXIT_INPUT
    out = Path(params["output"])
    write_pfm(out, frames[idx])
    inputs = list(raster_paths(params["stack"]))
    write_run_manifest(f"{out}.manifest.json", "export-pfm", params, inputs, [out])
    print(f"export-pfm: wrote frame {idx} to {out}")
    return EXIT_OK


_COMMANDS = {
    "simulate": run_simulate,
    "reconstruct": run_reconstruct,
    "optimize": run_optimize,
    "toy": run_toy,
    "gradcheck": run_gradcheck,
    "export-pfm": run_export_pfm,
}


def run_rerun(params: dict) -> int:
    manifest_path = Path(params["manifest"])
    if not manifest_path.exists():
        print(f"error: manifest {manifest_path} does not exist", file=sys.stderr)
        return EXIT_INPUT
    doc = json.loads(manifest_path.read_text())
    command = doc.get("command")
    if command not in _COMMANDS:
        print(f"error: manifest names unknown command {command!r}", file=sys.stderr)
        return EXIT_INPUT
    for path, digest in doc.get("inputs", {}).items():
        if not Path(path).exists():
            print(f"error: recorded input {path} does not exist", file=sys.stderr)
            return EXIT_INPUT
        if file_sha256(path) != digest:
            print(f"error: recorded input {path} changed since the original run", file=sys.stderr)
            return EXIT_INPUT
    code = _COMMANDS[command](doc["parameters"])
    if code != EXIT_OK:
        return code
    mismatched = [
        path for path, digest in doc.get("outputs", {}).items() if file_sha256(path) != digest
    ]
    if mismatched:
        for path in mismatched:
            print(f"verification failed: {path} differs from the recorded run", file=sys.stderr)
        return EXIT_VERIFY
    print(f"rerun: {len(doc.get('outputs', {}))} outputs byte-identical")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="itofflow",
        description="Simulation, reconstruction and flow optimization for iToF captures.",
    )
    parser.add_argument("--version", action="version", version=f"itofflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a capture bundle from a scene JSON")
    p.add_argument("scene", help="scene description (JSON, see README)")
    p.add_argument("--frequencies", default="20e6", help="comma-separated modulation frequencies in Hz")
    p.add_argument("--taps", type=int, default=1, choices=(1, 2, 4))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0, help="shot-noise scale (0 = noiseless)")
    p.add_argument("-o", "--output", required=True, help="output prefix")

    p = sub.add_parser("reconstruct", help="wrapped depth per frequency from a stack")
    p.add_argument("stack", help="measurement stack (.raw with .json sidecar)")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--gt", default=None, help="ground-truth depth raster for an error report")
    p.add_argument("-o", "--output", required=True, help="output depth raster path")

    p = sub.add_parser("optimize", help="fit per-timestep flows on a simulated bundle")
    p.add_argument("bundle", help="bundle prefix as written by simulate")
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--step", type=float, default=0.2)
    p.add_argument("--method", default="adam", choices=("adam", "gd"))
    p.add_argument("--lambda-smooth", dest="lambda_smooth", type=float, default=1.0)
    p.add_argument("--lambda-edge", dest="lambda_edge", type=float, default=0.1)
    p.add_argument("--lambda-sim", dest="lambda_sim", type=float, default=0.01)
    p.add_argument(
        "--smooth-edge-weight",
        dest="smooth_edge_weight",
        type=float,
        default=10.0,
        help="edge weighting factor inside the smoothing loss",
    )
    p.add_argument("--edge-shift", dest="edge_shift", type=float, default=100.0)
    p.add_argument("--edge-eps", dest="edge_eps", type=float, default=1e-3)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--unwrap", default="on", choices=("on", "off"))
    p.add_argument("--pyramid", action="store_true", help="3-level coarse-to-fine")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True, help="output prefix")

    p = sub.add_parser("toy", help="phase-unwrap reconstruction experiment")
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--freq", type=float, default=20e6)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--step", type=float, default=1e-2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--unwrap", default="both", choices=("on", "off", "both"))
    p.add_argument("-o", "--output", required=True, help="output prefix")

    p = sub.add_parser("gradcheck", help="finite-difference check of every registered gradient")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default=None, help="optional report prefix")

    p = sub.add_parser("export-pfm", help="export one frame of a raster as PFM")
    p.add_argument("stack")
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("rerun", help="re-execute a run from its manifest and verify outputs")
    p.add_argument("manifest")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    params = {k: v for k, v in vars(args).items() if k != "command"}
    if args.command == "simulate":
        try:
            params["frequencies"] = _parse_frequencies(params.pop("frequencies"))
        except SceneError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INPUT
    handler = _COMMANDS.get(args.command, run_rerun if args.command == "rerun" else None)
    try:
        return handler(params)
    except (SceneError, RasterFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
