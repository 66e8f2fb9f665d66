"""Optical-flow motion compensation toolkit for indirect time-of-flight cameras."""

__version__ = "0.1.0"

from .core import (
    DEFAULT_EPSILON,
    SPEED_OF_LIGHT,
    DepthImage,
    FrameMeta,
    MeasurementStack,
    PhysicalConstants,
    SensorConfig,
    TapCalibration,
    combine_taps,
    d_max,
    fit_tap_calibration,
    instance_normalize,
    reconstruct_depth,
    reconstruct_stack,
    wrap_depth,
)
from .losses import (
    LossReport,
    LossValue,
    LossWeights,
    extract_features,
    loss_edge,
    loss_photo,
    loss_sim,
    loss_smooth,
    loss_tof,
    total_loss,
)
from .optim import (
    DivergenceError,
    GradCheckResult,
    OptimConfig,
    Trace,
    gradcheck,
    gradcheck_all,
    optimize_flows,
    toy_problem,
    toy_reconstruct_m3,
)
from .sim import (
    CaptureBundle,
    SceneSpec,
    Sprite,
    TextureSpec,
    apply_shot_noise,
    render_measurement,
    simulate_bundle,
)
from .warp import FlowField, WarpResult, masked_fraction, warp

__all__ = [
    "DEFAULT_EPSILON",
    "SPEED_OF_LIGHT",
    "CaptureBundle",
    "DepthImage",
    "DivergenceError",
    "FlowField",
    "FrameMeta",
    "GradCheckResult",
    "LossReport",
    "LossValue",
    "LossWeights",
    "MeasurementStack",
    "OptimConfig",
    "PhysicalConstants",
    "SceneSpec",
    "SensorConfig",
    "Sprite",
    "TapCalibration",
    "TextureSpec",
    "Trace",
    "WarpResult",
    "apply_shot_noise",
    "combine_taps",
    "d_max",
    "extract_features",
    "fit_tap_calibration",
    "gradcheck",
    "gradcheck_all",
    "instance_normalize",
    "loss_edge",
    "loss_photo",
    "loss_sim",
    "loss_smooth",
    "loss_tof",
    "masked_fraction",
    "optimize_flows",
    "reconstruct_depth",
    "reconstruct_stack",
    "render_measurement",
    "simulate_bundle",
    "total_loss",
    "toy_problem",
    "toy_reconstruct_m3",
    "warp",
    "wrap_depth",
]
