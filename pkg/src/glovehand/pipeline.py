"""Glove trace -> intent -> (optional predictor) -> closed-loop simulation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .controller import ControllerConfig
from .hand import HandProfile
from .intent import GloveProfile, GloveTrace, IntentTrace, decimate, estimate_intent
from .plant import EpisodeResult, Plant, PlantConfig, run_episode
from .predictor import predict_stream, xcorr_lag
from .se3 import Pose, rodrigues_exp, rotation_log

AXES = "xyz"


@dataclass(frozen=True)
class PipelineConfig:
    # glove-to-hand transport and processing delay applied to every command
    latency_s: float = 0.4
    rotation_only: bool = True
    settle_s: float = 1.0
    period_s: float = 0.06
    lag_axis: str = "z"
    max_lag_samples: int = 30

    def __post_init__(self):
        if self.latency_s < 0:
            raise ValueError("latency_s must be non-negative")
        if not self.period_s > 0:
            raise ValueError("period_s must be positive")
        if self.lag_axis not in AXES:
            raise ValueError("lag_axis must be x, y or z")


@dataclass
class PipelineResult:
    t: np.ndarray                 # intent sample times, s
    intent: np.ndarray            # (n, 3) estimated rotation intent, rad
    command: np.ndarray           # (n, 3) rotation sent to the hand, rad
    object_rotation: np.ndarray   # (n, 3) object rotation vector relative to the start
    episode: EpisodeResult
    lag_samples: int
    lag_s: float
    models: dict = field(default_factory=dict)


def decimation_factor(glove: GloveProfile, period_s: float) -> int:
    f = period_s * glove.sample_rate_hz
    k = int(round(f))
    if k < 1 or abs(f - k) > 1e-6:
        raise ValueError(f"period {period_s} s is not a whole number of glove samples")
    return k


def command_signal(intent_rad: np.ndarray, models: dict) -> np.ndarray:
    """Per axis: the model's prediction once its window is full, else the
    raw intent."""
    cmd = intent_rad.copy()
    for axis, params in models.items():
        col = AXES.index(axis)
        sp = predict_stream(params, np.rad2deg(intent_rad[:, col]))
        cmd[sp.index, col] = np.deg2rad(sp.value)
    return cmd


def run_pipeline(trace: GloveTrace, glove: GloveProfile, hand: HandProfile,
                 models: dict | None = None, cfg: PipelineConfig = PipelineConfig(),
                 plant_cfg: PlantConfig = PlantConfig(),
                 ctrl_cfg: ControllerConfig = ControllerConfig(),
                 intent: IntentTrace | None = None) -> PipelineResult:
    """``models`` maps axis names to trained predictors; axes without a model
    forward the raw intent."""
    _check_models(dict(models or {}), cfg)
    k = decimation_factor(glove, cfg.period_s)
    if intent is None:
        intent = estimate_intent(trace, glove, hand, rotation_only=cfg.rotation_only)
    return simulate_intent(intent, k, hand, models, cfg, plant_cfg, ctrl_cfg)


def intent_decimation(intent: IntentTrace, period_s: float) -> int:
    """Decimation factor that brings a uniformly sampled intent trace to
    ``period_s``."""
    dt = np.diff(intent.t)
    if dt.size == 0 or np.any(dt <= 0):
        raise ValueError("intent times must be strictly increasing")
    f = period_s / float(np.mean(dt))
    k = int(round(f))
    if k < 1 or abs(f - k) > 1e-3 or np.ptp(dt) > 1e-6 * max(1.0, float(np.mean(dt))):
        raise ValueError(f"intent sampling does not divide the {period_s} s period")
    return k


def simulate_intent(intent: IntentTrace, factor: int, hand: HandProfile,
                    models: dict | None = None, cfg: PipelineConfig = PipelineConfig(),
                    plant_cfg: PlantConfig = PlantConfig(),
                    ctrl_cfg: ControllerConfig = ControllerConfig()) -> PipelineResult:
    """Stream a cumulative intent (decimated by ``factor``) to the closed loop,
    delayed by ``cfg.latency_s`` and optionally led by per-axis predictors."""
    models = dict(models or {})
    _check_models(models, cfg)
    t = decimate(intent.t, factor) - intent.t[0]
    rot = decimate(intent.dtheta, factor)
    disp = np.zeros_like(rot) if cfg.rotation_only else decimate(intent.d, factor)
    if t.size < 2:
        raise ValueError("intent trace is too short")
    cmd = command_signal(rot, models)

    start = Plant(hand, plant_cfg, ctrl_cfg.squeeze_depth).initial_state().object_pose

    def goal(tt: float) -> Pose:
        i = int(np.floor((tt - cfg.latency_s) / cfg.period_s + 1e-9))
        if i < 0:
            return start
        i = min(i, t.size - 1)
        return Pose(rodrigues_exp(cmd[i]) @ start.rotation, start.origin + disp[i])

    duration = t[-1] + cfg.latency_s + cfg.settle_s
    ep = run_episode(hand, plant_cfg, ctrl_cfg, goal, duration=duration)
    obj = np.array([rotation_log(R @ start.rotation.T) for R in _rotations(ep)])
    obj_at = np.column_stack([np.interp(t, ep.t, obj[:, j]) for j in range(3)])
    col = AXES.index(cfg.lag_axis)
    lag = xcorr_lag(obj_at[:, col], rot[:, col], min(cfg.max_lag_samples, t.size - 1))
    return PipelineResult(t, rot, cmd, obj_at, ep, lag, lag * cfg.period_s, models)


def _check_models(models: dict, cfg: PipelineConfig) -> None:
    for axis, p in models.items():
        if axis not in AXES:
            raise ValueError(f"unknown axis {axis!r}")
        if abs(p.period_s - cfg.period_s) > 1e-9:
            raise ValueError(f"model for {axis} expects a {p.period_s} s period, pipeline uses {cfg.period_s} s")


def _rotations(ep: EpisodeResult):
    from .se3 import rotation_from_quat
    return [rotation_from_quat(q) for q in ep.quat]


def lag_reduction(baseline_lag: float, predicted_lag: float) -> float:
    """Fraction by which the absolute lag shrank (1 = fully removed)."""
    if baseline_lag == 0:
        return 0.0 if predicted_lag == 0 else -np.inf
    return 1.0 - abs(predicted_lag) / abs(baseline_lag)
