"""Command-line entry point: ``glovehand <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 invalid input, 3 numerical failure
(a ``diagnostic.json`` is written to the output directory).
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .controller import ControllerConfig, GainSet
from .hand import load_profile
from .intent import (IntentTrace, decimate, estimate_intent, generate_rigid_motion_trace,
                     generate_sigmoid_trace, load_glove_profile, pca_analysis, read_glove_csv,
                     read_intent_csv, write_glove_csv, write_intent_csv)
from .pipeline import (AXES, PipelineConfig, decimation_factor, intent_decimation, run_pipeline,
                       simulate_intent)
from .plant import NonConvergenceError, PlantConfig, run_episode, write_trajectory_csv
from .predictor import (LstmParams, TrainConfig, TrainingDivergedError, predict_stream, train_series,
                        xcorr_lag)
from .se3 import Pose, rodrigues_exp, rotation_from_quat, rotation_log

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    def __init__(self, message: str, details: dict | None = None):
        super().__init__(message)
        self.details = details or {}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


# -- helpers --------------------------------------------------------------------

def _fmt(x) -> str:
    return f"{x:.10g}"


def _write_rows(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in r])
    return path


def _write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def _dataclass_kwargs(cls, data: dict, section: str) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown {section} keys: {', '.join(sorted(unknown))}")
    return dict(data)


def controller_from_config(data: dict) -> tuple[ControllerConfig, dict]:
    """Controller settings from the config file's ``controller`` section.
    Gains are returned separately as ``gains_k`` / ``gains_d`` lists."""
    keymap = {"eta": "eta", "dt_s": "dt", "squeeze_depth_m": "squeeze_depth",
              "rotation_error_tol_rad": "rotation_error_tol", "max_steps": "max_steps",
              "contact_model": "contact_model", "torque_step_factor": "torque_step_factor"}
    kw, gains = {}, {}
    for key, val in data.items():
        if key in ("gains_k", "gains_d"):
            gains[key] = val
        elif key in keymap:
            kw[keymap[key]] = val
        else:
            raise ValueError(f"unknown controller key {key!r}")
    return ControllerConfig(**kw), gains


def _gains(gains: dict, k3: int) -> GainSet | None:
    if not gains:
        return None
    K = np.asarray(gains.get("gains_k", [5.0] * k3), dtype=float)
    D = np.asarray(gains.get("gains_d", [0.1] * k3), dtype=float)
    if K.size == 1:
        K = np.full(k3, K.item())
    if D.size == 1:
        D = np.full(k3, D.item())
    if K.size != k3 or D.size != k3:
        raise ValueError(f"gains need {k3} entries")
    return GainSet(K, D)


class Run:
    """Resolved inputs shared by the subcommands."""

    def __init__(self, args, config: dict):
        self.args = args
        self.config = config
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.plots = not args.no_plots
        self.hand = load_profile(args.hand)
        self.glove = load_glove_profile(args.glove)
        self.ctrl, gains = controller_from_config(config.get("controller", {}))
        self.gains = _gains(gains, self.hand.k3)
        self.plant = PlantConfig(**_dataclass_kwargs(PlantConfig, config.get("plant", {}), "plant"))
        self.train = config.get("train", {})

    def path(self, name: str) -> Path:
        return self.out / name


def _load_intent(run: Run, args) -> IntentTrace:
    if getattr(args, "intent", None):
        return read_intent_csv(args.intent)
    if getattr(args, "trace", None):
        return estimate_intent(read_glove_csv(args.trace), run.glove, run.hand,
                               rotation_only=getattr(args, "rotation_only", False))
    raise UsageError("one of --intent or --trace is required")


def _models(specs) -> dict:
    """``axis=path`` pairs (a bare path is taken as the z model)."""
    out = {}
    for spec in specs or []:
        axis, _, path = spec.rpartition("=")
        axis = axis or "z"
        if axis not in AXES:
            raise ValueError(f"bad model spec {spec!r}; use AXIS=PATH")
        out[axis] = LstmParams.load(path)
    return out


# -- subcommands ------------------------------------------------------------------

def cmd_gen_data(run: Run, args) -> int:
    if args.kind == "sigmoid":
        st = generate_sigmoid_trace(args.amplitude_deg, args.midpoint_s, args.steepness, args.wavelets,
                                    args.rate_hz, args.seed, noise_deg=args.noise_deg,
                                    glove=run.glove, hand=run.hand)
        trace, truth_rot, truth_d = st.trace, st.intent, np.zeros_like(st.intent)
    else:
        trace, motion = generate_rigid_motion_trace(args.duration_s, args.rate_hz, args.seed,
                                                    noise_deg=args.noise_deg, glove=run.glove,
                                                    hand=run.hand)
        truth_rot, truth_d = motion[:, :3], motion[:, 3:]
    write_glove_csv(trace, run.path("glove_trace.csv"))
    write_intent_csv(IntentTrace(trace.t, truth_rot, truth_d), run.path("intent_truth.csv"))
    if run.plots:
        from .plotting import plot_glove_trace
        plot_glove_trace(trace.t, trace.values, run.glove.names, run.path("glove_trace.png"))
    print(f"wrote {len(trace)} samples to {run.path('glove_trace.csv')}")
    return EXIT_OK


def cmd_intent(run: Run, args) -> int:
    trace = read_glove_csv(args.trace)
    trace.check_ranges(run.glove)
    intent = estimate_intent(trace, run.glove, run.hand, rotation_only=args.rotation_only)
    write_intent_csv(intent, run.path("intent.csv"))
    rows = []
    for t, pose in zip(intent.t, intent.goal_poses()):
        rows.append([t, *pose.quaternion(), *pose.origin])
    _write_rows(run.path("goal_poses.csv"), ["t_s", "qw", "qx", "qy", "qz", "px", "py", "pz"], rows)
    if run.plots:
        from .plotting import plot_intent
        truth = read_intent_csv(args.truth).dtheta if args.truth else None
        plot_intent(intent.t, intent.dtheta, run.path("intent.png"), truth)
    final = np.rad2deg(intent.dtheta[-1])
    print("final rotation intent [deg]: " + " ".join(f"{a}={v:.3f}" for a, v in zip(AXES, final)))
    return EXIT_OK


def cmd_pca(run: Run, args) -> int:
    traces = [read_glove_csv(p) for p in args.trace]
    for tr in traces:
        if tr.values.shape[1] != run.glove.k:
            raise ValueError(f"trace has {tr.values.shape[1]} channels, glove profile has {run.glove.k}")
    res = pca_analysis(traces)
    cum = np.cumsum(res.explained_ratio)
    k = run.glove.k
    rows = []
    for i in range(k):
        comp = res.components[:, i] if i < res.components.shape[1] else np.zeros(k)
        rows.append([i + 1, res.eigenvalues[i], res.explained_ratio[i], cum[i], *comp])
    header = ["component", "eigenvalue_deg2", "explained_ratio", "cumulative_ratio"] + run.glove.names
    _write_rows(run.path("pca.csv"), header, rows)
    if run.plots:
        from .plotting import plot_pca
        plot_pca(res.eigenvalues, res.explained_ratio, run.path("pca.png"))
    n95 = int(np.searchsorted(cum, 0.95 - 1e-12) + 1)
    print(f"components for 95% variance: {n95}; first three hold {cum[min(2, k - 1)]:.4f}")
    return EXIT_OK


def _train_cfg(run: Run, args) -> TrainConfig:
    kw = _dataclass_kwargs(TrainConfig, run.train, "train")
    for name in ("lr", "epochs", "hidden_size", "optimizer", "batch_size"):
        val = getattr(args, name)
        if val is not None:
            kw[name] = val
    kw["seed"] = args.seed
    return TrainConfig(**kw)


def cmd_train(run: Run, args) -> int:
    intent = _load_intent(run, args)
    k = intent_decimation(intent, args.period_s)
    rot_deg = np.rad2deg(decimate(intent.dtheta, k))
    cfg = _train_cfg(run, args)
    for axis in args.axes:
        try:
            res = train_series(rot_deg[:, AXES.index(axis)].copy(), TrainConfig(**{**asdict(cfg), "axis": axis}),
                               args.window, args.horizon, args.period_s)
        except TrainingDivergedError as exc:
            raise NumericalFailure(f"training diverged for axis {axis}",
                                   {"axis": axis, "epoch": exc.epoch, "loss": exc.loss}) from exc
        res.params.save(run.path(f"model_{axis}.json"))
        val = res.val_loss if res.val_loss is not None else np.full(len(res.train_loss), np.nan)
        _write_rows(run.path(f"loss_{axis}.csv"), ["epoch", "train_mse_deg2", "val_mse_deg2"],
                    [[i, a, b] for i, (a, b) in enumerate(zip(res.train_loss, val))])
        if run.plots:
            from .plotting import plot_loss
            plot_loss(res.train_loss, res.val_loss, run.path(f"loss_{axis}.png"), f"axis {axis}")
        print(f"axis {axis}: final train MSE {res.train_loss[-1]:.4f} deg^2, "
              f"validation {val[-1]:.4f} deg^2")
    return EXIT_OK


def cmd_predict(run: Run, args) -> int:
    models = _models(args.model)
    if not models:
        raise UsageError("at least one --model is required")
    intent = _load_intent(run, args)
    truth = read_intent_csv(args.truth) if args.truth else None
    report = []
    for axis, params in models.items():
        k = intent_decimation(intent, params.period_s)
        t = decimate(intent.t, k)
        sig = np.rad2deg(decimate(intent.dtheta[:, AXES.index(axis)], k))
        sp = predict_stream(params, sig, t0=float(t[0]))
        if sp.index.size <= 2 * params.m:
            raise ValueError(f"intent trace too short for a {params.r}-sample window")
        max_lag = min(args.max_lag, sp.index.size - 1)
        lag = xcorr_lag(sp.value, sig[sp.index], max_lag)
        row = [axis, lag, lag * params.period_s]
        tr_sig = None
        if truth is not None:
            tr_sig = np.rad2deg(decimate(truth.dtheta[:, AXES.index(axis)], k))
            if tr_sig.size != sig.size:
                raise ValueError("truth and intent traces differ in length")
            lag_t = xcorr_lag(sp.value, tr_sig[sp.index], max_lag)
            row += [lag_t, lag_t * params.period_s]
        else:
            row += ["", ""]
        report.append(row)
        _write_rows(run.path(f"prediction_{axis}.csv"),
                    ["t_s", "intent_deg", "predicted_deg", "t_target_s"],
                    [[t[i], sig[i], v, tt] for i, v, tt in zip(sp.index, sp.value, sp.t_target)])
        if run.plots:
            from .plotting import plot_prediction
            plot_prediction(t, sig, t[sp.index], sp.value, run.path(f"prediction_{axis}.png"), tr_sig)
        print(f"axis {axis}: best alignment lag {lag} samples ({lag * params.period_s:+.2f} s)")
    _write_rows(run.path("lag_report.csv"),
                ["axis", "lag_samples", "lag_s", "lag_vs_truth_samples", "lag_vs_truth_s"], report)
    return EXIT_OK


def _goal_from_args(args, start: Pose) -> Pose:
    rv = np.deg2rad([args.goal_rot_x_deg, args.goal_rot_y_deg, args.goal_rot_z_deg])
    dp = np.array([args.goal_dx_m, args.goal_dy_m, args.goal_dz_m])
    return Pose(rodrigues_exp(rv) @ start.rotation, start.origin + dp)


def _trajectory_outputs(run: Run, ep, stem: str = "trajectory") -> None:
    write_trajectory_csv(ep, run.path(f"{stem}.csv"))
    if run.plots:
        from .plotting import plot_trajectory
        R0 = rotation_from_quat(ep.quat[0]).T
        rv = np.array([rotation_log(rotation_from_quat(q) @ R0) for q in ep.quat])
        grv = np.array([rotation_log(rotation_from_quat(q) @ R0) for q in ep.goal_quat])
        plot_trajectory(ep.t, ep.q, ep.tau, rv, run.path(f"{stem}.png"), ep.goal_t, grv)


def _pipeline_outputs(run: Run, res, cfg: PipelineConfig) -> None:
    _trajectory_outputs(run, res.episode)
    header = (["t_s"] + [f"intent_{a}_deg" for a in AXES] + [f"command_{a}_deg" for a in AXES]
              + [f"object_{a}_deg" for a in AXES])
    data = np.column_stack([res.t, np.rad2deg(res.intent), np.rad2deg(res.command),
                            np.rad2deg(res.object_rotation)])
    _write_rows(run.path("pipeline.csv"), header, data)
    _write_json(run.path("summary.json"), {
        "lag_axis": cfg.lag_axis, "lag_samples": int(res.lag_samples), "lag_s": float(res.lag_s),
        "latency_s": cfg.latency_s, "predicted_axes": sorted(res.models)})
    if run.plots:
        from .plotting import plot_pipeline
        plot_pipeline(res.t, res.intent, res.command, res.object_rotation, run.path("pipeline.png"),
                      AXES.index(cfg.lag_axis))
    print(f"object lags intent about {cfg.lag_axis} by {res.lag_samples} samples ({res.lag_s:+.2f} s)")


def _pipeline_cfg(args) -> PipelineConfig:
    return PipelineConfig(latency_s=args.latency_s, rotation_only=not args.with_translation,
                          settle_s=args.settle_s, period_s=args.period_s, lag_axis=args.lag_axis)


def cmd_simulate(run: Run, args) -> int:
    if args.intent:
        cfg = _pipeline_cfg(args)
        intent = read_intent_csv(args.intent)
        res = simulate_intent(intent, intent_decimation(intent, cfg.period_s), run.hand,
                              _models(args.model), cfg, run.plant, run.ctrl)
        _pipeline_outputs(run, res, cfg)
        return EXIT_OK
    from .plant import Plant
    start = Plant(run.hand, run.plant, run.ctrl.squeeze_depth).initial_state().object_pose
    goal = _goal_from_args(args, start)
    ep = run_episode(run.hand, run.plant, run.ctrl, goal, gains=run.gains)
    _trajectory_outputs(run, ep)
    summary = {"converged": bool(ep.converged), "outer_steps": int(ep.outer_steps),
               "final_error_deg": float(np.rad2deg(ep.final_error)),
               "errors_deg": np.rad2deg(ep.errors).tolist()}
    _write_json(run.path("summary.json"), summary)
    if not ep.converged:
        raise NonConvergenceError(f"goal not reached in {ep.outer_steps} outer steps "
                                  f"(error {np.rad2deg(ep.final_error):.3f} deg)", ep)
    print(f"reached goal in {ep.outer_steps} outer steps, final error {np.rad2deg(ep.final_error):.3f} deg")
    return EXIT_OK


def cmd_pipeline(run: Run, args) -> int:
    cfg = _pipeline_cfg(args)
    trace = read_glove_csv(args.trace)
    trace.check_ranges(run.glove)
    decimation_factor(run.glove, cfg.period_s)
    res = run_pipeline(trace, run.glove, run.hand, _models(args.model), cfg, run.plant, run.ctrl)
    _pipeline_outputs(run, res, cfg)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON config; command-line flags take precedence")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    p.add_argument("--hand", help="hand profile JSON (default: bundled)")
    p.add_argument("--glove", help="glove profile JSON (default: bundled)")


def _streaming(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", action="append", metavar="AXIS=PATH", help="predictor per axis")
    p.add_argument("--latency-s", type=float, default=0.4)
    p.add_argument("--settle-s", type=float, default=1.0)
    p.add_argument("--period-s", type=float, default=0.06)
    p.add_argument("--lag-axis", choices=list(AXES), default="z")
    p.add_argument("--with-translation", action="store_true",
                   help="also stream the translational intent")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="glovehand", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="synthetic glove trace and ground-truth intent")
    _common(p)
    p.add_argument("--kind", choices=["sigmoid", "rigid"], default="sigmoid")
    p.add_argument("--wavelets", type=int, default=1)
    p.add_argument("--amplitude-deg", type=float, default=20.0)
    p.add_argument("--midpoint-s", type=float, default=2.0)
    p.add_argument("--steepness", type=float, default=3.0)
    p.add_argument("--rate-hz", type=float, default=200.0)
    p.add_argument("--duration-s", type=float, default=20.0, help="rigid traces only")
    p.add_argument("--noise-deg", type=float, default=0.02)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("intent", help="glove trace to cumulative intent")
    _common(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--truth", help="ground-truth intent CSV, plotted for comparison")
    p.add_argument("--rotation-only", action="store_true")
    p.set_defaults(func=cmd_intent)

    p = sub.add_parser("pca", help="principal components of glove traces")
    _common(p)
    p.add_argument("--trace", action="append", required=True)
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("train", help="train per-axis intent predictors")
    _common(p)
    p.add_argument("--intent")
    p.add_argument("--trace")
    p.add_argument("--rotation-only", action="store_true")
    p.add_argument("--axes", nargs="+", choices=list(AXES), default=["z"])
    p.add_argument("--window", type=int, default=20)
    p.add_argument("--horizon", type=int, default=10)
    p.add_argument("--period-s", type=float, default=0.06)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--hidden-size", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--optimizer", choices=["gd", "adam"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="run predictors over an intent stream")
    _common(p)
    p.add_argument("--model", action="append", metavar="AXIS=PATH")
    p.add_argument("--intent")
    p.add_argument("--trace")
    p.add_argument("--rotation-only", action="store_true")
    p.add_argument("--truth", help="ground-truth intent CSV for a second lag figure")
    p.add_argument("--max-lag", type=int, default=25)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="closed-loop relocation to a goal or along an intent stream")
    _common(p)
    for a in AXES:
        p.add_argument(f"--goal-rot-{a}-deg", type=float, default=0.0)
    for a in AXES:
        p.add_argument(f"--goal-d{a}-m", type=float, default=0.0)
    p.add_argument("--intent", help="stream this intent CSV instead of a fixed goal")
    _streaming(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pipeline", help="glove trace to simulated object motion")
    _common(p)
    p.add_argument("--trace", required=True)
    _streaming(p)
    p.set_defaults(func=cmd_pipeline)
    return parser


def _config_defaults(parser: argparse.ArgumentParser, argv) -> dict:
    """Read ``--config`` and install its flat keys as subcommand defaults."""
    args = parser.parse_args(argv)
    if not args.config:
        return {}
    try:
        config = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(config, dict):
        raise ValueError("config must be a JSON object")
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sp = sub.choices[args.command]
    dests = {a.dest for a in sp._actions}
    flat = {k.replace("-", "_"): v for k, v in config.items() if not isinstance(v, dict)}
    unknown = set(flat) - dests
    if unknown:
        raise ValueError(f"unknown config keys for {args.command}: {', '.join(sorted(unknown))}")
    sp.set_defaults(**flat)
    return config


def _diagnostic(out: Path, exc: Exception) -> Path:
    info = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, NumericalFailure):
        info.update(exc.details)
    ep = getattr(exc, "result", None)
    if ep is not None:
        info.update({"outer_steps": int(ep.outer_steps), "final_error_deg": float(np.rad2deg(ep.final_error)),
                     "errors_deg": np.rad2deg(ep.errors).tolist()})
    out.mkdir(parents=True, exist_ok=True)
    return _write_json(out / "diagnostic.json", info)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = None
    try:
        config = _config_defaults(parser, argv)
        args = parser.parse_args(argv)
        return args.func(Run(args, config), args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (NonConvergenceError, TrainingDivergedError, NumericalFailure, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        path = _diagnostic(Path(args.out) if args else Path("out"), exc)
        print(f"numerical failure: {exc} (see {path})", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, KeyError, TypeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
