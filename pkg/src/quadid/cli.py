"""Batch pipeline front-end: simulate, identify, track, compare, metrics.

Every command is deterministic given config + seed.  Exit codes:
0 success, 1 numerical failure, 2 I/O or configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import mpc
from .config import PipelineConfig
from .errors import ConfigError, NumericsError
from .evaluation import (
    MetricReport,
    TrajectoryKind,
    concordance_index,
    position_mae_3d,
    position_rmse_3d,
)
from .ident_pd import IdentProblem, identify_pd
from .pd_model import PdModel, PdParams
from .signals import preprocess_dataset, read_dataset_csv, write_dataset_csv
from .sindy import SparseModel, identify_sindy


def summarize_tracking(log: mpc.TrackingLog) -> dict:
    """Metric and timing summary of a tracking run."""
    pos = log.states[:, 0:3]
    report = MetricReport.compute(pos, log.refs, channel_names=["x", "y", "z"])
    _, conc3d = concordance_index(
        pos.reshape(-1, 1), log.refs.reshape(-1, 1)
    )
    bounds_violation = float(
        max(
            np.max(log.inputs - mpc.OcpConfig().u_hi, initial=0.0),
            np.max(mpc.OcpConfig().u_lo - log.inputs, initial=0.0),
        )
    )
    return {
        "trajectory": log.meta.get("trajectory"),
        "aborted": bool(log.aborted),
        "n_steps": int(log.n_steps),
        "metrics": {
            "per_axis": report.to_dict()["channels"],
            "position_rmse_3d": position_rmse_3d(pos, log.refs),
            "position_mae_3d": position_mae_3d(pos, log.refs),
            "concordance_3d": float(conc3d),
        },
        "constraints": {"max_bound_violation": bounds_violation},
        "timing": {
            "mean_solve_ms": float(np.mean(log.solve_ms)) if log.n_steps else 0.0,
            "max_solve_ms": float(np.max(log.solve_ms)) if log.n_steps else 0.0,
        },
    }


def _load_model(path: Path, cfg: PipelineConfig):
    try:
        text = path.read_text(encoding="utf-8")
        data = json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read model {path}: {exc}") from None
    if "terms" in data and "spec" in data:
        return SparseModel.from_json(text), "sindy"
    if "xi" in data:
        return (
            PdModel(PdParams(np.asarray(data["xi"], dtype=float)),
                    cfg.plant.mass, cfg.plant.g),
            "pd",
        )
    raise ConfigError(f"model file {path} matches no known schema")


def _write_json(path: Path, data: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True), encoding="utf-8")


def cmd_simulate(args) -> int:
    cfg = PipelineConfig.load(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    plant = cfg.plant.build(cfg.excitation.dt)
    excitation = cfg.excitation.build(cfg.plant.g)
    rng = np.random.default_rng(seed)
    from .simulate import generate_dataset

    ds = generate_dataset(
        plant, excitation, cfg.excitation.duration, cfg.excitation.dt,
        noise_sigma=cfg.noise.sigma_states, rng=rng,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset_csv(out, ds)
    print(f"wrote {ds.n_samples} samples to {out}")
    return 0


def cmd_identify(args) -> int:
    cfg = PipelineConfig.load(args.config)
    data_path = Path(args.data)
    if not data_path.exists():
        raise ConfigError(f"dataset {data_path} does not exist")
    ds = read_dataset_csv(data_path)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)

    if args.method == "pd":
        pp = cfg.preprocess_pd
        prepared = preprocess_dataset(
            ds, pp.method, pp.lowpass_lambda, pp.savgol_window, pp.savgol_poly
        )
        problem = IdentProblem(
            dataset=prepared,
            mass=cfg.plant.mass,
            g=cfg.plant.g,
            bounds=cfg.ident_pd.bounds(),
            init=None if cfg.ident_pd.init is None
            else np.asarray(cfg.ident_pd.init, float),
            freeze=None if cfg.ident_pd.freeze is None
            else np.asarray(cfg.ident_pd.freeze, bool),
            max_iter=cfg.ident_pd.max_iter,
        )
        result = identify_pd(problem)
        out.write_text(result.xi_hat.to_json(), encoding="utf-8")
        _write_json(
            out.with_suffix(".diag.json"),
            {
                "cost_trajectory": [float(c) for c in result.cost_trajectory],
                "residual_rms": [float(v) for v in result.residual_rms],
                "converged": result.converged,
                "n_iter": result.n_iter,
                "unidentifiable": result.unidentifiable,
                "message": result.message,
            },
        )
        print(
            f"pd identification: cost {result.cost_trajectory[-1]:.6e} "
            f"after {result.n_iter} iterations -> {out}"
        )
    else:
        pp = cfg.preprocess_sindy
        prepared = preprocess_dataset(
            ds, pp.method, pp.lowpass_lambda, pp.savgol_window, pp.savgol_poly
        )
        model = identify_sindy(
            prepared, cfg.sindy.library_spec(), cfg.sindy.solver_config()
        )
        out.write_text(model.to_json(), encoding="utf-8")
        _write_json(out.with_suffix(".diag.json"), model.diagnostics)
        print(
            f"sindy identification: {model.diagnostics['nonzero_total']} active terms "
            f"-> {out}"
        )
    return 0


def cmd_track(args) -> int:
    cfg = PipelineConfig.load(args.config)
    model, model_kind = _load_model(Path(args.model), cfg)
    ocp = cfg.ocp_config()
    plant = cfg.plant.build(ocp.dt)
    trajectory = TrajectoryKind.parse(args.trajectory or cfg.experiment.trajectory)
    duration = args.duration if args.duration is not None else cfg.experiment.duration

    log = mpc.track(
        model, plant, trajectory, ocp, duration, cfg.experiment.initial_state()
    )
    summary = summarize_tracking(log)
    summary["model_kind"] = model_kind

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    log.save_csv(outdir / "log.csv")
    _write_json(outdir / "summary.json", summary)
    _emit_plot_data(outdir, log)
    print(
        f"{trajectory.value}/{model_kind}: rmse3d "
        f"{summary['metrics']['position_rmse_3d']:.4f} m over {log.n_steps} steps"
        + (" (aborted)" if log.aborted else "")
    )
    if log.aborted:
        raise NumericsError("plant diverged during tracking; partial log written")
    return 0


def _emit_plot_data(outdir: Path, log: mpc.TrackingLog) -> None:
    np.savetxt(
        outdir / "track_xyz.csv",
        np.column_stack([log.t, log.states[:, 0:3], log.refs]),
        delimiter=",", comments="",
        header="t,x,y,z,ref_x,ref_y,ref_z", fmt="%.17g",
    )
    err = log.position_error()
    np.savetxt(
        outdir / "errors.csv",
        np.column_stack([log.t, err, np.linalg.norm(err, axis=1)]),
        delimiter=",", comments="",
        header="t,err_x,err_y,err_z,err_norm", fmt="%.17g",
    )
    np.savetxt(
        outdir / "solve_time.csv",
        np.column_stack([log.t, log.solve_ms]),
        delimiter=",", comments="",
        header="t,solve_ms", fmt="%.17g",
    )


def cmd_compare(args) -> int:
    try:
        log_a = mpc.TrackingLog.load_csv(args.log_a)
        log_b = mpc.TrackingLog.load_csv(args.log_b)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load tracking logs: {exc}") from None
    sa, sb = summarize_tracking(log_a), summarize_tracking(log_b)
    rows = [
        ("position_rmse_3d", "m"),
        ("position_mae_3d", "m"),
        ("concordance_3d", ""),
    ]
    name_a = args.name_a or Path(args.log_a).stem
    name_b = args.name_b or Path(args.log_b).stem
    lines = [f"{'metric':<20} {name_a:>14} {name_b:>14} {'diff':>14}"]
    for key, _unit in rows:
        va, vb = sa["metrics"][key], sb["metrics"][key]
        lines.append(f"{key:<20} {va:>14.6f} {vb:>14.6f} {vb - va:>14.6f}")
    table = "\n".join(lines)
    print(table)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        _write_json(out.with_suffix(".json"), {name_a: sa, name_b: sb})
        out.with_suffix(".txt").write_text(table + "\n", encoding="utf-8")
    return 0


def cmd_metrics(args) -> int:
    try:
        log = mpc.TrackingLog.load_csv(args.log)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load tracking log: {exc}") from None
    report = MetricReport.compute(
        log.states[:, 0:3], log.refs, channel_names=["x", "y", "z"]
    )
    print(report.to_text())
    if args.out:
        _write_json(Path(args.out), summarize_tracking(log))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quadid",
        description="dataset generation, model identification and tracking experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="pipeline config (yaml/json)")
    common.add_argument("--seed", type=int, default=None, help="override config seed")

    p = sub.add_parser("simulate", parents=[common], help="generate a flight dataset")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("identify", parents=[common], help="fit a model to a dataset")
    p.add_argument("--data", required=True, help="input dataset CSV")
    p.add_argument("--method", required=True, choices=["pd", "sindy"])
    p.add_argument("--out", required=True, help="output model JSON path")
    p.set_defaults(fn=cmd_identify)

    p = sub.add_parser("track", parents=[common], help="run a tracking experiment")
    p.add_argument("--model", required=True, help="model JSON (pd or sindy)")
    p.add_argument("--trajectory", default=None,
                   choices=["sinusoidal", "circular", "spiral"])
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_track)

    p = sub.add_parser("compare", help="side-by-side metrics of two tracking logs")
    p.add_argument("--log-a", required=True)
    p.add_argument("--log-b", required=True)
    p.add_argument("--name-a", default=None)
    p.add_argument("--name-b", default=None)
    p.add_argument("--out", default=None, help="output path prefix")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("metrics", help="metric table for a tracking log")
    p.add_argument("--log", required=True)
    p.add_argument("--out", default=None, help="optional summary JSON path")
    p.set_defaults(fn=cmd_metrics)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericsError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
