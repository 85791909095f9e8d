"""Command-line front end.

    python main.py estimate-innovations --data record.csv --L 150 --out experiments/innovations
    python main.py build --config profiles/build_example.json
    python main.py predict --model model.json --past past.csv --future future.csv
    python main.py benchmark --config profiles/b747_benchmark.json --threads 8

Failures print ``{"error": category, "message": ...}`` on stderr and exit with
the category's code.
"""
import argparse
import datetime
import json
import logging
import os
import sys

import numpy as np
import pandas as pd

from ddkf import __version__
from ddkf.benchmark.campaign import run_monte_carlo
from ddkf.benchmark.config import BenchmarkConfig
from ddkf.config import (BuildConfig, EstimateConfig, PredictConfig, canonical_json, from_dict, load_profile,
                         resolve_path)
from ddkf.errors import DDKFError, DataFormatError, DimensionError, error_payload
from ddkf.innovations import estimate_innovations, select_past_horizon, whiteness
from ddkf.io import (load_model, read_trajectory_csv, role, save_model, sha256_text, validate_result,
                     write_json, write_trajectory_csv)
from ddkf.log import setup_logging
from ddkf.pipeline import innovations_model
from ddkf.predictor import predict
from ddkf.trajectory import HorizonSpec, Trajectory, role_names

logger = logging.getLogger(__name__)

DEFAULT_OUT = "experiments"
PATH_KEYS = ("data", "model", "past", "future")


def _profile(args, command):
    """Profile dict (paths relative to its folder) overlaid with explicit command-line values."""
    data = {}
    if args.config:
        data = load_profile(args.config)
        base_dir = os.path.dirname(os.path.abspath(args.config))
        for key in PATH_KEYS:
            if isinstance(data.get(key), str):
                data[key] = resolve_path(data[key], base_dir)
    data.setdefault("command", command)
    for key in ("data", "L", "L_candidates", "T_p", "T_f", "n_x_bar", "meas_var", "model", "past", "future"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    return data


def _out_dir(args, command):
    out = args.out or os.path.join(DEFAULT_OUT, command)
    os.makedirs(out, exist_ok=True)
    return out


def _record(path):
    traj = read_trajectory_csv(path)
    return role(traj, "u"), role(traj, "y")


def cmd_estimate_innovations(args):
    config = from_dict(EstimateConfig, _profile(args, "estimate-innovations"))
    out = _out_dir(args, "estimate-innovations")
    u, y = _record(config.data)
    summary = {"data": config.data}
    L = config.L
    if L is None:
        L, scores = select_past_horizon(u, y, config.L_candidates)
        summary["aic"] = scores.reset_index().to_dict(orient="records")
        scores.to_csv(os.path.join(out, "aic.csv"), float_format='%.17g')
    estimate = estimate_innovations(u, y, L)
    report = whiteness(estimate.e_hat, max_lag=config.max_lag)
    if not report.passed:
        logger.warning(f"Innovations estimate is not white at L={L} (fractions {report.fraction_within})")
    write_trajectory_csv(os.path.join(out, "innovations.csv"), estimate.as_trajectory(u.dt))
    summary.update({
        "L": L,
        "N": estimate.N,
        "start": estimate.start,
        "lambda_hat": estimate.lambda_hat.tolist(),
        "used_lq": estimate.used_lq,
        "whiteness": report.as_dict(),
    })
    write_json(os.path.join(out, "innovations.json"), summary)
    print(f"Innovations for L={L}, N={estimate.N} written to {out}")
    return 0


def cmd_build(args):
    config = from_dict(BuildConfig, _profile(args, "build"))
    out = _out_dir(args, "build")
    u, y = _record(config.data)
    spec = HorizonSpec(config.T_p, config.T_f, config.n_x_bar, u.channel_count, y.channel_count)
    meas_cov = None if config.meas_var is None else config.meas_var * np.eye(y.channel_count)
    model = innovations_model(u, y, config.L, spec, meas_cov=meas_cov,
                              dare_tol=config.dare_tol, dare_max_iter=config.dare_max_iter)
    report = dict(model.diagnostics)
    report["whiteness"] = whiteness(model.estimate.e_hat).as_dict()
    report["lambda_hat"] = model.estimate.lambda_hat.tolist()
    save_model(os.path.join(out, "model.json"), model)
    write_json(os.path.join(out, "build_report.json"), report)
    print(f"Model with state dimension {model.ddss.state_dim} written to {out}")
    return 0


def cmd_predict(args):
    config = from_dict(PredictConfig, _profile(args, "predict"))
    out = _out_dir(args, "predict")
    model = load_model(config.model)
    spec = model.horizon
    past = read_trajectory_csv(config.past)
    u_p, y_p = role(past, "u"), role(past, "y")
    u_f = role(read_trajectory_csv(config.future), "u")
    if u_p.channel_count != spec.n_u or y_p.channel_count != spec.n_y or u_f.channel_count != spec.n_u:
        raise DimensionError("record channels do not match the model's inputs and outputs")
    if u_f.length != spec.T_f:
        raise DimensionError(f"future input has {u_f.length} samples, model predicts T_f={spec.T_f}")

    if model.filtered:
        state = model.filtered_state(u_p.samples, y_p.samples)
    else:
        if past.length < spec.T_p:
            raise DataFormatError(f"past record needs at least T_p={spec.T_p} samples")
        state = model.smm.state(u_p.samples[:, -spec.T_p:].T.reshape(-1), y_p.samples[:, -spec.T_p:].T.reshape(-1))
    y_f = predict(model.matrices, state, u_f.samples.T.reshape(-1)).reshape(spec.T_f, spec.n_y).T
    write_trajectory_csv(os.path.join(out, "predictions.csv"), Trajectory(y_f, role_names("y", spec.n_y), u_f.dt))
    print(f"Predicted {spec.T_f} samples written to {out}")
    return 0


def _records(frame):
    return frame.astype(object).where(pd.notna(frame), None).to_dict(orient="records")


def benchmark_payload(config, result):
    """The deterministic result payload: everything follows from config and seed."""
    config_json = canonical_json(config)
    return {
        "schema_version": 1,
        "tool_version": __version__,
        "config": json.loads(config_json),
        "provenance": {
            "config_sha256": sha256_text(config_json),
            "master_seed": config.master_seed,
            "tool_version": __version__,
        },
        "methods": list(result.methods),
        "comparisons": result.comparisons(config.T_f),
        "boxplot_summary": result.boxplot_summary(),
        "runs": _records(result.runs),
        "diagnostics": _records(result.diagnostics),
    }


def cmd_benchmark(args):
    data = _profile(args, "benchmark")
    if args.seed is not None:
        data["master_seed"] = args.seed
    config = from_dict(BenchmarkConfig, data)
    out = _out_dir(args, "benchmark")
    threads = args.threads or 1
    started = datetime.datetime.now().isoformat()
    print(f"Running {config.mc_runs} Monte Carlo runs of {list(config.methods)} with {threads} worker(s)")

    result = run_monte_carlo(config, threads=threads, progress=not args.quiet)
    payload = validate_result(benchmark_payload(config, result))
    write_json(os.path.join(out, "result.json"), payload)
    write_json(os.path.join(out, "boxplot_summary.json"), payload["boxplot_summary"])
    result.runs.to_csv(os.path.join(out, "runs.csv"), index=False, float_format='%.17g')
    result.diagnostics.to_csv(os.path.join(out, "diagnostics.csv"), index=False, float_format='%.17g')
    table = result.summary_table()
    with open(os.path.join(out, "summary.txt"), 'w', encoding='utf-8') as f:
        f.write(table.get_string() + "\n")
    write_json(os.path.join(out, "run_info.json"), {
        "started": started,
        "finished": datetime.datetime.now().isoformat(),
        "threads": threads,
        "config_sha256": payload["provenance"]["config_sha256"],
    })
    print(table)
    print(json.dumps(payload["comparisons"], indent=4, sort_keys=True))
    print(f"Results saved to {out}")
    return 0


def _int_list(text):
    try:
        return [int(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


def build_parser():
    parser = argparse.ArgumentParser(prog="ddkf", description="Data-driven innovations Kalman predictor")
    parser.add_argument('--log-level', default=None, type=str, help='Logging level (default: $DDKF_LOG or INFO)')
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add_common(sub):
        sub.add_argument('--config', default=None, type=str, help='JSON profile')
        sub.add_argument('--out', default=None, type=str, help='Output folder (default: experiments/<command>)')
        sub.add_argument('--seed', default=None, type=int, help='Overrides master_seed')
        sub.add_argument('--threads', default=None, type=int, help='Monte Carlo worker processes')

    estimate = subparsers.add_parser("estimate-innovations", help="Estimate the innovations of a record")
    add_common(estimate)
    estimate.add_argument('--data', default=None, type=str, help='Trajectory CSV with u: and y: channels')
    estimate.add_argument('--L', default=None, type=int, help='Past horizon')
    estimate.add_argument('--L-candidates', dest="L_candidates", default=None, type=_int_list,
                          help='Comma-separated past horizons ranked by AIC')
    estimate.set_defaults(handler=cmd_estimate_innovations)

    build = subparsers.add_parser("build", help="Build the data-driven Kalman predictor")
    add_common(build)
    build.add_argument('--data', default=None, type=str, help='Trajectory CSV with u: and y: channels')
    build.add_argument('--L', default=None, type=int, help='Past horizon of the innovations estimate')
    build.add_argument('--T-p', dest="T_p", default=None, type=int, help='Past window length')
    build.add_argument('--T-f', dest="T_f", default=None, type=int, help='Prediction horizon')
    build.add_argument('--n-x-bar', dest="n_x_bar", default=None, type=int, help='Order bound')
    build.add_argument('--meas-var', dest="meas_var", default=None, type=float,
                       help='Extra white measurement noise variance per output')
    build.set_defaults(handler=cmd_build)

    pred = subparsers.add_parser("predict", help="Predict T_f outputs from a past record and future inputs")
    add_common(pred)
    pred.add_argument('--model', default=None, type=str, help='model.json written by build')
    pred.add_argument('--past', default=None, type=str, help='Past record CSV with u: and y: channels')
    pred.add_argument('--future', default=None, type=str, help='Future input CSV with T_f rows of u: channels')
    pred.set_defaults(handler=cmd_predict)

    bench = subparsers.add_parser("benchmark", help="Monte Carlo aircraft benchmark")
    add_common(bench)
    bench.add_argument('--quiet', action="store_true", help='No progress bar')
    bench.set_defaults(handler=cmd_benchmark)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    try:
        return args.handler(args)
    except DDKFError as e:
        logger.debug("Command failed", exc_info=True)
        print(json.dumps(error_payload(e)), file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
