"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 a reproduction check failed,
4 too many false-alarm runs hit their step budget.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path

from decusum.config import ConfigError, ExperimentConfig, parse_float
from decusum.detectors import CuSum, DeCuSumParams, run_until_stop
from decusum.experiments import RowWriter, format_value, gnuplot_script, reproduce_fig2, sweep
from decusum.metrics import (
    CensoringWarning,
    estimate_cadd,
    estimate_far,
    estimate_pdc,
    estimate_wadd_proxy,
    ladder_oracle,
    pdc_bound_infinite_h,
)
from decusum.models import ObservationStream

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSERTION = 3
EXIT_CENSORING = 4
CENSORING_LIMIT = 0.05

TRAJECTORY_SCHEMA = "decusum.trajectory/1"
FAR_SCHEMA = "decusum.far/1"
DELAY_SCHEMA = "decusum.delay/1"
PDC_SCHEMA = "decusum.pdc/1"
ORACLE_SCHEMA = "decusum.oracle/1"

# single-sensor illustration: N(0,1) -> N(0.75,1), change at 40, A = 7
TRAJECTORY_DEFAULTS = {"theta1": 0.75, "change_point": 40, "mu": 0.05, "h": 0.5}
TRAJECTORY_THRESHOLD = 7.0


def _csv_floats(text: str) -> list[float]:
    return [parse_float(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file with experiment settings; flags override it")
    common.add_argument("--seed", type=int)
    common.add_argument("--trials", type=int, help="trial count for the command's main estimator")
    common.add_argument("--out", help="output file (stdout when omitted)")
    common.add_argument("--algorithm", help="one name or a comma-separated list")
    common.add_argument("--alpha-grid", type=_csv_floats)
    common.add_argument("--threshold-grid", type=_csv_floats)
    common.add_argument("--sensors", type=int)
    common.add_argument("--mu", type=parse_float)
    common.add_argument("--h", type=parse_float, help="truncation level, 'inf' for none")
    common.add_argument("--skip-prob", type=parse_float)
    common.add_argument("--stride", type=int)
    common.add_argument("--theta0", type=parse_float)
    common.add_argument("--theta1", type=parse_float)
    common.add_argument("--sigma", type=parse_float)
    common.add_argument("--horizon", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--max-steps", type=int, help="step budget per false-alarm run (default 50/alpha)")

    parser = argparse.ArgumentParser(prog="decusum", description="CuSum / DE-CuSum sensor network simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trajectory", parents=[common], help="CuSum and DE-CuSum statistics on one seeded path")
    p.add_argument("--change-point", type=int)
    p.add_argument("--threshold", type=parse_float, default=None)
    p.add_argument("--steps", type=int, default=None, help="path length (default: until DE-CuSum alarms)")
    p.add_argument("--plot-script", help="write a gnuplot script for the output here")

    p = sub.add_parser("sweep", parents=[common], help="FAR/CADD/PDC rows over a threshold grid")
    p.add_argument("--plot-script", help="write a gnuplot script for the output here")

    p = sub.add_parser("reproduce-fig2", parents=[common], help="ten-sensor trade-off curves and checks")
    p.add_argument("--scale", type=float, default=1.0, help="multiply every trial count")

    sub.add_parser("far", parents=[common], help="false-alarm rate per threshold")
    p = sub.add_parser("delay", parents=[common], help="CADD and worst-state delay per threshold")
    p.add_argument("--mode", choices=("change_at_one", "stationary_prechange"))
    p.add_argument("--burn-in", type=int)
    sub.add_parser("pdc", parents=[common], help="per-sensor pre-change duty cycle")
    sub.add_parser("oracle", parents=[common], help="duty cycle from the ladder-variable formula")
    return parser


def _config(args: argparse.Namespace, base: dict | None = None) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.from_dict(base or {})
    if args.config and base:
        loaded = cfg.to_dict()
        cfg = ExperimentConfig.from_dict({**base, **loaded})
    trials_field = {
        "far": "far_trials",
        "delay": "delay_trials",
        "pdc": "pdc_trials",
        "oracle": "oracle_trials",
        "sweep": "delay_trials",
    }.get(args.command)
    changes = {
        "seed": args.seed,
        "out": args.out,
        "algorithms": args.algorithm.split(",") if args.algorithm else None,
        "alpha_grid": args.alpha_grid,
        "threshold_grid": args.threshold_grid,
        "sensors": args.sensors,
        "mu": args.mu,
        "h": args.h,
        "skip_prob": args.skip_prob,
        "stride": args.stride,
        "theta0": args.theta0,
        "theta1": args.theta1,
        "sigma": args.sigma,
        "horizon": args.horizon,
        "workers": args.workers,
    }
    if trials_field and args.trials is not None:
        changes[trials_field] = args.trials
    for name in ("change_point", "burn_in"):
        if getattr(args, name, None) is not None:
            changes[name] = getattr(args, name)
    if getattr(args, "mode", None):
        changes["cadd_mode"] = args.mode
    if getattr(args, "max_steps", None) is not None:
        changes["far_max_steps"] = args.max_steps
    return cfg.override(**changes)


def _require_seed(cfg: ExperimentConfig) -> int:
    if cfg.seed is None:
        raise ConfigError("--seed (or 'seed' in the config file) is required")
    return cfg.seed


def _emit(cfg: ExperimentConfig, schema: str, columns: list[str], rows: list[dict]) -> None:
    if cfg.out:
        Path(cfg.out).unlink(missing_ok=True)
        with RowWriter(cfg.out, schema, columns) as writer:
            for row in rows:
                writer.write(row)
    else:
        print(f"# schema: {schema}")
        print(",".join(columns))
        for row in rows:
            print(",".join(format_value(row.get(c)) for c in columns))


def cmd_trajectory(args: argparse.Namespace) -> int:
    cfg = _config(args, TRAJECTORY_DEFAULTS)
    if cfg.sensors != 1:
        raise ConfigError("trajectory works on a single sensor; use --sensors 1")
    seed = _require_seed(cfg)
    threshold = args.threshold if args.threshold is not None else TRAJECTORY_THRESHOLD
    if not threshold >= 0:
        raise ConfigError("threshold must be >= 0")
    params = DeCuSumParams(cfg.mu, cfg.h, threshold)
    steps = args.steps
    stream = ObservationStream(cfg.pair, cfg.change_point, seed=seed)
    if steps is None:
        de = run_until_stop(params, stream, threshold, max_steps=1_000_000, record=True)
        steps = len(de.trajectory)
    cusum = run_until_stop(CuSum(), stream, math.inf, max_steps=steps, record=True)
    de = run_until_stop(params, stream, math.inf, max_steps=steps, record=True)
    rows = [
        {"n": n, "C": c, "W": w, "sampled": int(s)}
        for (n, c, _), (_, w, s) in zip(cusum.trajectory, de.trajectory)
    ]
    _emit(cfg, TRAJECTORY_SCHEMA, ["n", "C", "W", "sampled"], rows)
    if args.plot_script:
        name = Path(cfg.out).name if cfg.out else "trajectory.csv"
        Path(args.plot_script).write_text(
            "set datafile separator ','\n"
            "set xlabel 'n'\n"
            f"set arrow from graph 0, first {threshold!r} to graph 1, first {threshold!r} nohead dt 2\n"
            f"plot '{name}' every ::1 using 1:2 with steps title 'C_n', \\\n"
            f"     '{name}' every ::1 using 1:3 with steps title 'W_n'\n"
        )
    return EXIT_OK


def _censoring_exit(fractions: list[float]) -> int:
    worst = max(fractions, default=0.0)
    if worst > CENSORING_LIMIT:
        print(f"censored fraction {worst:.3f} exceeds {CENSORING_LIMIT}", file=sys.stderr)
        return EXIT_CENSORING
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _config(args)
    _require_seed(cfg)
    cfg.thresholds()
    if not cfg.out:
        raise ConfigError("sweep needs --out (rows are appended and resumable)")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CensoringWarning)
        rows = sweep(cfg, cfg.out, progress=lambda r: print(f"{r['algorithm']} A={r['A']!r} done", file=sys.stderr))
    if args.plot_script:
        Path(args.plot_script).write_text(gnuplot_script(Path(cfg.out).name, cfg.algorithms))
    return _censoring_exit([float(r["censored_fraction"]) for r in rows])


def cmd_reproduce_fig2(args: argparse.Namespace) -> int:
    cfg = _config(args)
    seed = _require_seed(cfg)
    out = Path(cfg.out or "fig2")
    if not args.scale > 0:
        raise ConfigError("--scale must be positive")
    result = reproduce_fig2(seed, out, scale=args.scale, workers=cfg.workers)
    print((out / "fig2_summary.txt").read_text(), end="")
    return EXIT_OK if result.passed else EXIT_ASSERTION


def cmd_far(args: argparse.Namespace) -> int:
    cfg = _config(args)
    seed = _require_seed(cfg)
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CensoringWarning)
        for algorithm in cfg.algorithms:
            for alpha, A in cfg.thresholds():
                est = estimate_far(cfg.policy(algorithm, A), cfg.far_trials, cfg.far_max_steps, seed, workers=cfg.workers)
                rows.append({
                    "algorithm": algorithm, "A": float(A), "alpha": alpha, "far": est.far, "far_se": est.se,
                    "mean_run_length": est.mean_run_length, "censored_fraction": est.censored_fraction,
                    "max_steps": est.max_steps, "trials": est.trials, "seed": seed, "config_hash": cfg.digest(),
                })
    cols = ["algorithm", "A", "alpha", "far", "far_se", "mean_run_length", "censored_fraction",
            "max_steps", "trials", "seed", "config_hash"]
    _emit(cfg, FAR_SCHEMA, cols, rows)
    return _censoring_exit([r["censored_fraction"] for r in rows])


def cmd_delay(args: argparse.Namespace) -> int:
    cfg = _config(args)
    seed = _require_seed(cfg)
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CensoringWarning)
        for algorithm in cfg.algorithms:
            for alpha, A in cfg.thresholds():
                policy = cfg.policy(algorithm, A)
                cadd = estimate_cadd(policy, cfg.delay_trials, seed, cfg.cadd_mode, burn_in=cfg.burn_in,
                                     workers=cfg.workers)
                wadd = None
                if not (algorithm == "de-all" and math.isinf(cfg.h)):
                    wadd = estimate_wadd_proxy(policy, cfg.delay_trials, seed, workers=cfg.workers)
                rows.append({
                    "algorithm": algorithm, "A": float(A), "alpha": alpha, "mode": cadd.mode,
                    "cadd": cadd.value, "cadd_se": cadd.se, "kept_fraction": cadd.kept_fraction,
                    "wadd_proxy": wadd.value if wadd else None, "wadd_proxy_se": wadd.se if wadd else None,
                    "trials": cfg.delay_trials, "seed": seed, "config_hash": cfg.digest(),
                })
    cols = ["algorithm", "A", "alpha", "mode", "cadd", "cadd_se", "kept_fraction", "wadd_proxy",
            "wadd_proxy_se", "trials", "seed", "config_hash"]
    _emit(cfg, DELAY_SCHEMA, cols, rows)
    return EXIT_OK


def cmd_pdc(args: argparse.Namespace) -> int:
    cfg = _config(args)
    seed = _require_seed(cfg)
    rows = []
    for algorithm in cfg.algorithms:
        ests = estimate_pdc(cfg.policy(algorithm, math.inf), cfg.horizon, cfg.pdc_trials, seed, workers=cfg.workers)
        for k, est in enumerate(ests, start=1):
            rows.append({
                "algorithm": algorithm, "sensor": k, "pdc": est.value, "pdc_se": est.se, "horizon": cfg.horizon,
                "trials": cfg.pdc_trials, "seed": seed, "config_hash": cfg.digest(),
            })
    cols = ["algorithm", "sensor", "pdc", "pdc_se", "horizon", "trials", "seed", "config_hash"]
    _emit(cfg, PDC_SCHEMA, cols, rows)
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    cfg = _config(args)
    seed = _require_seed(cfg)
    est = ladder_oracle(cfg.pair, cfg.mu, cfg.h, cfg.oracle_trials, seed)
    row = est.to_record()
    row.update({"bound_h_inf": pdc_bound_infinite_h(cfg.pair, cfg.mu), "seed": seed, "config_hash": cfg.digest()})
    cols = ["record", "mu", "h", "mean_tau_minus", "mean_sleep", "pdc", "pdc_se", "bound_h_inf", "trials",
            "seed", "config_hash"]
    _emit(cfg, ORACLE_SCHEMA, cols, [row])
    return EXIT_OK


COMMANDS = {
    "trajectory": cmd_trajectory,
    "sweep": cmd_sweep,
    "reproduce-fig2": cmd_reproduce_fig2,
    "far": cmd_far,
    "delay": cmd_delay,
    "pdc": cmd_pdc,
    "oracle": cmd_oracle,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        # invalid parameter combinations surfaced by the model classes
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
