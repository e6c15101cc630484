"""Threshold sweeps, the L=10 trade-off preset and their CSV output.

CSV files start with a ``# schema: ...`` comment naming the column layout
version, followed by a header row.  Floats are written with ``repr`` so they
read back bit for bit.  Rows are flushed as soon as they are computed, and a
sweep pointed at an existing file skips the ``(algorithm, A, config_hash)``
rows already present.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from decusum.config import ExperimentConfig
from decusum.fusion import Algorithm, NetworkPolicy
from decusum.metrics import (
    CensoringWarning,
    Estimate,
    estimate_cadd,
    estimate_far,
    estimate_pdc,
    estimate_wadd_proxy,
    interpolate_at_far,
    theoretical_lower_bound,
)

SWEEP_SCHEMA = "decusum.sweep/1"
MATCHED_SCHEMA = "decusum.matched/1"


def sweep_columns(sensors: int) -> list[str]:
    cols = [
        "algorithm", "A", "alpha", "far", "far_se", "abs_log_far", "censored_fraction",
        "cadd", "cadd_se", "wadd_proxy", "wadd_proxy_se", "lower_bound",
    ]
    for k in range(1, sensors + 1):
        cols += [f"pdc_{k}", f"pdc_{k}_se"]
    cols += ["trials", "far_trials", "pdc_trials", "seed", "config_hash"]
    return cols


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


class RowWriter:
    """Append-only CSV writer that flushes every row."""

    def __init__(self, path: str | Path, schema: str, columns: list[str]):
        self.path = Path(path)
        self.columns = columns
        self.existing: list[dict[str, str]] = []
        if self.path.exists() and self.path.stat().st_size > 0:
            self.existing = read_rows(self.path, schema, columns)
            self._fh = self.path.open("a", newline="")
            self._csv = csv.writer(self._fh, lineterminator="\n")
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = self.path.open("w", newline="")
            self._fh.write(f"# schema: {schema}\n")
            self._csv = csv.writer(self._fh, lineterminator="\n")
            self._csv.writerow(columns)
            self._fh.flush()

    def write(self, row: dict) -> None:
        self._csv.writerow([format_value(row.get(c)) for c in self.columns])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> RowWriter:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_rows(path: str | Path, schema: str | None = None, columns: list[str] | None = None) -> list[dict[str, str]]:
    """Rows of a CSV written by :class:`RowWriter`, as strings."""
    with Path(path).open(newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("# schema:"):
            raise ValueError(f"{path}: missing schema comment line")
        found = first.split(":", 1)[1].strip()
        if schema is not None and found != schema:
            raise ValueError(f"{path}: schema {found!r}, expected {schema!r}")
        reader = csv.DictReader(fh)
        if columns is not None and reader.fieldnames != columns:
            raise ValueError(f"{path}: column layout differs from the current one")
        return list(reader)


@dataclass
class SweepPoint:
    algorithm: str
    threshold: float
    alpha: float | None


def _points(config: ExperimentConfig) -> list[SweepPoint]:
    return [SweepPoint(a, A, alpha) for a in config.algorithms for alpha, A in config.thresholds()]


def measure_point(
    config: ExperimentConfig,
    point: SweepPoint,
    pdc: list[Estimate],
    *,
    pdc_trials: int,
) -> dict:
    """One sweep row: FAR, CADD, worst-state delay proxy and duty cycles."""
    seed = config.seed if config.seed is not None else 0
    policy = config.policy(point.algorithm, point.threshold)
    far = estimate_far(policy, config.far_trials, config.far_max_steps, seed, workers=config.workers)
    cadd = estimate_cadd(
        policy, config.delay_trials, seed, config.cadd_mode, burn_in=config.burn_in, workers=config.workers
    )
    if policy.algorithm is Algorithm.DEALL and math.isinf(config.h):
        wadd = None
    elif policy.algorithm is Algorithm.DEALL:
        wadd = estimate_wadd_proxy(policy, config.delay_trials, seed, workers=config.workers)
    else:
        # worst pre-change state of a CuSum statistic is 0: same numbers as change_at_one
        wadd = cadd if config.cadd_mode == "change_at_one" else estimate_wadd_proxy(
            policy, config.delay_trials, seed, workers=config.workers
        )
    alpha = point.alpha if point.alpha is not None else math.exp(-point.threshold)
    row = {
        "algorithm": point.algorithm,
        "A": float(point.threshold),
        "alpha": point.alpha,
        "far": far.far,
        "far_se": far.se,
        "abs_log_far": abs(math.log(far.far)),
        "censored_fraction": far.censored_fraction,
        "cadd": cadd.value,
        "cadd_se": cadd.se,
        "wadd_proxy": wadd.value if wadd is not None else None,
        "wadd_proxy_se": wadd.se if wadd is not None else None,
        "lower_bound": theoretical_lower_bound(min(alpha, 1.0), policy.sensors),
        "trials": config.delay_trials,
        "far_trials": config.far_trials,
        "pdc_trials": pdc_trials,
        "seed": seed,
        "config_hash": config.digest(),
    }
    for k, est in enumerate(pdc, start=1):
        row[f"pdc_{k}"] = est.value
        row[f"pdc_{k}_se"] = est.se
    return row


def policy_pdc(config: ExperimentConfig, policy: NetworkPolicy, trials: int) -> list[Estimate]:
    seed = config.seed if config.seed is not None else 0
    return estimate_pdc(policy, config.horizon, trials, seed, workers=config.workers)


def sweep(
    config: ExperimentConfig,
    out: str | Path,
    *,
    pdc_trials: dict[str, int] | None = None,
    progress: Callable[[dict], None] | None = None,
) -> list[dict]:
    """Run every ``(algorithm, threshold)`` point of ``config`` into ``out``.

    The duty cycle does not depend on the threshold, so it is estimated once
    per algorithm and repeated on each of its rows.  Returns all rows of the
    file, earlier ones included, as dicts of strings.
    """
    if config.seed is None:
        raise ValueError("a sweep needs an explicit seed")
    columns = sweep_columns(config.sensors)
    digest = config.digest()
    rows: list[dict] = []
    with RowWriter(out, SWEEP_SCHEMA, columns) as writer:
        done = {(r["algorithm"], r["A"], r["config_hash"]) for r in writer.existing}
        rows.extend(writer.existing)
        pdc_cache: dict[str, list[Estimate]] = {}
        for point in _points(config):
            if (point.algorithm, repr(float(point.threshold)), digest) in done:
                continue
            trials = (pdc_trials or {}).get(point.algorithm, config.pdc_trials)
            if point.algorithm not in pdc_cache:
                pdc_cache[point.algorithm] = policy_pdc(config, config.policy(point.algorithm, math.inf), trials)
            row = measure_point(config, point, pdc_cache[point.algorithm], pdc_trials=trials)
            writer.write(row)
            rows.append({c: format_value(row.get(c)) for c in columns})
            if progress is not None:
                progress(row)
    return rows


def gnuplot_script(csv_name: str, algorithms: Iterable[str]) -> str:
    """Plot CADD against |log FAR| for each algorithm of a sweep file."""
    lines = [
        "# usage: gnuplot -p this_file",
        "set datafile separator ','",
        "set key top left",
        "set xlabel '|log FAR|'",
        "set ylabel 'CADD'",
    ]
    plots = []
    for a in algorithms:
        plots.append(
            f"'< grep \"^{a},\" {csv_name}' using 6:8:9 with yerrorlines title '{a}'"
        )
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


# -- the L=10 trade-off preset -----------------------------------------------

FIG2_PDC_TARGET = 0.65
FIG2_GAIN_FLOOR = 1.1


@dataclass(frozen=True)
class Fig2Preset:
    """Ten sensors, N(0,1) -> N(0.4,1), DE-All at mu=0.2, h=20, fractional at 0.35.

    Equal thresholds do not give equal false-alarm rates across the three
    algorithms, so each gets its own threshold grid and the curves are
    compared at common target FARs by interpolation in ``|log FAR|``.
    """

    sensors: int = 10
    theta1: float = 0.4
    mu: float = 0.2
    h: float = 20.0
    skip_prob: float = 0.35
    grids: dict = field(
        default_factory=lambda: {
            "all": (5.0, 5.75, 6.5, 7.25, 8.0),
            "de-all": (0.25, 1.0, 1.75, 2.5, 3.25),
            "fractional-all": (4.5, 5.25, 6.0, 6.75, 7.5),
        }
    )
    target_log10_far: tuple[float, ...] = (-3.5, -3.75, -4.0, -4.25)
    far_trials: int = 2_000
    far_max_steps: int = 500_000
    delay_trials: int = 20_000
    pdc_trials: int = 1_000
    # ALL samples at every step, its duty cycle is exactly 1 on any path
    pdc_trials_all: int = 20
    horizon: int = 100_000

    def config(self, algorithm: str, seed: int, scale: float = 1.0, workers: int = 1) -> ExperimentConfig:
        def scaled(n: int) -> int:
            return max(2, int(round(n * scale)))

        return ExperimentConfig(
            algorithms=(algorithm,),
            sensors=self.sensors,
            theta1=self.theta1,
            mu=self.mu,
            h=self.h,
            skip_prob=self.skip_prob if algorithm == "fractional-all" else 0.0,
            threshold_grid=self.grids[algorithm],
            far_trials=scaled(self.far_trials),
            far_max_steps=self.far_max_steps,
            delay_trials=scaled(self.delay_trials),
            pdc_trials=scaled(self.pdc_trials_all if algorithm == "all" else self.pdc_trials),
            horizon=self.horizon,
            seed=seed,
            workers=workers,
        )


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


@dataclass
class Fig2Result:
    curves: dict[str, list[dict]]
    matched: list[dict]
    checks: list[Check]
    out_dir: Path

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _f(row: dict, key: str) -> float:
    v = row[key]
    return math.nan if v in ("", None) else float(v)


def fig2_checks(curves: dict[str, list[dict]], targets: list[float], sensors: int) -> tuple[list[dict], list[Check]]:
    checks: list[Check] = []
    # duty cycle of every DE-All sensor
    de = curves["de-all"][0]
    worst = []
    for k in range(1, sensors + 1):
        v, se = _f(de, f"pdc_{k}"), _f(de, f"pdc_{k}_se")
        worst.append((v - FIG2_PDC_TARGET - 2 * se, k, v, se))
    margin, k, v, se = max(worst)
    checks.append(
        Check(
            "de-all duty cycle",
            margin <= 0,
            f"max over sensors PDC_{k} = {v:.5f} (se {se:.5f}) against {FIG2_PDC_TARGET} + 2 se",
        )
    )

    matched: list[dict] = []
    for target in targets:
        point = {"target_far": target, "abs_log_far": abs(math.log(target))}
        for name, rows in curves.items():
            est = interpolate_at_far(
                [_f(r, "far") for r in rows], [_f(r, "cadd") for r in rows], [_f(r, "cadd_se") for r in rows], target
            )
            point[name] = est
        matched.append(point)

    for point in matched:
        tag = f"log10 FAR = {math.log10(point['target_far']):.2f}"
        missing = [n for n in curves if point[n] is None]
        if missing:
            checks.append(Check(f"ordering at {tag}", False, f"target outside the FAR range of {missing}"))
            continue
        a, d, f = point["all"], point["de-all"], point["fractional-all"]
        ok1 = a.value <= d.value + math.hypot(a.se, d.se)
        ok2 = d.value <= f.value + math.hypot(d.se, f.se)
        checks.append(
            Check(
                f"ordering at {tag}",
                ok1 and ok2,
                f"CADD all {a.value:.3f} <= de-all {d.value:.3f} <= fractional {f.value:.3f} (1 combined se)",
            )
        )

    smallest = min(matched, key=lambda p: p["target_far"])
    d, f = smallest["de-all"], smallest["fractional-all"]
    if d is None or f is None:
        checks.append(Check("fractional/de-all gain", False, "smallest target outside the covered FAR range"))
    else:
        ratio = f.value / d.value
        checks.append(
            Check(
                "fractional/de-all gain",
                ratio >= FIG2_GAIN_FLOOR,
                f"{ratio:.3f} at log10 FAR = {math.log10(smallest['target_far']):.2f}, floor {FIG2_GAIN_FLOOR} "
                "(desk-scale proxy for a significant gain)",
            )
        )
    return matched, checks


def reproduce_fig2(
    seed: int,
    out_dir: str | Path,
    *,
    scale: float = 1.0,
    workers: int = 1,
    preset: Fig2Preset | None = None,
    progress: Callable[[dict], None] | None = None,
) -> Fig2Result:
    """Run the preset into ``out_dir`` and evaluate the trade-off claims.

    Writes ``fig2_curves.csv``, ``fig2_matched.csv``, ``fig2_summary.txt`` and
    ``fig2.gp``.  Existing outputs are replaced.  ``scale`` multiplies every
    trial count (for quick runs); budgets and grids are unchanged.
    """
    preset = preset or Fig2Preset()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    curves_path = out / "fig2_curves.csv"
    curves_path.unlink(missing_ok=True)

    curves: dict[str, list[dict]] = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CensoringWarning)
        for algorithm in preset.grids:
            config = preset.config(algorithm, seed, scale, workers)
            rows = sweep(config, curves_path, progress=progress)
            curves[algorithm] = [r for r in rows if r["algorithm"] == algorithm]

    targets = [10.0**t for t in preset.target_log10_far]
    matched, checks = fig2_checks(curves, targets, preset.sensors)
    censored = max(_f(r, "censored_fraction") for rows in curves.values() for r in rows)
    checks.append(Check("false-alarm censoring", censored <= 0.05, f"max censored fraction {censored:.4f} (limit 0.05)"))

    cols = ["target_far", "abs_log_far"]
    for name in curves:
        cols += [f"cadd_{name}", f"cadd_{name}_se"]
    (out / "fig2_matched.csv").unlink(missing_ok=True)
    with RowWriter(out / "fig2_matched.csv", MATCHED_SCHEMA, cols) as writer:
        for point in matched:
            row = {"target_far": point["target_far"], "abs_log_far": point["abs_log_far"]}
            for name in curves:
                est = point[name]
                row[f"cadd_{name}"] = est.value if est else None
                row[f"cadd_{name}_se"] = est.se if est else None
            writer.write(row)

    summary = [f"seed {seed}, trial scale {scale!r}"]
    summary += [c.line() for c in checks]
    summary.append("OVERALL " + ("PASS" if all(c.passed for c in checks) else "FAIL"))
    (out / "fig2_summary.txt").write_text("\n".join(summary) + "\n")
    (out / "fig2.gp").write_text(gnuplot_script(curves_path.name, curves))
    return Fig2Result(curves, matched, checks, out)
