"""Monte Carlo estimators of false-alarm rate, detection delay and duty cycle.

Also holds the ladder-variable oracle, which computes a DE-CuSum duty cycle
from renewal-reward quantities without running the DE-CuSum state machine, and
the closed-form delay lower bound.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from decusum.fusion import Algorithm, NetworkPolicy, SensorConfig, simulate
from decusum.models import DistributionPair, kl_f0_f1, kl_f1_f0
from decusum.rng import STREAM_DELAY, STREAM_FAR, STREAM_ORACLE, STREAM_PDC, substream

DEFAULT_FAR_TRIALS = 2_000
DEFAULT_DELAY_TRIALS = 20_000
DEFAULT_PDC_TRIALS = 1_000
DEFAULT_HORIZON = 100_000
DEFAULT_DELAY_BUDGET = 1_000_000


class CensoringWarning(UserWarning):
    """Too many runs hit their step budget for the estimate to be trusted."""


class UnsupportedPolicy(ValueError):
    pass


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float

    def __iter__(self):
        return iter((self.value, self.se))


@dataclass(frozen=True)
class FarEstimate:
    """``far = 1 / mean run length``; censored runs count as ``max_steps``.

    Censoring shortens the mean run length, so ``far`` is then an upper bound.
    """

    far: float
    se: float
    censored_fraction: float
    mean_run_length: float
    mean_run_length_se: float
    trials: int
    max_steps: int

    @property
    def censored(self) -> bool:
        return self.censored_fraction > 0


@dataclass(frozen=True)
class DelayEstimate:
    value: float
    se: float
    mode: str
    change_point: float
    trials: int
    kept_fraction: float
    censored_fraction: float

    @property
    def reliable(self) -> bool:
        return self.kept_fraction >= 0.5 and self.censored_fraction == 0


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    if x.size == 0:
        return math.nan, math.nan
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan
    return float(x.mean()), se


def default_far_budget(threshold: float) -> int:
    """Step budget ``50 / alpha`` with ``alpha = exp(-threshold)``, at least 1000."""
    return max(1_000, math.ceil(50.0 * math.exp(min(threshold, 30.0))))


def estimate_far(
    policy: NetworkPolicy,
    trials: int = DEFAULT_FAR_TRIALS,
    max_steps: int | None = None,
    seed: int = 0,
    *,
    workers: int = 1,
) -> FarEstimate:
    if max_steps is None:
        # an every-n-th policy only advances its statistic on one step in n
        max_steps = default_far_budget(policy.threshold) * policy.n_stride
    batch = simulate(policy, trials, seed=seed, max_steps=max_steps, stream=STREAM_FAR, workers=workers)
    mean, se = _mean_se(batch.stop.astype(np.float64))
    censored = float(batch.censored.mean())
    if censored > 0.05:
        warnings.warn(
            f"{policy.summary()}: {censored:.1%} of false-alarm runs censored at {max_steps} steps",
            CensoringWarning,
            stacklevel=2,
        )
    far = 1.0 / mean
    far_se = se / mean**2 if trials > 1 else math.nan
    return FarEstimate(far, far_se, censored, mean, se, trials, max_steps)


def default_burn_in(policy: NetworkPolicy) -> int:
    d_min = min(kl_f1_f0(p) for p in policy.pairs)
    mu = min(s.mu for s in policy.sensors) if policy.algorithm is Algorithm.DEALL else 1.0
    return 10 * math.ceil(1.0 / (mu * d_min))


def _delay(policy, trials, seed, change_point, initial, max_steps, workers, mode) -> DelayEstimate:
    batch = simulate(
        policy,
        trials,
        seed=seed,
        max_steps=max_steps,
        change_point=change_point,
        stream=STREAM_DELAY,
        initial=initial,
        workers=workers,
    )
    kept = batch.stop >= change_point
    delays = (batch.stop[kept] - change_point).astype(np.float64)
    mean, se = _mean_se(delays)
    censored = float(batch.censored[kept].mean()) if kept.any() else 0.0
    est = DelayEstimate(mean, se, mode, change_point, int(kept.sum()), float(kept.mean()), censored)
    if not est.reliable:
        warnings.warn(
            f"{policy.summary()}: {mode} delay unreliable "
            f"(kept {est.kept_fraction:.1%}, censored {est.censored_fraction:.1%})",
            CensoringWarning,
            stacklevel=3,
        )
    return est


def estimate_cadd(
    policy: NetworkPolicy,
    trials: int = DEFAULT_DELAY_TRIALS,
    seed: int = 0,
    mode: str = "change_at_one",
    *,
    burn_in: int | None = None,
    max_steps: int = DEFAULT_DELAY_BUDGET,
    workers: int = 1,
) -> DelayEstimate:
    """Mean of ``tau - gamma`` over trials with ``tau >= gamma``.

    ``change_at_one`` sets ``gamma = 1``.  ``stationary_prechange`` runs
    ``burn_in`` pre-change steps first (``gamma = burn_in + 1``) and drops
    trials that alarmed before the change.
    """
    if mode == "change_at_one":
        gamma = 1
    elif mode == "stationary_prechange":
        if burn_in is None:
            burn_in = default_burn_in(policy)
        if burn_in < 0:
            raise ValueError(f"burn_in must be >= 0, got {burn_in}")
        gamma = burn_in + 1
    else:
        raise ValueError(f"unknown delay mode {mode!r}")
    return _delay(policy, trials, seed, gamma, "zero", max_steps, workers, mode)


def estimate_wadd_proxy(
    policy: NetworkPolicy,
    trials: int = DEFAULT_DELAY_TRIALS,
    seed: int = 0,
    *,
    max_steps: int = DEFAULT_DELAY_BUDGET,
    workers: int = 1,
) -> DelayEstimate:
    """Delay from the worst pre-change state: every DE-CuSum sensor at ``-h``.

    CuSum-based policies have worst state 0, so their proxy coincides with the
    ``change_at_one`` delay (same substreams, identical numbers).
    """
    if policy.algorithm is Algorithm.DEALL and any(math.isinf(s.h) for s in policy.sensors):
        raise UnsupportedPolicy("worst-state delay proxy needs finite h at every sensor")
    return _delay(policy, trials, seed, 1, "worst", max_steps, workers, "wadd_proxy")


def estimate_pdc(
    policy: NetworkPolicy,
    horizon: int = DEFAULT_HORIZON,
    trials: int = DEFAULT_PDC_TRIALS,
    seed: int = 0,
    *,
    discard: float = 0.1,
    respect_threshold: bool = False,
    workers: int = 1,
) -> list[Estimate]:
    """Per-sensor fraction of pre-change steps at which a sample is taken.

    By default the threshold is ignored and every trial runs ``horizon``
    no-change steps; the first ``discard`` fraction of them is dropped to
    remove start-up bias.  With ``respect_threshold`` each trial stops at its
    false alarm (or the horizon) and the whole run is counted.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if not 0 <= discard < 1:
        raise ValueError(f"discard must lie in [0, 1), got {discard}")
    if respect_threshold:
        batch = simulate(policy, trials, seed=seed, max_steps=horizon, stream=STREAM_PDC, workers=workers)
        frac = batch.samples / batch.stop[:, None]
    else:
        skip = int(horizon * discard)
        batch = simulate(
            policy.with_threshold(math.inf),
            trials,
            seed=seed,
            max_steps=horizon,
            stream=STREAM_PDC,
            mark=skip + 1,
            workers=workers,
        )
        frac = (batch.samples - batch.early) / (horizon - skip)
    out = []
    for k in range(policy.n_sensors):
        mean, se = _mean_se(frac[:, k])
        out.append(Estimate(mean, se))
    return out


@dataclass(frozen=True)
class LadderEstimate:
    """Renewal-reward pieces of the DE-CuSum duty cycle under no change.

    ``mean_tau_minus`` is the mean first time the LLR random walk goes below
    zero; ``mean_sleep`` the mean number of skipped steps that follow,
    ``ceil(|truncated ladder height| / mu)``.
    """

    mean_tau_minus: float
    mean_sleep: float
    pdc_formula_value: float
    pdc_se: float
    trials: int
    mu: float
    h: float

    def to_record(self) -> dict:
        return {
            "record": "oracle",
            "mu": self.mu,
            "h": self.h,
            "mean_tau_minus": self.mean_tau_minus,
            "mean_sleep": self.mean_sleep,
            "pdc": self.pdc_formula_value,
            "pdc_se": self.pdc_se,
            "trials": self.trials,
        }


def ladder_oracle(
    pair: DistributionPair, mu: float, h: float, trials: int = 1_000_000, seed: int = 0
) -> LadderEstimate:
    """Duty cycle of DE-CuSum from the descending ladder variable.

    Simulates the LLR random walk under ``f0`` until it first goes below zero,
    truncates the undershoot at ``-h``, and combines the means as
    ``E[tau-] / (E[tau-] + E[sleep])``.  LLRs are taken from scipy's log
    densities, independently of :mod:`decusum.models`.
    """
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    if not h >= 0:
        raise ValueError(f"h must be >= 0, got {h}")
    gen = substream(seed, STREAM_ORACLE, 0)
    f0 = stats.norm(pair.theta0, pair.sigma)
    f1 = stats.norm(pair.theta1, pair.sigma)
    walk = np.zeros(trials)
    tau = np.zeros(trials, dtype=np.int64)
    active = np.arange(trials)
    while active.size:
        x = f0.rvs(size=active.size, random_state=gen)
        walk[active] += f1.logpdf(x) - f0.logpdf(x)
        tau[active] += 1
        active = active[walk[active] >= 0.0]
    height = np.minimum(-walk, h)
    # keep a one-ulp error in height / mu from adding a sleep step
    sleep = np.ceil(height / mu * (1.0 - 1e-12))

    t_mean, s_mean = tau.mean(), sleep.mean()
    pdc = t_mean / (t_mean + s_mean)
    # delta method on the ratio of means
    grad = np.array([s_mean, -t_mean]) / (t_mean + s_mean) ** 2
    cov = np.cov(np.vstack([tau, sleep]))
    se = math.sqrt(float(grad @ cov @ grad) / trials)
    return LadderEstimate(float(t_mean), float(s_mean), float(pdc), se, trials, mu, h)


def pdc_bound_infinite_h(pair: DistributionPair, mu: float) -> float:
    """Duty-cycle upper bound ``mu / (mu + D(f0 || f1))`` for untruncated DE-CuSum."""
    return mu / (mu + kl_f0_f1(pair))


def theoretical_lower_bound(alpha: float, sensors: Sequence[DistributionPair | SensorConfig]) -> float:
    """Asymptotic delay lower bound ``|log alpha| / sum_l D(f1_l || f0_l)``."""
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    pairs = [s.pair if isinstance(s, SensorConfig) else s for s in sensors]
    return abs(math.log(alpha)) / sum(kl_f1_f0(p) for p in pairs)


@dataclass
class MetricsReport:
    policy: str
    threshold: float
    far: FarEstimate
    cadd: DelayEstimate
    wadd_proxy: DelayEstimate | None
    pdc: list[Estimate]
    trials: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        rec = {
            "policy": self.policy,
            "A": self.threshold,
            "far": self.far.far,
            "far_se": self.far.se,
            "abs_log_far": abs(math.log(self.far.far)),
            "censored_fraction": self.far.censored_fraction,
            "cadd": self.cadd.value,
            "cadd_se": self.cadd.se,
            "wadd_proxy": self.wadd_proxy.value if self.wadd_proxy else math.nan,
            "wadd_proxy_se": self.wadd_proxy.se if self.wadd_proxy else math.nan,
        }
        for k, est in enumerate(self.pdc, start=1):
            rec[f"pdc_{k}"] = est.value
            rec[f"pdc_{k}_se"] = est.se
        rec.update({f"{k}_trials": v for k, v in self.trials.items()})
        return rec


def evaluate(
    policy: NetworkPolicy,
    *,
    seed: int = 0,
    far_trials: int = DEFAULT_FAR_TRIALS,
    delay_trials: int = DEFAULT_DELAY_TRIALS,
    pdc_trials: int = DEFAULT_PDC_TRIALS,
    horizon: int = DEFAULT_HORIZON,
    far_max_steps: int | None = None,
    cadd_mode: str = "change_at_one",
    workers: int = 1,
) -> MetricsReport:
    far = estimate_far(policy, far_trials, far_max_steps, seed, workers=workers)
    cadd = estimate_cadd(policy, delay_trials, seed, cadd_mode, workers=workers)
    wadd = None
    if not any(math.isinf(s.h) for s in policy.sensors) or policy.algorithm is not Algorithm.DEALL:
        wadd = estimate_wadd_proxy(policy, delay_trials, seed, workers=workers)
    pdc = estimate_pdc(policy, horizon, pdc_trials, seed, workers=workers)
    trials = {"far": far_trials, "delay": delay_trials, "pdc": pdc_trials}
    return MetricsReport(policy.summary(), policy.threshold, far, cadd, wadd, pdc, trials)


# -- curve helpers -----------------------------------------------------------


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    slope_se: float


def fit_slope(x: Sequence[float], y: Sequence[float]) -> SlopeFit:
    res = stats.linregress(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return SlopeFit(float(res.slope), float(res.intercept), float(res.stderr))


def interpolate_at_far(
    far: Sequence[float], value: Sequence[float], se: Sequence[float], target: float
) -> Estimate | None:
    """Linear interpolation of a delay curve in ``|log FAR|``.

    Returns ``None`` when ``target`` lies outside the range the curve covers.
    The standard error combines the two bracketing points' errors with the
    interpolation weights; FAR uncertainty is not propagated.
    """
    x = np.abs(np.log(np.asarray(far, dtype=float)))
    order = np.argsort(x)
    x, v, s = x[order], np.asarray(value, dtype=float)[order], np.asarray(se, dtype=float)[order]
    t = abs(math.log(target))
    if t < x[0] or t > x[-1]:
        return None
    j = int(np.searchsorted(x, t, side="left"))
    if x[j] == t:
        return Estimate(float(v[j]), float(s[j]))
    w = (t - x[j - 1]) / (x[j] - x[j - 1])
    return Estimate(float((1 - w) * v[j - 1] + w * v[j]), math.sqrt((1 - w) ** 2 * s[j - 1] ** 2 + w**2 * s[j] ** 2))
