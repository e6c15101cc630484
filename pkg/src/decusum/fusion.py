"""Sensor networks: local detectors plus fusion-center stopping rules.

Five policies are supported:

* ``centralized-cusum`` -- raw observations are sent to the fusion center,
  which runs one CuSum on the summed LLRs;
* ``all`` -- each sensor runs CuSum and sends a "1" while its statistic is
  above its share ``d_l * A``; the center stops when all sensors send "1";
* ``de-all`` -- as ``all`` with DE-CuSum at every sensor;
* ``fractional-all`` -- ``all`` where each sensor independently skips each
  sample with probability ``skip_prob``; a skipped step leaves the local
  statistic unchanged;
* ``every-nth`` -- ``centralized-cusum`` using only times that are multiples
  of ``n_stride``.

Two drivers produce :class:`TrialRecord` values.  :func:`simulate` is the
batch engine built on :mod:`decusum.kernels`; :func:`run_stepwise` replays
one trial through the per-step functions below and is the reference the
engine is tested against.  Both read the same random substreams, so they agree
exactly.
"""

from __future__ import annotations

import enum
import math
import multiprocessing
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import IO, Sequence

import numpy as np

from decusum import kernels
from decusum.detectors import (
    Censored,
    CuSumState,
    DeCuSumParams,
    DeCuSumState,
    StopTime,
    cusum_step,
    decusum_step_llr,
)
from decusum.models import DistributionPair, kl_f1_f0, llr_block, log_likelihood_ratio
from decusum.rng import KIND_COIN, KIND_OBSERVATION, STREAM_SINGLE, NoiseBuffer, substream


class Algorithm(str, enum.Enum):
    CENTRALIZED = "centralized-cusum"
    ALL = "all"
    DEALL = "de-all"
    FRACTIONAL = "fractional-all"
    EVERY_NTH = "every-nth"

    @property
    def binary_uplink(self) -> bool:
        return self in (Algorithm.ALL, Algorithm.DEALL, Algorithm.FRACTIONAL)


@dataclass(frozen=True)
class SensorConfig:
    pair: DistributionPair
    mu: float = 1.0
    h: float = 0.0
    d: float | None = None

    def __post_init__(self) -> None:
        if not self.mu > 0 or math.isinf(self.mu):
            raise ValueError(f"mu must be a positive finite number, got {self.mu}")
        if not self.h >= 0:
            raise ValueError(f"h must be >= 0, got {self.h}")
        if self.d is not None and not 0 < self.d <= 1:
            raise ValueError(f"threshold share d must lie in (0, 1], got {self.d}")

    @property
    def params(self) -> DeCuSumParams:
        return DeCuSumParams(self.mu, self.h)


def kl_shares(pairs: Sequence[DistributionPair]) -> list[float]:
    """Threshold shares proportional to each sensor's ``D(f1 || f0)``."""
    kl = [kl_f1_f0(p) for p in pairs]
    total = sum(kl)
    return [k / total for k in kl]


@dataclass(frozen=True)
class NetworkPolicy:
    algorithm: Algorithm
    sensors: tuple[SensorConfig, ...]
    threshold: float
    skip_prob: float = 0.0
    n_stride: int = 1
    allow_unnormalized_shares: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        object.__setattr__(self, "sensors", tuple(self.sensors))
        if not self.sensors:
            raise ValueError("a network needs at least one sensor")
        if not self.threshold >= 0:
            raise ValueError(f"threshold must be >= 0, got {self.threshold}")
        if not 0 <= self.skip_prob < 1:
            raise ValueError(f"skip_prob must lie in [0, 1), got {self.skip_prob}")
        if int(self.n_stride) != self.n_stride or self.n_stride < 1:
            raise ValueError(f"n_stride must be a positive integer, got {self.n_stride}")
        given = [s.d is not None for s in self.sensors]
        if any(given) and not all(given):
            raise ValueError("threshold shares must be given for every sensor or for none")
        if all(given):
            total = sum(s.d for s in self.sensors)
            if abs(total - 1.0) > 1e-12:
                if not self.allow_unnormalized_shares:
                    raise ValueError(f"threshold shares sum to {total}, not 1")
                warnings.warn(f"threshold shares sum to {total}, not 1", stacklevel=3)

    @classmethod
    def homogeneous(
        cls,
        algorithm: Algorithm | str,
        n_sensors: int,
        pair: DistributionPair,
        threshold: float,
        *,
        mu: float = 1.0,
        h: float = 0.0,
        skip_prob: float = 0.0,
        n_stride: int = 1,
    ) -> NetworkPolicy:
        sensor = SensorConfig(pair, mu, h)
        return cls(Algorithm(algorithm), (sensor,) * n_sensors, threshold, skip_prob, n_stride)

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)

    @property
    def pairs(self) -> list[DistributionPair]:
        return [s.pair for s in self.sensors]

    @property
    def shares(self) -> list[float]:
        if self.sensors[0].d is None:
            return kl_shares(self.pairs)
        return [s.d for s in self.sensors]

    @property
    def local_thresholds(self) -> np.ndarray:
        return np.array([d * self.threshold for d in self.shares])

    @property
    def total_kl(self) -> float:
        return sum(kl_f1_f0(p) for p in self.pairs)

    def with_threshold(self, threshold: float) -> NetworkPolicy:
        return replace(self, threshold=threshold)

    def summary(self) -> str:
        s = self.sensors[0]
        text = f"{self.algorithm.value} L={self.n_sensors} A={self.threshold!r}"
        if self.algorithm is Algorithm.DEALL:
            text += f" mu={s.mu!r} h={s.h!r}"
        elif self.algorithm is Algorithm.FRACTIONAL:
            text += f" skip_prob={self.skip_prob!r}"
        elif self.algorithm is Algorithm.EVERY_NTH:
            text += f" stride={self.n_stride}"
        return text


# -- per-step rules ----------------------------------------------------------


def _llrs(policy: NetworkPolicy, observations: Sequence[float | None]) -> list[float | None]:
    if len(observations) != policy.n_sensors:
        raise ValueError(f"expected {policy.n_sensors} observations, got {len(observations)}")
    return [None if x is None else log_likelihood_ratio(p, x) for p, x in zip(policy.pairs, observations)]


def _sequential_sum(values: Sequence[float]) -> float:
    # left-to-right, matching the engine's accumulation order
    total = values[0]
    for v in values[1:]:
        total = total + v
    return total


def step_centralized(
    state: CuSumState, observations: Sequence[float], policy: NetworkPolicy
) -> tuple[CuSumState, bool]:
    """Fuse one vector of raw observations into the central CuSum ``V``."""
    llrs = _llrs(policy, observations)
    if any(v is None for v in llrs):
        raise ValueError("centralized CuSum uses every observation")
    new = cusum_step(state, _sequential_sum(llrs))
    return new, new.value > policy.threshold


def step_all(
    states: Sequence[CuSumState], observations: Sequence[float], policy: NetworkPolicy
) -> tuple[list[CuSumState], tuple[int, ...], bool]:
    llrs = _llrs(policy, observations)
    if any(v is None for v in llrs):
        raise ValueError("ALL uses every observation")
    new = [cusum_step(s, v) for s, v in zip(states, llrs)]
    ys = tuple(int(s.value > t) for s, t in zip(new, policy.local_thresholds))
    return new, ys, all(ys)


def step_deall(
    states: Sequence[DeCuSumState], observations: Sequence[float | None], policy: NetworkPolicy
) -> tuple[list[DeCuSumState], tuple[int, ...], bool]:
    """DE-CuSum at every sensor; ``None`` marks a skipped observation."""
    llrs = _llrs(policy, observations)
    new = [decusum_step_llr(s, c.params, v) for s, c, v in zip(states, policy.sensors, llrs)]
    ys = tuple(int(s.value > t) for s, t in zip(new, policy.local_thresholds))
    return new, ys, all(ys)


def step_fractional(
    states: Sequence[CuSumState],
    skips: Sequence[bool],
    observations: Sequence[float | None],
    policy: NetworkPolicy,
) -> tuple[list[CuSumState], tuple[int, ...], bool]:
    """ALL with random local skipping; a skipped sensor holds its statistic."""
    llrs = _llrs(policy, observations)
    new = []
    for s, skip, v in zip(states, skips, llrs):
        if skip:
            new.append(replace(s, steps=s.steps + 1))
        elif v is None:
            raise ValueError("a sensor that does not skip needs its observation")
        else:
            new.append(cusum_step(s, v))
    ys = tuple(int(s.value > t) for s, t in zip(new, policy.local_thresholds))
    return new, ys, all(ys)


# -- trial records -----------------------------------------------------------


@dataclass
class TrialRecord:
    stop_time: StopTime
    change_point: float
    samples_per_sensor: list[int]
    ones_transmitted_per_sensor: list[int]
    pre_change_samples_per_sensor: list[int]

    @property
    def censored(self) -> bool:
        return isinstance(self.stop_time, Censored)


@dataclass
class TrialBatch:
    """Results of a batch of trials as arrays (one row per trial).

    ``stop`` holds the alarm time, or ``max_steps`` for censored trials.
    ``early`` counts samples taken at times ``n < mark``.
    """

    stop: np.ndarray
    censored: np.ndarray
    samples: np.ndarray
    early: np.ndarray
    ones: np.ndarray
    change_point: float
    max_steps: int
    mark: float

    def __len__(self) -> int:
        return self.stop.shape[0]

    def record(self, i: int) -> TrialRecord:
        stop: StopTime = Censored(self.max_steps) if self.censored[i] else int(self.stop[i])
        pre = self.early[i] if self.mark == self.change_point else np.zeros_like(self.early[i])
        return TrialRecord(
            stop,
            self.change_point,
            self.samples[i].tolist(),
            self.ones[i].tolist(),
            pre.tolist(),
        )

    def records(self) -> list[TrialRecord]:
        return [self.record(i) for i in range(len(self))]

    @classmethod
    def concat(cls, parts: list[TrialBatch]) -> TrialBatch:
        first = parts[0]
        return cls(
            np.concatenate([p.stop for p in parts]),
            np.concatenate([p.censored for p in parts]),
            np.concatenate([p.samples for p in parts]),
            np.concatenate([p.early for p in parts]),
            np.concatenate([p.ones for p in parts]),
            first.change_point,
            first.max_steps,
            first.mark,
        )


# -- batch engine ------------------------------------------------------------

FIRST_BLOCK = 32
MAX_BLOCK = 1024
DEFAULT_CHUNK = 256


def initial_statistics(policy: NetworkPolicy, initial: str) -> np.ndarray:
    """Per-sensor starting statistic: ``zero`` or the ``worst`` state ``-h``."""
    if initial == "zero":
        return np.zeros(policy.n_sensors)
    if initial != "worst":
        raise ValueError(f"initial must be 'zero' or 'worst', got {initial!r}")
    if policy.algorithm is not Algorithm.DEALL:
        return np.zeros(policy.n_sensors)
    hs = np.array([s.h for s in policy.sensors])
    if np.isinf(hs).any():
        raise ValueError("the worst DE-CuSum state is unbounded when h is infinite")
    return 0.0 - hs


def _simulate_chunk(
    policy: NetworkPolicy,
    trial_ids: np.ndarray,
    seed: int,
    stream: int,
    change_point: float,
    max_steps: int,
    initial: str,
    mark: float,
    backend: str | None,
) -> TrialBatch:
    algo = policy.algorithm
    N, L = len(trial_ids), policy.n_sensors
    obs = [substream(seed, stream, int(t), KIND_OBSERVATION) for t in trial_ids]
    coins = None
    if algo is Algorithm.FRACTIONAL:
        coins = [substream(seed, stream, int(t), KIND_COIN) for t in trial_ids]

    stop = np.zeros(N, dtype=np.int64)
    central = algo in (Algorithm.CENTRALIZED, Algorithm.EVERY_NTH)
    if central:
        samples = np.zeros(N, dtype=np.int64)
        early = np.zeros(N, dtype=np.int64)
        stat = np.zeros(N)
    else:
        samples = np.zeros((N, L), dtype=np.int64)
        early = np.zeros((N, L), dtype=np.int64)
        stat = np.tile(initial_statistics(policy, initial), (N, 1))
    ones = np.zeros((N, L), dtype=np.int64)

    thr = np.ascontiguousarray(policy.local_thresholds)
    mu = np.array([s.mu for s in policy.sensors])
    floor = 0.0 - np.array([s.h for s in policy.sensors])
    fn = kernels.kernel(
        {
            Algorithm.CENTRALIZED: "centralized",
            Algorithm.EVERY_NTH: "every_nth",
            Algorithm.ALL: "all",
            Algorithm.FRACTIONAL: "fractional",
            Algorithm.DEALL: "deall",
        }[algo],
        backend,
    )
    mark = float(mark)
    n0, block = 1, FIRST_BLOCK
    while n0 <= max_steps:
        act = np.flatnonzero(stop == 0)
        if act.size == 0:
            break
        block = min(block, max_steps - n0 + 1)
        z = np.empty((act.size, block, L))
        for row, i in enumerate(act):
            obs[i].standard_normal(out=z[row])
        llr = llr_block(z, n0, change_point, policy.pairs)
        st = stop[act]
        sm, ea, x = samples[act], early[act], stat[act]
        if central:
            s = llr[:, :, 0].copy()
            for k in range(1, L):
                s += llr[:, :, k]
            if algo is Algorithm.CENTRALIZED:
                fn(s, x, st, sm, ea, n0, mark, float(policy.threshold))
            else:
                fn(s, x, st, sm, ea, n0, mark, float(policy.threshold), int(policy.n_stride))
        else:
            on = ones[act]
            if algo is Algorithm.ALL:
                fn(llr, x, st, sm, ea, on, n0, mark, thr)
            elif algo is Algorithm.FRACTIONAL:
                u = np.empty((act.size, block, L))
                for row, i in enumerate(act):
                    coins[i].random(out=u[row])
                fn(llr, u < policy.skip_prob, x, st, sm, ea, on, n0, mark, thr)
            else:
                fn(llr, x, st, sm, ea, on, n0, mark, thr, mu, floor)
            ones[act] = on
        stop[act], samples[act], early[act], stat[act] = st, sm, ea, x
        n0 += block
        block = min(2 * block, MAX_BLOCK)

    censored = stop == 0
    stop[censored] = max_steps
    if central:
        samples = np.repeat(samples[:, None], L, axis=1)
        early = np.repeat(early[:, None], L, axis=1)
    return TrialBatch(stop, censored, samples, early, ones, change_point, max_steps, mark)


def simulate(
    policy: NetworkPolicy,
    trials: int,
    *,
    seed: int,
    max_steps: int,
    change_point: float = math.inf,
    stream: int = STREAM_SINGLE,
    initial: str = "zero",
    mark: float | None = None,
    trial_offset: int = 0,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
    backend: str | None = None,
) -> TrialBatch:
    """Run ``trials`` independent trials of ``policy`` with the batch engine.

    Trial ``i`` uses the substreams of trial index ``trial_offset + i``, so the
    result does not depend on ``chunk_size`` or ``workers``.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if max_steps < 1:
        raise ValueError(f"max_steps must be >= 1, got {max_steps}")
    if not (change_point == math.inf or change_point >= 1):
        raise ValueError(f"change_point must be >= 1 or inf, got {change_point}")
    mark = change_point if mark is None else mark
    ids = np.arange(trial_offset, trial_offset + trials)
    chunks = [ids[i : i + chunk_size] for i in range(0, trials, chunk_size)]
    args = (seed, stream, change_point, max_steps, initial, mark, backend)
    if workers > 1 and len(chunks) > 1:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            parts = list(pool.map(_simulate_chunk, [policy] * len(chunks), chunks, *[[a] * len(chunks) for a in args]))
    else:
        parts = [_simulate_chunk(policy, c, *args) for c in chunks]
    return TrialBatch.concat(parts)


def run_network_trial(
    policy: NetworkPolicy,
    change_point: float,
    seed: int,
    max_steps: int,
    *,
    trial: int = 0,
    stream: int = STREAM_SINGLE,
) -> TrialRecord:
    return simulate(
        policy, 1, seed=seed, max_steps=max_steps, change_point=change_point, stream=stream, trial_offset=trial
    ).record(0)


# -- step-by-step reference driver -------------------------------------------


@dataclass
class _Trace:
    fh: IO[str] | None
    rows: list[tuple[int, int, float, int, int]] = field(default_factory=list)

    def add(self, n, values, sampled, sent) -> None:
        for k, (v, s, y) in enumerate(zip(values, sampled, sent)):
            row = (n, k, v, int(s), int(y))
            self.rows.append(row)
            if self.fh is not None:
                self.fh.write(f"{row[0]} {row[1]} {row[2]!r} {row[3]} {row[4]}\n")


def run_stepwise(
    policy: NetworkPolicy,
    change_point: float,
    seed: int,
    max_steps: int,
    *,
    trial: int = 0,
    stream: int = STREAM_SINGLE,
    initial: str = "zero",
    trace: IO[str] | None = None,
) -> TrialRecord:
    """Replay one trial through the per-step functions.

    With ``trace`` set, one ``n sensor value sampled transmitted`` line is
    written per sensor and step.  For the centralized policies ``value`` is the
    fused statistic and ``transmitted`` flags a raw-sample upload.
    """
    algo = policy.algorithm
    L = policy.n_sensors
    noise = NoiseBuffer(substream(seed, stream, trial, KIND_OBSERVATION), L)
    coins = NoiseBuffer(substream(seed, stream, trial, KIND_COIN), L, uniform=True)
    pairs = policy.pairs
    log = _Trace(trace)
    samples = [0] * L
    pre = [0] * L
    ones = [0] * L

    def observe(n: int) -> list[float]:
        z = noise.row(n)
        return [p.mean(n >= change_point) + p.sigma * float(z[k]) for k, p in enumerate(pairs)]

    def count(n: int, sampled: Sequence[bool], sent: Sequence[int]) -> None:
        for k in range(L):
            if sampled[k]:
                samples[k] += 1
                if n < change_point:
                    pre[k] += 1
            ones[k] += sent[k]

    start = initial_statistics(policy, initial)
    if algo in (Algorithm.CENTRALIZED, Algorithm.EVERY_NTH):
        v = CuSumState()
        for n in range(1, max_steps + 1):
            used = algo is Algorithm.CENTRALIZED or n % policy.n_stride == 0
            if used:
                v, stopped = step_centralized(v, observe(n), policy)
            else:
                stopped = v.value > policy.threshold
            count(n, [used] * L, [0] * L)
            log.add(n, [v.value] * L, [used] * L, [used] * L)
            if stopped:
                return TrialRecord(n, change_point, samples, ones, pre)
    elif algo is Algorithm.DEALL:
        states = [DeCuSumState.at(w) for w in start]
        for n in range(1, max_steps + 1):
            sampled = [s.next_takes_sample for s in states]
            xs = observe(n)
            obs = [x if take else None for x, take in zip(xs, sampled)]
            states, ys, stopped = step_deall(states, obs, policy)
            count(n, sampled, ys)
            log.add(n, [s.value for s in states], sampled, ys)
            if stopped:
                return TrialRecord(n, change_point, samples, ones, pre)
    else:
        states = [CuSumState()] * L
        for n in range(1, max_steps + 1):
            xs = observe(n)
            if algo is Algorithm.FRACTIONAL:
                skips = [bool(u < policy.skip_prob) for u in coins.row(n)]
                obs = [None if skip else x for x, skip in zip(xs, skips)]
                states, ys, stopped = step_fractional(states, skips, obs, policy)
            else:
                skips = [False] * L
                states, ys, stopped = step_all(states, xs, policy)
            sampled = [not s for s in skips]
            count(n, sampled, ys)
            log.add(n, [s.value for s in states], sampled, ys)
            if stopped:
                return TrialRecord(n, change_point, samples, ones, pre)
    return TrialRecord(Censored(max_steps), change_point, samples, ones, pre)
