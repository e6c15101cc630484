"""Single-stream sequential detectors as step-wise state machines.

``cusum_step`` is the classical reset-at-zero recursion.  ``decusum_step`` is
its data-efficient variant: while the statistic is negative the detector skips
observations and ramps back towards zero in increments of ``mu``, and an
undershoot after a sample is truncated at ``-h``.

The first sample after waking may itself undershoot, which starts a new
sleep at once; nothing in the recursion prevents it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

from decusum.kernels import RAMP_TOL
from decusum.models import DistributionPair, ObservationStream, log_likelihood_ratio


class ControlViolation(RuntimeError):
    """An observation was supplied when the detector skips, or withheld when it samples."""


@dataclass(frozen=True)
class Censored:
    """Stop time of a run that hit its step budget without an alarm."""

    budget: int

    def __int__(self) -> int:
        return self.budget


StopTime = Union[int, Censored]


@dataclass(frozen=True)
class CuSumState:
    value: float = 0.0
    steps: int = 0

    def __post_init__(self) -> None:
        if self.value < 0:
            raise ValueError(f"CuSum statistic must be >= 0, got {self.value}")


@dataclass(frozen=True)
class CuSum:
    """Marker config for :func:`run_until_stop`: the plain CuSum detector."""


@dataclass(frozen=True)
class DeCuSumParams:
    mu: float
    h: float
    threshold: float = math.inf

    def __post_init__(self) -> None:
        if not self.mu > 0 or math.isinf(self.mu):
            raise ValueError(f"mu must be a positive finite number, got {self.mu}")
        if not self.h >= 0:
            raise ValueError(f"h must be >= 0, got {self.h}")
        if not self.threshold >= 0:
            raise ValueError(f"threshold must be >= 0, got {self.threshold}")

    @property
    def floor(self) -> float:
        # 0.0 - 0.0 is +0.0, so h = 0 truncates exactly like CuSum's reset
        return 0.0 - self.h

    @property
    def max_skip_run(self) -> float:
        """Upper bound on consecutive skips; infinite when ``h`` is."""
        return math.inf if math.isinf(self.h) else math.ceil(self.h / self.mu) + 1


@dataclass(frozen=True)
class DeCuSumState:
    value: float = 0.0
    steps: int = 0
    samples_taken: int = 0

    @property
    def next_takes_sample(self) -> bool:
        return self.value >= 0.0

    @classmethod
    def at(cls, value: float) -> DeCuSumState:
        """A fresh state whose statistic starts at ``value`` (e.g. ``-h``)."""
        return cls(value=float(value))


def cusum_step(state: CuSumState, llr: float) -> CuSumState:
    value = state.value + llr
    if value < 0.0:
        value = 0.0
    return CuSumState(value, state.steps + 1)


def decusum_step(
    state: DeCuSumState, params: DeCuSumParams, observation: float | None, pair: DistributionPair
) -> DeCuSumState:
    """Advance one time step.

    ``observation`` is the sample taken at this step, or ``None`` when the
    detector is skipping.  Supplying one against the sampling control raises
    :class:`ControlViolation`.
    """
    llr = None if observation is None else log_likelihood_ratio(pair, observation)
    return decusum_step_llr(state, params, llr)


def decusum_step_llr(state: DeCuSumState, params: DeCuSumParams, llr: float | None) -> DeCuSumState:
    """:func:`decusum_step` for callers holding the log-likelihood ratio."""
    if state.next_takes_sample:
        if llr is None:
            raise ControlViolation(f"step {state.steps + 1}: a sample is due but none was given")
        value = state.value + llr
        if value < params.floor:
            value = params.floor
        return DeCuSumState(value, state.steps + 1, state.samples_taken + 1)
    if llr is not None:
        raise ControlViolation(f"step {state.steps + 1}: detector is skipping but an observation was given")
    value = state.value + params.mu
    if value > -(RAMP_TOL * params.mu):
        # snap rounding drift; see decusum.kernels.RAMP_TOL
        value = 0.0
    return replace(state, value=value, steps=state.steps + 1)


@dataclass
class RunResult:
    stop_time: StopTime
    samples_taken: int
    trajectory: list[tuple[int, float, int]] | None = None

    @property
    def censored(self) -> bool:
        return isinstance(self.stop_time, Censored)


def run_until_stop(
    detector: CuSum | DeCuSumParams,
    stream: ObservationStream,
    threshold: float,
    max_steps: int,
    *,
    record: bool = False,
) -> RunResult:
    """Run a detector on ``stream`` until its statistic exceeds ``threshold``.

    The trajectory, when recorded, holds ``(n, statistic, sampled)`` per step.
    """
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    if max_steps < 1:
        raise ValueError(f"max_steps must be >= 1, got {max_steps}")
    trajectory = [] if record else None
    pair = stream.pair

    if isinstance(detector, DeCuSumParams):
        state = DeCuSumState()
        for n in range(1, max_steps + 1):
            sampled = state.next_takes_sample
            llr = log_likelihood_ratio(pair, stream.draw(n)) if sampled else None
            state = decusum_step_llr(state, detector, llr)
            if record:
                trajectory.append((n, state.value, int(sampled)))
            if state.value > threshold:
                return RunResult(n, state.samples_taken, trajectory)
        return RunResult(Censored(max_steps), state.samples_taken, trajectory)

    if not isinstance(detector, CuSum):
        raise TypeError(f"unknown detector config {detector!r}")
    state = CuSumState()
    for n in range(1, max_steps + 1):
        state = cusum_step(state, log_likelihood_ratio(pair, stream.draw(n)))
        if record:
            trajectory.append((n, state.value, 1))
        if state.value > threshold:
            return RunResult(n, n, trajectory)
    return RunResult(Censored(max_steps), max_steps, trajectory)


def write_trajectory(result: RunResult, fh) -> None:
    """Dump a recorded trajectory as ``n value sampled`` lines."""
    if result.trajectory is None:
        raise ValueError("run was not recorded; pass record=True")
    for n, value, sampled in result.trajectory:
        fh.write(f"{n} {value!r} {sampled}\n")
