"""Observation models: pre/post-change distribution pairs and sample paths."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from decusum.rng import STREAM_SINGLE, NoiseBuffer, substream

GAUSSIAN_MEAN_SHIFT = "gaussian-mean-shift"
FAMILIES = (GAUSSIAN_MEAN_SHIFT,)


@dataclass(frozen=True)
class DistributionPair:
    """Pre-change density ``f0`` and post-change density ``f1`` of one sensor.

    Only the Gaussian mean-shift family is supported: ``f0 = N(theta0, sigma^2)``
    and ``f1 = N(theta1, sigma^2)``.
    """

    theta0: float
    theta1: float
    sigma: float = 1.0
    kind: str = GAUSSIAN_MEAN_SHIFT

    def __post_init__(self) -> None:
        if self.kind not in FAMILIES:
            raise ValueError(f"unsupported distribution family {self.kind!r}")
        for name in ("theta0", "theta1", "sigma"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, float(value))
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.theta1 == self.theta0:
            raise ValueError("theta1 == theta0: the change is undetectable")
        if not (self.theta1 - self.theta0) ** 2 / (2.0 * self.sigma**2) > 0:
            raise ValueError("mean shift too small: its KL divergence underflows to 0")

    # LLR(x) = (slope * x - offset) / scale; the batch engine uses the same
    # three constants so scalar and vectorized paths agree bit for bit.
    @property
    def llr_slope(self) -> float:
        return self.theta1 - self.theta0

    @property
    def llr_offset(self) -> float:
        return (self.theta1 * self.theta1 - self.theta0 * self.theta0) / 2.0

    @property
    def llr_scale(self) -> float:
        return self.sigma * self.sigma

    def mean(self, post_change: bool) -> float:
        return self.theta1 if post_change else self.theta0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "theta0": self.theta0, "theta1": self.theta1, "sigma": self.sigma}


def log_likelihood_ratio(pair: DistributionPair, x: float) -> float:
    """``log f1(x) / f0(x)`` in closed form."""
    return (pair.llr_slope * x - pair.llr_offset) / pair.llr_scale


def kl_f1_f0(pair: DistributionPair) -> float:
    """Kullback-Leibler divergence ``D(f1 || f0)``."""
    return (pair.theta1 - pair.theta0) ** 2 / (2.0 * pair.sigma**2)


def kl_f0_f1(pair: DistributionPair) -> float:
    """Kullback-Leibler divergence ``D(f0 || f1)``.

    Equal to :func:`kl_f1_f0` for a mean shift with common variance.
    """
    return (pair.theta0 - pair.theta1) ** 2 / (2.0 * pair.sigma**2)


@dataclass
class ObservationStream:
    """The observation sequence ``X_1, X_2, ...`` of one sensor.

    ``X_n`` is drawn from ``f0`` for ``n < change_point`` and from ``f1``
    afterwards.  ``change_point=math.inf`` never changes.  The noise comes from
    the ``(seed, stream, trial)`` substream; sensor ``sensor`` of an
    ``n_sensors`` network reads column ``sensor`` of the trial's noise matrix,
    so streams built here replay exactly what the batch engine simulates.
    """

    pair: DistributionPair
    change_point: float = math.inf
    seed: int = 0
    trial: int = 0
    sensor: int = 0
    n_sensors: int = 1
    stream: int = STREAM_SINGLE
    _noise: NoiseBuffer | None = field(default=None, init=False, repr=False)

    def __post_init__(self) -> None:
        if not (self.change_point == math.inf or (self.change_point >= 1 and float(self.change_point).is_integer())):
            raise ValueError(f"change_point must be a positive integer or inf, got {self.change_point}")
        if not 0 <= self.sensor < self.n_sensors:
            raise ValueError(f"sensor {self.sensor} out of range for {self.n_sensors} sensors")

    @classmethod
    def shared(cls, noise: NoiseBuffer, pair: DistributionPair, change_point: float, sensor: int) -> ObservationStream:
        """A stream reading column ``sensor`` of an existing noise buffer."""
        obj = cls(pair, change_point, sensor=sensor, n_sensors=noise.width)
        obj._noise = noise
        return obj

    def _buffer(self) -> NoiseBuffer:
        if self._noise is None:
            gen = substream(self.seed, self.stream, self.trial)
            self._noise = NoiseBuffer(gen, self.n_sensors)
        return self._noise

    def draw(self, n: int) -> float:
        """Observation ``X_n`` (1-based); repeated calls return the same value."""
        z = float(self._buffer().row(n)[self.sensor])
        return self.pair.mean(n >= self.change_point) + self.pair.sigma * z


def pair_arrays(pairs: list[DistributionPair]) -> tuple[np.ndarray, ...]:
    """Per-sensor ``(theta0, theta1, sigma, slope, offset, scale)`` arrays."""
    cols = [
        [p.theta0 for p in pairs],
        [p.theta1 for p in pairs],
        [p.sigma for p in pairs],
        [p.llr_slope for p in pairs],
        [p.llr_offset for p in pairs],
        [p.llr_scale for p in pairs],
    ]
    return tuple(np.asarray(c, dtype=np.float64) for c in cols)


def llr_block(z: np.ndarray, n0: int, change_point: float, pairs: list[DistributionPair]) -> np.ndarray:
    """LLRs for a noise block ``z`` of shape ``(trials, steps, sensors)``.

    Step ``j`` of the block is time ``n0 + j``.  ``z`` is overwritten.  The
    operation order matches :func:`log_likelihood_ratio` applied to
    ``mean + sigma * z``, so results are bitwise equal to the scalar path.
    """
    theta0, theta1, sigma, slope, offset, scale = pair_arrays(pairs)
    B = z.shape[1]
    split = int(min(max(change_point - n0, 0), B))
    x = z
    x *= sigma
    x[:, :split] += theta0
    x[:, split:] += theta1
    x *= slope
    x -= offset
    x /= scale
    return x
