"""Experiment configuration: a YAML file plus command-line overrides."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

import yaml

from decusum.fusion import Algorithm, NetworkPolicy, SensorConfig
from decusum.models import DistributionPair


class ConfigError(ValueError):
    pass


def parse_float(text: Any) -> float:
    """Float parser accepting ``inf``/``infinity`` spelled as strings."""
    if isinstance(text, (int, float)):
        return float(text)
    s = str(text).strip().lower()
    if s in ("inf", "+inf", "infinity", ".inf"):
        return math.inf
    try:
        return float(s)
    except ValueError:
        raise ConfigError(f"not a number: {text!r}") from None


def _dump_float(x: float) -> float | str:
    return "inf" if x == math.inf else x


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything an experiment command needs.

    Grid, trial-count and model fields left as ``None`` fall back to the
    defaults used by the command line.
    """

    algorithms: tuple[str, ...] = ("de-all",)
    sensors: int = 1
    theta0: float = 0.0
    theta1: float = 0.4
    sigma: float = 1.0
    mu: float = 0.2
    h: float = 20.0
    d: tuple[float, ...] | None = None
    skip_prob: float = 0.0
    stride: int = 1
    alpha_grid: tuple[float, ...] | None = None
    threshold_grid: tuple[float, ...] | None = None
    far_trials: int = 2_000
    delay_trials: int = 20_000
    pdc_trials: int = 1_000
    oracle_trials: int = 1_000_000
    horizon: int = 100_000
    far_max_steps: int | None = None
    cadd_mode: str = "change_at_one"
    burn_in: int | None = None
    change_point: int = 40
    seed: int | None = None
    out: str | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        for name in ("algorithms", "d", "alpha_grid", "threshold_grid"):
            value = getattr(self, name)
            if value is not None and not isinstance(value, tuple):
                object.__setattr__(self, name, tuple(value) if isinstance(value, (list, tuple)) else (value,))
        self.validate()

    def validate(self) -> None:
        for a in self.algorithms:
            try:
                Algorithm(a)
            except ValueError:
                raise ConfigError(f"unknown algorithm {a!r}; choose from {[x.value for x in Algorithm]}") from None
        if self.alpha_grid is not None and self.threshold_grid is not None:
            raise ConfigError("give either alpha_grid or threshold_grid, not both")
        if self.alpha_grid is not None and not all(0 < a < 1 for a in self.alpha_grid):
            raise ConfigError(f"alpha values must lie in (0, 1): {self.alpha_grid}")
        if self.threshold_grid is not None and not all(a >= 0 for a in self.threshold_grid):
            raise ConfigError(f"thresholds must be >= 0: {self.threshold_grid}")
        if self.sensors < 1:
            raise ConfigError("sensors must be >= 1")
        if self.d is not None and len(self.d) != self.sensors:
            raise ConfigError(f"d has {len(self.d)} entries for {self.sensors} sensors")
        for name in ("far_trials", "delay_trials", "pdc_trials", "oracle_trials", "horizon", "workers", "change_point"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.seed is not None and self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if self.cadd_mode not in ("change_at_one", "stationary_prechange"):
            raise ConfigError(f"unknown cadd_mode {self.cadd_mode!r}")
        try:
            self.policy(self.algorithms[0], 0.0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    # -- derived objects -----------------------------------------------------

    @property
    def pair(self) -> DistributionPair:
        return DistributionPair(self.theta0, self.theta1, self.sigma)

    def policy(self, algorithm: str, threshold: float) -> NetworkPolicy:
        shares = self.d if self.d is not None else (None,) * self.sensors
        sensors = tuple(SensorConfig(self.pair, self.mu, self.h, share) for share in shares)
        return NetworkPolicy(Algorithm(algorithm), sensors, threshold, self.skip_prob, self.stride)

    def thresholds(self) -> list[tuple[float | None, float]]:
        """``(alpha, A)`` pairs; ``A = |log alpha|`` on an alpha grid."""
        if self.alpha_grid is not None:
            return [(a, abs(math.log(a))) for a in self.alpha_grid]
        if self.threshold_grid is not None:
            return [(None, a) for a in self.threshold_grid]
        raise ConfigError("no alpha_grid or threshold_grid given")

    # -- (de)serialization ---------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, tuple):
                value = [_dump_float(v) if isinstance(v, float) else v for v in value]
            elif isinstance(value, float):
                value = _dump_float(value)
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ExperimentConfig:
        known = {f.name: f for f in fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict[str, Any] = {}
        for name, value in data.items():
            if value is None:
                kwargs[name] = None
            elif name in ("alpha_grid", "threshold_grid", "d"):
                items = value if isinstance(value, (list, tuple)) else str(value).split(",")
                kwargs[name] = tuple(parse_float(v) for v in items)
            elif name == "algorithms":
                items = value if isinstance(value, (list, tuple)) else str(value).split(",")
                kwargs[name] = tuple(str(v).strip() for v in items)
            elif name in ("theta0", "theta1", "sigma", "mu", "h", "skip_prob"):
                kwargs[name] = parse_float(value)
            elif name in ("cadd_mode", "out"):
                kwargs[name] = str(value)
            else:
                try:
                    kwargs[name] = int(value)
                except (TypeError, ValueError):
                    raise ConfigError(f"{name} must be an integer, got {value!r}") from None
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must be a mapping")
        return cls.from_dict(data)

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def override(self, **changes: Any) -> ExperimentConfig:
        changes = {k: v for k, v in changes.items() if v is not None}
        if "alpha_grid" in changes:
            changes.setdefault("threshold_grid", None)
        elif "threshold_grid" in changes:
            changes.setdefault("alpha_grid", None)
        merged = {**self.to_dict(), **changes}
        merged = {k: v for k, v in merged.items() if v is not None}
        return self.from_dict(merged)

    def digest(self) -> str:
        """Hash of every field that can change results (not ``out``/``workers``)."""
        data = {k: v for k, v in self.to_dict().items() if k not in ("out", "workers")}
        blob = json.dumps(data, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]
