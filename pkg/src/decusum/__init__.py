"""Data-efficient quickest change detection in sensor networks."""

from decusum.detectors import (
    Censored,
    ControlViolation,
    CuSum,
    CuSumState,
    DeCuSumParams,
    DeCuSumState,
    RunResult,
    cusum_step,
    decusum_step,
    decusum_step_llr,
    run_until_stop,
)
from decusum.fusion import Algorithm, NetworkPolicy, SensorConfig, TrialBatch, TrialRecord, run_network_trial, simulate
from decusum.metrics import (
    estimate_cadd,
    estimate_far,
    estimate_pdc,
    estimate_wadd_proxy,
    ladder_oracle,
    pdc_bound_infinite_h,
    theoretical_lower_bound,
)
from decusum.models import DistributionPair, ObservationStream, kl_f0_f1, kl_f1_f0, log_likelihood_ratio

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "Censored",
    "ControlViolation",
    "CuSum",
    "CuSumState",
    "DeCuSumParams",
    "DeCuSumState",
    "DistributionPair",
    "NetworkPolicy",
    "ObservationStream",
    "RunResult",
    "SensorConfig",
    "TrialBatch",
    "TrialRecord",
    "cusum_step",
    "decusum_step",
    "decusum_step_llr",
    "estimate_cadd",
    "estimate_far",
    "estimate_pdc",
    "estimate_wadd_proxy",
    "kl_f0_f1",
    "kl_f1_f0",
    "ladder_oracle",
    "log_likelihood_ratio",
    "pdc_bound_infinite_h",
    "run_network_trial",
    "run_until_stop",
    "simulate",
    "theoretical_lower_bound",
]
