"""Sample sizes for a target margin of error, and margins for a given sample size."""
from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Optional, Union

from .population_model import ClaimPopulation, PopulationMoments, moments
from .variance_engine import (
    ErrorRate,
    PartialErrorSpec,
    VarianceEstimate,
    conservative_partial,
    conservative_pi,
    var_conditional_expected,
    var_partial_bound,
    var_partial_expected,
    var_ratio_expected,
)

__all__ = [
    "PlanRequest",
    "SamplePlan",
    "UnsupportedPlan",
    "margin_of_error",
    "normal_quantile",
    "plan",
    "sample_size",
    "sample_size_real",
    "z_for_confidence",
]

_STD_NORMAL = NormalDist()

# plan warnings: our thresholds for when large-sample normality is doubtful
MIN_N_NORMAL = 30
MIN_EXPECTED_ERRORS = 10


class UnsupportedPlan(ValueError):
    """The requested estimator / variance source combination has no closed form."""


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF, accurate to well below 1e-9."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile level {p} outside (0, 1)")
    return _STD_NORMAL.inv_cdf(p)


def z_for_confidence(confidence: float) -> float:
    """Two-sided critical value for a confidence level such as 0.90."""
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence {confidence} outside (0, 1)")
    return normal_quantile(0.5 + confidence / 2.0)


def _value(variance: Union[VarianceEstimate, float]) -> float:
    v = variance.value if isinstance(variance, VarianceEstimate) else float(variance)
    if v < 0.0:
        raise ValueError("variance must be non-negative")
    return v


def margin_of_error(N: int, n: int, variance: Union[VarianceEstimate, float],
                    confidence: float) -> float:
    """Half-width ``z * N * sqrt(var/n * (N-n)/(N-1))`` of the large-sample interval."""
    if n < 1:
        raise ValueError("margin of error undefined for n = 0")
    if n > N:
        raise ValueError(f"sample size {n} exceeds population size {N}")
    if N < 2:
        raise ValueError("finite population correction needs N >= 2")
    v = _value(variance)
    z = z_for_confidence(confidence)
    return z * N * math.sqrt(v / n * (N - n) / (N - 1))


def sample_size_real(N: int, variance: Union[VarianceEstimate, float], margin: float,
                     confidence: float) -> float:
    """Unrounded sample size ``z^2 N^3 var / (E^2 (N-1) + z^2 N^2 var)``."""
    if margin <= 0.0:
        raise ValueError("margin must be positive")
    v = _value(variance)
    z = z_for_confidence(confidence)
    top = z * z * N**3 * v
    if top == 0.0:
        return 0.0
    return top / (margin * margin * (N - 1) + z * z * N * N * v)


@dataclass(frozen=True)
class SamplePlan:
    n: int
    variance_used: VarianceEstimate
    achieved_margin: float
    z: float
    conservative: bool = False
    n_real: float = 0.0
    clamped: bool = False
    warnings: tuple[str, ...] = ()
    estimator: str = "simple_expansion"
    pi: Optional[float] = None


def sample_size(N: int, variance: Union[VarianceEstimate, float], margin: float,
                confidence: float) -> SamplePlan:
    """Smallest n whose margin of error does not exceed ``margin`` (capped at N).

    Starts from the ceiling of the closed form and then nudges by one in either
    direction so that ``margin_of_error(n) <= margin < margin_of_error(n - 1)``
    holds under the same floating-point evaluation.
    """
    est = variance if isinstance(variance, VarianceEstimate) else VarianceEstimate(
        _value(variance), "given")
    z = z_for_confidence(confidence)
    real = sample_size_real(N, est, margin, confidence)
    if real == 0.0:
        return SamplePlan(0, est, 0.0, z, n_real=0.0)
    n = min(max(math.ceil(real), 1), N)
    if N >= 2:
        while n > 1 and margin_of_error(N, n - 1, est, confidence) <= margin:
            n -= 1
        while n < N and margin_of_error(N, n, est, confidence) > margin:
            n += 1
        achieved = margin_of_error(N, n, est, confidence)
    else:
        achieved = 0.0
    return SamplePlan(n, est, achieved, z, n_real=real, clamped=(n == N))


@dataclass(frozen=True)
class PlanRequest:
    """What to plan for.  ``variance_source`` is "pi", "conservative", "partial" or
    "partial_conservative"; ``exact_partial`` selects the exact partial-error variance
    instead of its simpler upper bound."""

    margin: float
    confidence: float
    estimator: str = "simple_expansion"
    variance_source: str = "pi"
    exact_partial: bool = False

    def __post_init__(self):
        if self.margin <= 0.0:
            raise ValueError("margin must be positive")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must lie in (0, 1)")
        if self.estimator not in ("simple_expansion", "ratio"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.variance_source not in ("pi", "conservative", "partial", "partial_conservative"):
            raise ValueError(f"unknown variance source {self.variance_source!r}")


def _variance_for(m: PopulationMoments, req: PlanRequest,
                  rate: Union[ErrorRate, PartialErrorSpec, float, None]) -> tuple[VarianceEstimate, Optional[float]]:
    if req.estimator == "ratio":
        if req.variance_source in ("partial", "partial_conservative") or isinstance(rate, PartialErrorSpec):
            raise UnsupportedPlan("no closed-form ratio variance for partial errors; "
                                  "use the simulation lab (mc_sigma_r_bands)")
        if req.variance_source == "conservative":
            return var_ratio_expected(m, 0.5), 0.5
        if rate is None:
            raise ValueError("an error rate is required")
        est = var_ratio_expected(m, rate)
        return est, est.inputs["pi"]
    if req.variance_source == "conservative":
        cons = conservative_pi(m)
        return cons.h_max, cons.pi_max
    if req.variance_source == "partial_conservative":
        return conservative_partial(m), None
    if req.variance_source == "partial":
        if not isinstance(rate, PartialErrorSpec):
            raise ValueError("partial variance source needs a PartialErrorSpec")
        est = var_partial_expected(m, rate) if req.exact_partial else var_partial_bound(m, rate)
        return est, rate.pi_T
    if rate is None or isinstance(rate, PartialErrorSpec):
        raise ValueError("an error rate is required")
    est = var_conditional_expected(m, rate)
    return est, est.inputs["pi"]


def plan(pop: Union[ClaimPopulation, PopulationMoments], req: PlanRequest,
         rate: Union[ErrorRate, PartialErrorSpec, float, None] = None) -> SamplePlan:
    """Route a request to the matching variance estimate and size the sample.

    - simple_expansion + pi: expected conditional variance at pi
    - simple_expansion + conservative: its maximum over pi
    - simple_expansion + partial: partial-error upper bound (exact form on request)
    - simple_expansion + partial_conservative: worst case of that bound
    - ratio + pi: expected residual variance about the ratio line
    - ratio + conservative: the same at pi = 1/2
    """
    m = pop if isinstance(pop, PopulationMoments) else moments(pop)
    est, pi = _variance_for(m, req, rate)
    base = sample_size(m.N, est, req.margin, req.confidence)
    notes = []
    if 0 < base.n < MIN_N_NORMAL:
        notes.append(f"n={base.n} < {MIN_N_NORMAL}: normal interval may under-cover; "
                     "check with coverage_experiment")
    if pi is not None and 0 < base.n and base.n * pi < MIN_EXPECTED_ERRORS:
        notes.append(f"expected sampled errors n*pi={base.n * pi:.3g} < {MIN_EXPECTED_ERRORS}: "
                     "normal interval may under-cover; check with coverage_experiment")
    conservative = req.variance_source in ("conservative", "partial_conservative")
    return SamplePlan(base.n, est, base.achieved_margin, base.z, conservative, base.n_real,
                      base.clamped, tuple(notes), req.estimator, pi)
