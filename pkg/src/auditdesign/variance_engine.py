"""Planning-stage estimates of the variance of disallowed amounts.

Every function takes :class:`PopulationMoments` plus an error-rate description and
returns a :class:`VarianceEstimate`.  Closed forms are rearranged into sums of
non-negative terms where possible, e.g. ``pi*mu2 - (pi*mu)**2`` is evaluated as
``pi*sigma2 + pi*(1-pi)*mu**2``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Union

from .population_model import PopulationMoments

logger = logging.getLogger(__name__)

__all__ = [
    "ConservativeRate",
    "DomainError",
    "ErrorRate",
    "PartialErrorSpec",
    "VarianceEstimate",
    "conservative_partial",
    "conservative_pi",
    "h_conditional",
    "ratio_kernel",
    "snap_rate",
    "var_conditional_expected",
    "var_partial_bound",
    "var_partial_expected",
    "var_ratio_expected",
    "var_ratio_large_n",
    "var_ratio_roberts",
    "var_roberts",
    "var_total",
]

# relative slack below zero tolerated (and clamped) before a negative variance is an error
NEG_TOL = 1e-9


class DomainError(ValueError):
    """A formula was evaluated outside its domain (e.g. N=1 with an interior error rate)."""


@dataclass(frozen=True)
class ErrorRate:
    """Fraction of claims in error; ``ne``/``N`` set when the rate is exactly ``ne/N``."""

    pi: float
    ne: int | None = None
    N: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.pi <= 1.0 or math.isnan(self.pi):
            raise ValueError(f"error rate {self.pi} outside [0, 1]")
        if self.ne is not None:
            if self.N is None or not 0 <= self.ne <= self.N:
                raise ValueError("exact error count must lie in [0, N]")

    @classmethod
    def exact(cls, ne: int, N: int) -> "ErrorRate":
        return cls(ne / N, ne, N)


RateLike = Union[float, ErrorRate]


def _pi(rate: RateLike) -> float:
    if isinstance(rate, ErrorRate):
        return rate.pi
    return ErrorRate(float(rate)).pi


def snap_rate(pi: float, N: int) -> ErrorRate:
    """Round ``pi`` onto the grid {0, 1/N, ..., 1}; logs when the rate moves."""
    ne = int(round(pi * N))
    snapped = ErrorRate.exact(ne, N)
    if snapped.pi != pi:
        logger.info("error rate %.6g snapped to %d/%d = %.6g", pi, ne, N, snapped.pi)
    return snapped


@dataclass(frozen=True)
class PartialErrorSpec:
    """Fixed-proportion partial error model: ``T`` claims in error, ``p`` of them paid at ``q``."""

    N: int
    T: int
    p: int
    q: float

    def __post_init__(self):
        if not 0 <= self.p <= self.T <= self.N:
            raise ValueError(f"need 0 <= p <= T <= N, got p={self.p}, T={self.T}, N={self.N}")
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"partial proportion q={self.q} must lie in (0, 1)")

    @classmethod
    def from_rates(cls, N: int, pi_T: float, pi_p: float, q: float) -> "PartialErrorSpec":
        """Build from rates; counts are rounded to the nearest integer."""
        if not 0.0 <= pi_p <= pi_T <= 1.0:
            raise ValueError("need 0 <= pi_p <= pi_T <= 1")
        return cls(N, int(round(pi_T * N)), int(round(pi_p * N)), q)

    @property
    def pi_T(self) -> float:
        return self.T / self.N

    @property
    def pi_p(self) -> float:
        return self.p / self.N


@dataclass(frozen=True)
class VarianceEstimate:
    value: float
    method: str
    inputs: dict[str, Any] = field(default_factory=dict)


def _checked(value: float, scale: float, method: str) -> float:
    if value >= 0.0:
        return value
    if value >= -NEG_TOL * max(scale, 0.0):
        logger.debug("%s: clamped rounding residue %.3g to 0", method, value)
        return 0.0
    raise ArithmeticError(f"{method}: negative variance {value!r}")


def h_conditional(m: PopulationMoments, pi: float) -> float:
    """Expected conditional variance as a plain float; see :func:`var_conditional_expected`."""
    if pi == 0.0:
        return 0.0
    mu_sq = m.mu_x * m.mu_x
    if pi == 1.0:
        return m.sigma2_x
    if m.N < 2:
        raise DomainError("N >= 2 required for an interior error rate")
    # pi*mu2 - (pi*mu)^2 - pi(1-pi)sigma2/(N-1), regrouped
    return pi * (1.0 - pi) * mu_sq + pi * m.sigma2_x * (m.N - 2 + pi) / (m.N - 1)


def var_conditional_expected(m: PopulationMoments, pi: RateLike) -> VarianceEstimate:
    """Expected variance of disallowed amounts given a random error set of size pi*N.

    The error set is a simple random sample without replacement of the claims, so
    the average is hypergeometric rather than Bernoulli.
    """
    p = _pi(pi)
    value = h_conditional(m, p)
    return VarianceEstimate(_checked(value, m.mu_x2, "conditional_expected"),
                            "conditional_expected", {"pi": p})


def var_roberts(m: PopulationMoments, pi: RateLike) -> VarianceEstimate:
    """Bernoulli-model estimate ``pi*mu2 - (pi*mu)^2 - pi(1-pi)(sigma2+mu^2)/N``."""
    p = _pi(pi)
    n = m.N
    mu_sq = m.mu_x * m.mu_x
    value = p * m.sigma2_x * (1.0 - (1.0 - p) / n) + p * (1.0 - p) * mu_sq * (1.0 - 1.0 / n)
    return VarianceEstimate(_checked(value, m.mu_x2, "roberts"), "roberts", {"pi": p})


def var_total(m: PopulationMoments, pi: RateLike) -> VarianceEstimate:
    """Unconditional variance of a disallowed amount, ``pi*mu2 - (pi*mu)^2``."""
    p = _pi(pi)
    value = p * m.sigma2_x + p * (1.0 - p) * m.mu_x * m.mu_x
    return VarianceEstimate(_checked(value, m.mu_x2, "total"), "total", {"pi": p})


@dataclass(frozen=True)
class ConservativeRate:
    """Worst-case error rate for the expected conditional variance."""

    pi_crit: float            # clamped to [0, 1]
    pi_crit_unclamped: float  # nan when the denominator vanishes
    pi_approx: float          # mu2 / (2 mu^2), unclamped
    pi_max: float             # where h attains its maximum on [0, 1]
    h_max: VarianceEstimate
    attained_at: str          # "interior" | "one" | "zero"
    fallback: bool = False


def conservative_pi(m: PopulationMoments) -> ConservativeRate:
    """Maximise the expected conditional variance over the error rate.

    The stationary point solves ``mu2 - 2 pi mu^2 - (1 - 2 pi) s = 0`` with
    ``s = sigma2/(N-1)``; the maximum on [0, 1] is the larger of ``h(1) = sigma2``
    and ``h`` at that point when it is interior.
    """
    if m.N < 2:
        raise DomainError("conservative error rate needs N >= 2")
    s = m.sigma2_x / (m.N - 1)
    mu_sq = m.mu_x * m.mu_x
    denom = mu_sq - s
    approx = m.mu_x2 / (2.0 * mu_sq)
    fallback = denom == 0.0
    if fallback:
        logger.warning("zero denominator in critical error rate; comparing endpoints only")
        crit = math.nan
        clamped = 1.0
    else:
        crit = 0.5 * (m.mu_x2 - s) / denom
        clamped = min(max(crit, 0.0), 1.0)
    candidates = [(0.0, "zero"), (1.0, "one")]
    if not fallback and 0.0 < crit < 1.0:
        candidates.append((crit, "interior"))
    best_pi, where = max(candidates, key=lambda c: h_conditional(m, c[0]))
    h_max = var_conditional_expected(m, best_pi)
    return ConservativeRate(clamped, crit, approx, best_pi, h_max, where, fallback)


def _var_w(spec: PartialErrorSpec) -> tuple[float, float]:
    """Second moment and variance of the payment multiplier W in {0, q, 1}."""
    pt, pp, q = spec.pi_T, spec.pi_p, spec.q
    mean_w = pt - pp * (1.0 - q)
    second = pt - pp * (1.0 - q * q)
    var_w = ((1.0 - pt) * mean_w**2 + pp * (q - mean_w) ** 2
             + (pt - pp) * (1.0 - mean_w) ** 2)
    return second, var_w


def var_partial_bound(m: PopulationMoments, spec: PartialErrorSpec) -> VarianceEstimate:
    """Upper bound ``[pi_T - pi_p(1-q^2)] mu2 - [pi_T - pi_p(1-q)]^2 mu^2`` (no 1/(N-1) term)."""
    second, var_w = _var_w(spec)
    value = second * m.sigma2_x + var_w * m.mu_x * m.mu_x
    return VarianceEstimate(_checked(value, m.mu_x2, "partial_bound"), "partial_bound",
                            {"spec": spec})


def var_partial_expected(m: PopulationMoments, spec: PartialErrorSpec) -> VarianceEstimate:
    """Expected conditional variance under the fixed-proportion partial error model.

    Exact for a random error set of size T with a random partial subset of size p.
    """
    if spec.N != m.N:
        raise ValueError(f"spec N={spec.N} does not match population N={m.N}")
    if spec.T == 0:
        return VarianceEstimate(0.0, "partial_expected", {"spec": spec})
    if m.N < 2:
        raise DomainError("N >= 2 required")
    pt, pp, q = spec.pi_T, spec.pi_p, spec.q
    frac = spec.p / spec.T
    correction = (pp * (1.0 - q) ** 2 * (1.0 - frac)
                  + (1.0 - pt) * (1.0 - frac * (1.0 - q)) * (pt - pp * (1.0 - q)))
    bound = var_partial_bound(m, spec).value
    value = bound - m.sigma2_x / (m.N - 1) * correction
    return VarianceEstimate(_checked(value, m.mu_x2, "partial_expected"), "partial_expected",
                            {"spec": spec})


def conservative_partial(m: PopulationMoments) -> VarianceEstimate:
    """Worst case of the partial-error bound over all (pi_T, pi_p, q)."""
    pi_star = min(m.mu_x2 / (2.0 * m.mu_x * m.mu_x), 1.0)
    value = pi_star * m.sigma2_x + pi_star * (1.0 - pi_star) * m.mu_x * m.mu_x
    return VarianceEstimate(value, "partial_conservative", {"pi_star": pi_star})


def ratio_kernel(m: PopulationMoments, finite_correction: bool = True) -> float:
    """The error-rate-free factor K with ``E(sigma_R^2) = pi (1 - pi) K``.

    With ``finite_correction`` the cross terms carry ``N/(N-1)``, which makes K the
    exact expectation over random error sets; without it this is the large-N form
    ``mu2 + (tau2/tau^2) sigma2 - 2 mu12 / tau``.
    """
    if m.tau_x <= 0.0:
        raise DomainError("ratio variance needs a positive claim total")
    cross = m.tau_x2 / (m.tau_x * m.tau_x) * m.sigma2_x - 2.0 * m.mu12 / m.tau_x
    if finite_correction:
        if m.N == 1:
            return 0.0
        cross *= m.N / (m.N - 1)
    return m.mu_x2 + cross


def var_ratio_expected(m: PopulationMoments, pi: RateLike,
                       finite_correction: bool = True) -> VarianceEstimate:
    """Expected residual variance about the ratio line, ``pi(1-pi) K``.

    Symmetric in ``pi`` and maximal at 1/2.
    """
    p = _pi(pi)
    k = ratio_kernel(m, finite_correction)
    value = p * (1.0 - p) * k
    return VarianceEstimate(_checked(value, m.mu_x2, "ratio_expected"), "ratio_expected",
                            {"pi": p, "finite_correction": finite_correction})


def var_ratio_roberts(m: PopulationMoments, pi: RateLike) -> VarianceEstimate:
    """Bernoulli-model analogue of :func:`var_ratio_expected` (uses skewness G1)."""
    if m.sigma2_x <= 0.0:
        raise DomainError("zero claim variance: use var_ratio_expected instead")
    p = _pi(pi)
    sigma = math.sqrt(m.sigma2_x)
    cv = sigma / m.mu_x
    inv_cv = m.mu_x / sigma
    bracket = (cv * cv + 4.0 / (1.0 + cv * cv)
               - m.g1 / (inv_cv * (1.0 + inv_cv * inv_cv)) - 5.0)
    value = p * (1.0 - p) * m.mu_x2 * (1.0 + bracket / m.N)
    return VarianceEstimate(_checked(value, m.mu_x2, "ratio_roberts"), "ratio_roberts",
                            {"pi": p})


def var_ratio_large_n(m: PopulationMoments, pi: RateLike) -> VarianceEstimate:
    """Large-population limit ``pi(1-pi) mu2`` shared by both ratio estimates."""
    p = _pi(pi)
    return VarianceEstimate(p * (1.0 - p) * m.mu_x2, "ratio_largeN", {"pi": p})
