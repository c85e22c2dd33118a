"""Random audit populations: error models applied to known claims, and synthetic
claim populations shaped like the two published examples."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from ..population_model import ClaimPopulation

__all__ = [
    "EDWARDS_N",
    "EDWARDS_TOTAL",
    "NETER_N",
    "NETER_TOTAL",
    "SCENARIOS",
    "RealizedAudit",
    "ScenarioSpec",
    "all_or_nothing",
    "gen_all_or_nothing",
    "gen_scenario",
    "make_edwards_like",
    "make_neter_like",
    "realized_sigma_r",
    "realized_sigma_y",
]

SeedLike = Union[int, np.random.Generator, "list[int]", "tuple[int, ...]"]


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class RealizedAudit:
    """One realised population of disallowed amounts.

    ``x`` and ``y`` are aligned float arrays in cents over the expanded claims
    (ascending claim amount); ``y`` is a whole number of cents when rounding is on.
    """

    pop: ClaimPopulation
    x: np.ndarray
    y: np.ndarray
    kind: str
    seed: object = None

    @property
    def error_rate_realized(self) -> float:
        return float(np.count_nonzero(self.y)) / self.y.size

    @property
    def tau_y(self) -> float:
        """Total disallowed amount in dollars."""
        return float(self.y.sum()) / 100.0


@dataclass(frozen=True)
class ScenarioSpec:
    """Error model: a fraction ``overall_rate`` of claims is in error; of those a
    fraction ``full_fraction`` is wholly disallowed and the rest are paid in part.

    ``partial_q`` is either a fixed proportion ``q`` or a ``(lo, hi)`` uniform range
    from which each partial claim draws its own disallowed proportion.
    """

    full_fraction: float
    partial_q: Union[float, tuple[float, float]] = (0.2, 0.8)
    overall_rate: float = 0.0
    name: str = ""

    def __post_init__(self):
        if not 0.0 <= self.full_fraction <= 1.0:
            raise ValueError("full_fraction must lie in [0, 1]")
        if not 0.0 <= self.overall_rate <= 1.0:
            raise ValueError("overall_rate must lie in [0, 1]")
        if isinstance(self.partial_q, tuple):
            lo, hi = self.partial_q
            if not 0.0 < lo <= hi < 1.0:
                raise ValueError("uniform partial range needs 0 < lo <= hi < 1")
        elif not 0.0 < self.partial_q < 1.0:
            raise ValueError("fixed partial proportion must lie in (0, 1)")

    def at_rate(self, rate: float) -> "ScenarioSpec":
        return ScenarioSpec(self.full_fraction, self.partial_q, rate, self.name)


def all_or_nothing(rate: float) -> ScenarioSpec:
    return ScenarioSpec(1.0, (0.2, 0.8), rate, "all-or-nothing")


SCENARIOS = {
    1: ScenarioSpec(1.0, (0.2, 0.8), 0.0, "scenario 1: all errors full"),
    2: ScenarioSpec(0.2, (0.2, 0.8), 0.0, "scenario 2: 20% full, 80% partial"),
    3: ScenarioSpec(0.5, (0.2, 0.8), 0.0, "scenario 3: 50% full, 50% partial"),
    4: ScenarioSpec(0.8, (0.2, 0.8), 0.0, "scenario 4: 80% full, 20% partial"),
}


def gen_all_or_nothing(pop: ClaimPopulation, ne: int, seed: SeedLike) -> RealizedAudit:
    """Mark a uniformly random set of ``ne`` claims as wholly disallowed."""
    n = pop.N
    if not 0 <= ne <= n:
        raise ValueError(f"error count {ne} outside [0, {n}]")
    rng = _rng(seed)
    x = pop.expanded_cents().astype(float)
    y = np.zeros_like(x)
    idx = rng.choice(n, size=ne, replace=False)
    y[idx] = x[idx]
    return RealizedAudit(pop, x, y, "all_or_nothing", seed)


def gen_scenario(pop: ClaimPopulation, spec: ScenarioSpec, seed: SeedLike,
                 round_cents: bool = True, x: np.ndarray | None = None) -> RealizedAudit:
    """Realise ``spec`` on ``pop``.

    ``T = round(rate N)`` claims are chosen without replacement; ``round(full_fraction T)``
    of them are wholly disallowed and the others disallowed at ``q x`` (rounded to
    the cent, half to even, when ``round_cents``).  ``x`` may pass a precomputed
    expanded amount array.
    """
    n = pop.N
    t = int(round(spec.overall_rate * n))
    full = int(round(spec.full_fraction * t))
    if not 0 <= full <= t <= n:
        raise ValueError("infeasible scenario counts")
    rng = _rng(seed)
    if x is None:
        x = pop.expanded_cents().astype(float)
    y = np.zeros_like(x)
    idx = rng.choice(n, size=t, replace=False)
    full_idx, part_idx = idx[:full], idx[full:]
    y[full_idx] = x[full_idx]
    if part_idx.size:
        if isinstance(spec.partial_q, tuple):
            q = rng.uniform(spec.partial_q[0], spec.partial_q[1], size=part_idx.size)
        else:
            q = spec.partial_q
        part = q * x[part_idx]
        y[part_idx] = np.round(part) if round_cents else part
    return RealizedAudit(pop, x, y, "scenario", seed)


def realized_sigma_r(audit: RealizedAudit) -> float:
    """``(1/N) sum (y_i - R x_i)^2`` with ``R = tau_y / tau_x``, in dollars^2."""
    x, y = audit.x, audit.y
    r = y.sum() / x.sum()
    e = y - r * x
    return float(np.dot(e, e)) / x.size / 10**4


def realized_sigma_y(audit: RealizedAudit) -> float:
    """Population variance of the disallowed amounts, in dollars^2."""
    return float(np.var(audit.y)) / 10**4


# Synthetic stand-ins for the two example populations.  Only the published summary
# facts are matched: size, total, right skew, a $100-150 spike for the Edwards-like
# population and a larger spread for the Neter-like one.
EDWARDS_N = 9000
EDWARDS_TOTAL = 1_100_000_00     # cents
EDWARDS_SPIKE_WEIGHT = 0.35      # share of claims in the whole-dollar $100-150 spike
EDWARDS_BODY_MEDIAN = 90.0
EDWARDS_BODY_SIGMA = 0.65

NETER_N = 4033
NETER_TOTAL = 7_500_000_00       # cents
NETER_SIGMA = 1.3


def _rescale_to_total(fixed: np.ndarray, body: np.ndarray, total: int) -> np.ndarray:
    """Scale ``body`` (dollars) so that cents(fixed) + cents(body) is near ``total``."""
    target = total - int(fixed.sum())
    scaled = body * (target / 100.0) / body.sum()
    cents = np.maximum(np.round(scaled * 100.0), 1).astype(np.int64)
    return cents


def make_edwards_like(seed: SeedLike = 0) -> ClaimPopulation:
    """9000 claims totalling about $1.1 million: a lognormal body plus a spike of
    whole-dollar amounts between $100 and $150."""
    rng = _rng(seed)
    n_spike = int(round(EDWARDS_SPIKE_WEIGHT * EDWARDS_N))
    spike = rng.integers(100, 151, size=n_spike).astype(np.int64) * 100
    body = rng.lognormal(np.log(EDWARDS_BODY_MEDIAN), EDWARDS_BODY_SIGMA,
                         size=EDWARDS_N - n_spike)
    cents = np.concatenate([spike, _rescale_to_total(spike, body, EDWARDS_TOTAL)])
    return ClaimPopulation.from_cents(cents.tolist())


def make_neter_like(seed: SeedLike = 0) -> ClaimPopulation:
    """4033 lognormal claims totalling about $7.5 million, more dispersed than
    :func:`make_edwards_like`."""
    rng = _rng(seed)
    body = rng.lognormal(0.0, NETER_SIGMA, size=NETER_N)
    cents = _rescale_to_total(np.zeros(0, dtype=np.int64), body, NETER_TOTAL)
    return ClaimPopulation.from_cents(cents.tolist())
