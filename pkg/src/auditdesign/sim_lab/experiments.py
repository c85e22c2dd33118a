"""Monte Carlo experiments: spread of realised ratio residual variances across error
scenarios, and confidence interval coverage of the two estimators."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from ..population_model import ClaimPopulation, moments
from ..sample_planner import z_for_confidence
from ..variance_engine import var_ratio_expected
from .generators import SCENARIOS, ScenarioSpec, gen_scenario, realized_sigma_r

__all__ = [
    "BAND_HEADER",
    "COVERAGE_HEADER",
    "BandRow",
    "CoverageResult",
    "coverage_experiment",
    "mc_sigma_r_bands",
    "replicate_rng",
]

BAND_HEADER = ("scenario", "rate", "mean_sigma_r2", "p05", "p95", "replicates",
               "aon_expected")
COVERAGE_HEADER = ("estimator", "n", "confidence", "replicates", "coverage",
                   "mean_halfwidth", "seed")

# relative slack for a zero-width interval: the census estimate and the true total
# are the same sum evaluated in a different order
_EXACT_SLACK = 1e-12


def replicate_rng(seed: int, *keys: int) -> np.random.Generator:
    """Generator for one replicate.  The stream depends only on the root seed and
    the replicate's own keys, never on how many replicates run or in what order."""
    return np.random.default_rng([int(seed), *(int(k) for k in keys)])


def _rate_key(rate: float) -> int:
    return int(round(rate * 10**6))


@dataclass(frozen=True)
class BandRow:
    scenario: str
    rate: float
    mean: float
    p05: float
    p95: float
    replicates: int
    aon_expected: float   # all-or-nothing expected residual variance at this rate

    def as_tuple(self) -> tuple:
        return (self.scenario, self.rate, self.mean, self.p05, self.p95, self.replicates,
                self.aon_expected)


def _scenario_list(scenarios: Sequence[Union[int, ScenarioSpec]]) -> list[tuple[int, str, ScenarioSpec]]:
    out = []
    for i, s in enumerate(scenarios):
        if isinstance(s, ScenarioSpec):
            out.append((1000 + i, s.name or f"custom{i}", s))
        else:
            out.append((int(s), str(int(s)), SCENARIOS[int(s)]))
    return out


def mc_sigma_r_bands(pop: ClaimPopulation, scenarios: Sequence[Union[int, ScenarioSpec]],
                     rates: Sequence[float], replicates: int, seed: int,
                     round_cents: bool = True) -> list[BandRow]:
    """Mean and 5th/95th percentiles of realised residual variance per (scenario, rate).

    Preset scenarios are given by number (1-4); a :class:`ScenarioSpec` may be passed
    directly.  Replicate ``r`` of a cell uses :func:`replicate_rng` keyed on the
    scenario number (1000 + position for custom specs), the rate in millionths and
    ``r``.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    m = moments(pop)
    x = pop.expanded_cents().astype(float)
    rows = []
    for key, label, spec in _scenario_list(scenarios):
        for rate in rates:
            cell = spec.at_rate(rate)
            vals = np.empty(replicates)
            for r in range(replicates):
                rng = replicate_rng(seed, key, _rate_key(rate), r)
                vals[r] = realized_sigma_r(gen_scenario(pop, cell, rng, round_cents, x=x))
            p05, p95 = np.percentile(vals, [5, 95])
            expected = var_ratio_expected(m, rate).value if m.N > 1 else 0.0
            rows.append(BandRow(label, float(rate), float(vals.mean()), float(p05),
                                float(p95), replicates, expected))
    return rows


@dataclass(frozen=True)
class CoverageResult:
    coverage: float
    mean_halfwidth: float       # dollars
    replicates: int
    n: int
    estimator: str
    confidence: float
    seed: int
    covered: int

    def as_tuple(self) -> tuple:
        return (self.estimator, self.n, self.confidence, self.replicates, self.coverage,
                self.mean_halfwidth, self.seed)


def coverage_experiment(pop: ClaimPopulation, model: ScenarioSpec, n: int, estimator: str,
                        confidence: float, replicates: int, seed: int,
                        round_cents: bool = True) -> CoverageResult:
    """Fraction of replicates whose large-sample interval covers the true total.

    Each replicate realises ``model`` on ``pop``, draws ``n`` claims without
    replacement and forms either ``N ybar`` or ``(ybar / xbar) tau_x`` with the usual
    variance estimate (``n - 1`` divisor, finite population correction ``1 - n/N``).
    A zero estimated variance gives a zero-width interval, which covers only when
    the estimate equals the true total.
    """
    N = pop.N
    if not 2 <= n <= N:
        raise ValueError(f"sample size {n} outside [2, {N}]")
    if estimator not in ("simple_expansion", "ratio"):
        raise ValueError(f"unknown estimator {estimator!r}")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    z = z_for_confidence(confidence)
    x = pop.expanded_cents().astype(float)
    tau_x = float(pop.total)
    fpc = 1.0 - n / N
    covered = 0
    halfwidths = np.empty(replicates)
    for r in range(replicates):
        rng = replicate_rng(seed, r)
        audit = gen_scenario(pop, model, rng, round_cents, x=x)
        tau_y = float(audit.y.sum())
        idx = rng.choice(N, size=n, replace=False)
        ys = audit.y[idx]
        if estimator == "simple_expansion":
            est = N * float(ys.sum()) / n
            s2 = float(ys.var(ddof=1))
        else:
            xs = x[idx]
            ratio = float(ys.sum()) / float(xs.sum())
            est = ratio * tau_x
            e = ys - ratio * xs
            s2 = float(np.dot(e, e)) / (n - 1)
        hw = z * N * math.sqrt(max(s2, 0.0) * fpc / n)
        halfwidths[r] = hw
        slack = _EXACT_SLACK * max(abs(tau_y), 1.0)
        if abs(est - tau_y) <= hw + slack:
            covered += 1
    return CoverageResult(covered / replicates, float(halfwidths.mean()) / 100.0, replicates,
                          n, estimator, confidence, seed, covered)
