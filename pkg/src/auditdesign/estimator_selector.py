"""How confident can we be that the ratio estimator beats simple expansion?

With all-or-nothing errors, ratio estimation has the smaller variance exactly when
the mean of ``U = x^2 - k x`` over the error claims is positive, where
``k = mu + sigma2 / (2 mu)``.  The mean of that criterion is ``sigma2 / 2`` for every
error rate; its variance follows from sampling ``Ne`` claims without replacement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Optional, Union

import numpy as np

from .population_model import ClaimPopulation, PopulationMoments, moments
from .variance_engine import DomainError, ErrorRate, snap_rate

__all__ = [
    "SelectorReport",
    "criterion_values",
    "g_mean_variance",
    "prob_ratio_beats",
    "prob_ratio_beats_mc",
    "select",
]

_PHI = NormalDist()

# replicates are drawn in fixed blocks so results do not depend on how work is split
MC_BLOCK = 4096
# populations with at least this many claims per distinct amount are sampled by runs
RUNS_FACTOR = 8


def _rate(pi: Union[float, ErrorRate]) -> float:
    return pi.pi if isinstance(pi, ErrorRate) else float(pi)


def g_mean_variance(m: PopulationMoments, pi: Union[float, ErrorRate]) -> tuple[float, float]:
    """Mean and variance of the selection criterion ``g`` at error rate ``pi``."""
    p = _rate(pi)
    if not 0.0 < p <= 1.0:
        raise DomainError("criterion undefined without errors (pi must lie in (0, 1])")
    if m.N < 2:
        raise DomainError("N >= 2 required")
    if m.mu_x <= 0.0:
        raise DomainError("mean claim must be positive")
    mean = m.sigma2_x / 2.0
    k = m.mu_x + m.sigma2_x / (2.0 * m.mu_x)
    var_u = m.sigma2_x2 + k * k * m.sigma2_x - 2.0 * k * m.mu12
    scale = m.sigma2_x2 + k * k * m.sigma2_x
    if var_u < 0.0:
        if var_u < -1e-9 * scale:
            raise ArithmeticError(f"negative criterion variance {var_u!r}")
        var_u = 0.0
    return mean, (1.0 / p - 1.0) / (m.N - 1) * var_u


def prob_ratio_beats(m: PopulationMoments, pi: Union[float, ErrorRate]) -> float:
    """Normal-approximation probability that the criterion is positive.

    Degenerate criteria (zero variance) give 1.0 for a positive mean and 0.5 for a
    zero mean.
    """
    mean, var = g_mean_variance(m, pi)
    if var == 0.0:
        return 1.0 if mean > 0.0 else 0.5
    return _PHI.cdf(mean / math.sqrt(var))


def criterion_values(pop: ClaimPopulation) -> np.ndarray:
    """``U`` for each unique amount, in dollars squared.

    Computed as ``(2 N tau x^2 - x (tau^2 + N tau2)) / (2 N tau)`` from exact
    integer totals so the sign of each value is right.
    """
    n, tau, tau2 = pop.N, pop.total, pop.total_squares
    lead = tau * tau + n * tau2
    den = 2 * n * tau
    return np.array([(2 * n * tau * a * a - a * lead) / den / 10**4 for a in pop.amounts])


def prob_ratio_beats_mc(pop: ClaimPopulation, pi: Union[float, ErrorRate], replicates: int,
                        seed: int, *, return_ties: bool = False):
    """Monte Carlo fraction of random error sets with a strictly positive criterion.

    Each replicate draws ``Ne = round(pi N)`` claims without replacement: as
    per-amount counts from a multivariate hypergeometric draw over the runs when
    amounts repeat heavily, otherwise as claim indices.  Replicate block ``b`` uses
    the generator seeded with ``[seed, b]``.
    """
    ne = pi.ne if isinstance(pi, ErrorRate) and pi.ne is not None else snap_rate(_rate(pi), pop.N).ne
    if ne < 1:
        raise DomainError("no error claims at this rate (Ne = 0)")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    u = criterion_values(pop)
    tol = 1e-12 * float(np.max(np.abs(u))) if u.size else 0.0
    counts = np.asarray(pop.counts, dtype=np.int64)
    # run-length draws cost O(unique) each, index draws O(N); pick the cheaper
    by_runs = pop.unique * RUNS_FACTOR <= pop.N
    u_expanded = None if by_runs else np.repeat(u, counts)
    positive = ties = 0
    nblocks = -(-replicates // MC_BLOCK)
    for b in range(nblocks):
        size = min(MC_BLOCK, replicates - b * MC_BLOCK)
        rng = np.random.default_rng([seed, b])
        if ne == pop.N:
            ubar = np.full(size, float(counts @ u) / ne)
        elif by_runs:
            ubar = rng.multivariate_hypergeometric(counts, ne, size=size) @ u / ne
        else:
            ubar = np.array([u_expanded[rng.choice(pop.N, ne, replace=False)].mean()
                             for _ in range(size)])
        positive += int(np.count_nonzero(ubar > tol))
        ties += int(np.count_nonzero(np.abs(ubar) <= tol))
    frac = positive / replicates
    return (frac, ties) if return_ties else frac


@dataclass(frozen=True)
class SelectorReport:
    pi: float
    ne: int
    mean_g: float
    var_g: float
    prob_normal: float
    recommendation: str        # "ratio" | "simple_expansion" | "indeterminate"
    degenerate: bool = False
    prob_mc: Optional[float] = None
    mc_replicates: Optional[int] = None
    mc_seed: Optional[int] = None


def select(pop: ClaimPopulation, pi: Union[float, ErrorRate], *, threshold: float = 0.5,
           replicates: Optional[int] = None, seed: Optional[int] = None,
           m: Optional[PopulationMoments] = None) -> SelectorReport:
    """Assemble a :class:`SelectorReport`; adds a Monte Carlo estimate when
    ``replicates`` is given (``seed`` is then required)."""
    m = m or moments(pop)
    p = _rate(pi)
    ne = int(round(p * pop.N))
    mean, var = g_mean_variance(m, p)
    prob = prob_ratio_beats(m, p)
    degenerate = var == 0.0
    if mean == 0.0:
        rec = "indeterminate"
    elif prob >= threshold:
        rec = "ratio"
    else:
        rec = "simple_expansion"
    prob_mc = None
    if replicates:
        if seed is None:
            raise ValueError("a seed is required for the Monte Carlo estimate")
        prob_mc = prob_ratio_beats_mc(pop, p, replicates, seed)
    return SelectorReport(p, ne, mean, var, prob, rec, degenerate, prob_mc,
                          replicates if replicates else None, seed if replicates else None)
