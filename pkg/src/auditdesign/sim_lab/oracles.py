"""Brute-force enumeration over every possible set of error claims.

These compute expectations straight from definitions (population variance of the
realised ``y``, residuals about the ratio line, criterion means) and serve as the
ground truth that the closed forms are tested against.  Amounts are in dollars.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence, Union

from ..population_model import ClaimPopulation

__all__ = [
    "ENUMERATION_LIMIT",
    "ConditionalOracle",
    "oracle_enumerate_conditional",
    "oracle_enumerate_partial",
]

ENUMERATION_LIMIT = 10**6


def _amounts(pop: Union[ClaimPopulation, Sequence[float]]) -> list[float]:
    if isinstance(pop, ClaimPopulation):
        return [float(a) for a in pop.expanded()]
    xs = [float(a) for a in pop]
    if not xs or any(a <= 0.0 for a in xs):
        raise ValueError("amounts must be a non-empty list of positive values")
    return xs


def _pvar(v: Sequence[float]) -> float:
    n = len(v)
    mean = math.fsum(v) / n
    return math.fsum((a - mean) ** 2 for a in v) / n


def _mean(v: Sequence[float]) -> float:
    return math.fsum(v) / len(v)


@dataclass(frozen=True)
class ConditionalOracle:
    """Expectations over all ``C(N, Ne)`` equally likely all-or-nothing error sets.

    ``var_cond_mean`` is the variance over subsets of ``E(Y | s) = (Ne/N) Xbar_e``;
    ``ubar_mean``/``ubar_var`` describe the mean selection criterion over the error
    claims.  Entries that need at least one error claim are ``nan`` when ``Ne = 0``.
    """

    N: int
    ne: int
    subsets: int
    e_cond_var: float
    var_cond_mean: float
    e_sigma_r: float
    e_xbar_x2bar: float
    ubar_mean: float
    ubar_var: float


def oracle_enumerate_conditional(pop: Union[ClaimPopulation, Sequence[float]],
                                 ne: int) -> ConditionalOracle:
    x = _amounts(pop)
    n = len(x)
    if not 0 <= ne <= n:
        raise ValueError(f"error count {ne} outside [0, {n}]")
    count = math.comb(n, ne)
    if count > ENUMERATION_LIMIT:
        raise ValueError(f"{count} subsets exceed the enumeration limit")
    tau = math.fsum(x)
    mu = tau / n
    sigma2 = _pvar(x)
    k = mu + sigma2 / (2.0 * mu)
    u = [a * a - k * a for a in x]
    pi = ne / n

    cond_var, cond_mean, sig_r, prod, ubar = [], [], [], [], []
    for s in combinations(range(n), ne):
        chosen = set(s)
        y = [a if i in chosen else 0.0 for i, a in enumerate(x)]
        cond_var.append(_pvar(y))
        r = math.fsum(y) / tau
        sig_r.append(math.fsum((yi - r * xi) ** 2 for yi, xi in zip(y, x)) / n)
        if ne:
            xe = [x[i] for i in s]
            xbar = _mean(xe)
            cond_mean.append(pi * xbar)
            prod.append(xbar * _mean([a * a for a in xe]))
            ubar.append(_mean([u[i] for i in s]))
        else:
            cond_mean.append(0.0)
    nan = float("nan")
    return ConditionalOracle(
        N=n, ne=ne, subsets=count,
        e_cond_var=_mean(cond_var),
        var_cond_mean=_pvar(cond_mean),
        e_sigma_r=_mean(sig_r),
        e_xbar_x2bar=_mean(prod) if ne else nan,
        ubar_mean=_mean(ubar) if ne else nan,
        ubar_var=_pvar(ubar) if ne else nan,
    )


def oracle_enumerate_partial(pop: Union[ClaimPopulation, Sequence[float]], T: int, p: int,
                             q: float) -> float:
    """Mean population variance of ``y`` over every error set of size ``T`` and every
    partial subset of size ``p`` inside it (partial claims carry ``y = q x``)."""
    x = _amounts(pop)
    n = len(x)
    if not 0 <= p <= T <= n:
        raise ValueError("need 0 <= p <= T <= N")
    count = math.comb(n, T) * math.comb(T, p)
    if count > ENUMERATION_LIMIT:
        raise ValueError(f"{count} configurations exceed the enumeration limit")
    total = []
    for err in combinations(range(n), T):
        for part in combinations(err, p):
            y = [0.0] * n
            for i in err:
                y[i] = x[i]
            for i in part:
                y[i] = q * x[i]
            total.append(_pvar(y))
    return _mean(total)
