"""Two-strata designs on claim amount: Neyman allocation, exact breakpoint search,
the cum-sqrt(f) baseline, and stratified sample sizes.

The search objective is ``sum_h N_h sigma_yh``, the quantity whose square over n is
the optimally allocated variance (no finite population correction).  Stratum terms
are formed from exact integer totals in cents:

* simple expansion: ``N_h sigma_h = sqrt(pi * (N_h t2 - pi t^2))``
* ratio: ``N_h sigma_h = sqrt(pi (1 - pi)) * N_h * sqrt(K_h)`` with the exact
  expected residual kernel ``K_h = (t2 t^2 + t2^2 - 2 t t3) / ((N_h - 1) t^2)``

For the ratio kind ``pi`` only scales the objective, so the best boundary does not
depend on it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .population_model import ClaimPopulation
from .sample_planner import z_for_confidence

__all__ = [
    "Allocation",
    "StratifiedPlan",
    "Stratification",
    "StratumStats",
    "cum_sqrt_f",
    "optimal_allocation",
    "optimal_two_strata",
    "run_candidates",
    "run_objective",
    "stratified_sample_size",
    "stratified_variance",
    "stratify_at",
    "stratum_term",
    "unstratified_objective",
]

KINDS = ("simple_expansion", "ratio")


def stratum_term(n: int, t: int, t2: int, t3: int, pi: float, kind: str) -> float:
    """``N_h * sigma_yh`` in cents for a stratum with integer totals (cents powers)."""
    if n == 0:
        return 0.0
    if kind == "simple_expansion":
        # N t2 - pi t^2 == (N t2 - t^2) + (1 - pi) t^2, both parts non-negative
        inner = float(n * t2 - t * t) + (1.0 - pi) * float(t * t)
        return math.sqrt(pi * inner)
    if kind == "ratio":
        if n == 1:
            return 0.0
        num = t2 * t * t + t2 * t2 - 2 * t * t3
        n2k = (n * n * num) / ((n - 1) * t * t)
        return math.sqrt(pi * (1.0 - pi)) * math.sqrt(n2k)
    raise ValueError(f"unknown kind {kind!r}")


@dataclass(frozen=True)
class StratumStats:
    N_h: int
    tau_h: int      # cents
    tau2_h: int     # cents^2
    tau3_h: int     # cents^3
    lo: int         # smallest amount, cents
    hi: int         # largest amount, cents
    sigma_yh: float  # dollars

    @property
    def weight(self) -> float:
        """``N_h * sigma_yh`` in dollars."""
        return self.N_h * self.sigma_yh


@dataclass(frozen=True)
class Allocation:
    sizes: tuple[int, ...]
    fallback: bool = False        # proportional allocation used (all sigma zero)
    min_size_applied: bool = False

    @property
    def n(self) -> int:
        return sum(self.sizes)


def _largest_remainder(shares: Sequence[float], n: int, caps: Sequence[int]) -> list[int]:
    floors = [min(int(math.floor(s)), c) for s, c in zip(shares, caps)]
    left = n - sum(floors)
    order = sorted(range(len(shares)), key=lambda i: (-(shares[i] - floors[i]), i))
    for i in order:
        if left <= 0:
            break
        if floors[i] < caps[i]:
            floors[i] += 1
            left -= 1
    # remaining units (possible only after capping) go wherever room is left
    i = 0
    while left > 0 and i < len(floors):
        room = caps[i] - floors[i]
        take = min(room, left)
        floors[i] += take
        left -= take
        i += 1
    return floors


def optimal_allocation(strata: Sequence[StratumStats], n: int) -> Allocation:
    """Neyman allocation ``n_h ∝ N_h sigma_h`` rounded to integers summing to ``n``.

    Shares exceeding ``N_h`` are capped and the excess is re-spread over the other
    strata.  When every ``sigma_h`` is zero the allocation is proportional to ``N_h``.
    """
    sizes = [s.N_h for s in strata]
    if n < 0 or n > sum(sizes):
        raise ValueError(f"cannot allocate n={n} over {sum(sizes)} claims")
    weights = [s.N_h * s.sigma_yh for s in strata]
    fallback = sum(weights) <= 0.0
    if fallback:
        weights = [float(s) for s in sizes]
    shares = [0.0] * len(strata)
    active = set(range(len(strata)))
    remaining = float(n)
    while active:
        total_w = sum(weights[i] for i in active)
        if total_w <= 0.0:
            break
        over = [i for i in active if remaining * weights[i] / total_w > sizes[i]]
        if not over:
            for i in active:
                shares[i] = remaining * weights[i] / total_w
            break
        for i in over:
            shares[i] = float(sizes[i])
            remaining -= sizes[i]
            active.discard(i)
    return Allocation(tuple(_largest_remainder(shares, n, sizes)), fallback)


def stratified_variance(strata: Sequence[StratumStats], allocation: Allocation | Sequence[int],
                        fpc: bool = True) -> float:
    """Variance of the stratified expansion estimator in dollars^2, with or without
    the finite population correction."""
    alloc = allocation.sizes if isinstance(allocation, Allocation) else tuple(allocation)
    total = 0.0
    for s, n_h in zip(strata, alloc):
        if s.sigma_yh == 0.0:
            continue
        if n_h < 1:
            raise ValueError(f"stratum with sigma>0 received no sample (N_h={s.N_h})")
        if fpc:
            if n_h >= s.N_h:
                continue
            factor = (s.N_h - n_h) / (s.N_h - 1)
        else:
            factor = 1.0
        total += s.N_h**2 * s.sigma_yh**2 / n_h * factor
    return total


def _coefficients(prefix, run, suffix, pi) -> tuple[Fraction, Fraction, Fraction]:
    n_x, tau_x, tau2_x = prefix
    y, n_run = run
    m_z, tau_z, tau2_z = suffix
    p = Fraction(pi)
    y = Fraction(y)
    c1 = tau2_x + n_x * y * y - 2 * p * tau_x * y
    c2 = tau2_z + m_z * y * y + 2 * n_run * y * y - 2 * p * y * (tau_z + n_run * y)
    c3 = 2 * y * y * (1 - p)
    c4 = (m_z + n_run) * (tau2_z + n_run * y * y) - p * (tau_z + n_run * y) ** 2
    c5 = n_x * tau2_x - p * tau_x * tau_x
    a = c3 / 2 * (c1 * c1 - c2 * c2 + 2 * c3 * (c4 - c5))
    b = -c1 * c2 * (c1 + c2) + 2 * c3 * (c1 * c4 + c2 * c5)
    c = c1 * c1 * c4 - c2 * c2 * c5
    return a, b, c


def _real_roots(a: Fraction, b: Fraction, c: Fraction) -> Optional[list[float]]:
    """Real roots of ``a k^2 + b k + c``; ``None`` when the polynomial vanishes."""
    if a == 0:
        if b == 0:
            return None if c == 0 else []
        return [float(-c / b)]
    disc = b * b - 4 * a * c
    if disc < 0:
        return []
    sd = math.sqrt(disc)
    fb = float(b)
    q = -0.5 * (fb + math.copysign(sd, fb))
    if q == 0.0:
        return [0.0]
    return [q / float(a), float(c) / q]


def run_candidates(prefix: tuple, run: tuple, suffix: tuple, pi: float) -> list[int]:
    """Integer split points inside a run of repeated amounts that can minimise the
    two-strata objective (simple-expansion variance model).

    ``prefix = (N, tau_x, tau2_x)`` summarises the amounts below the run,
    ``run = (y, n_run)`` the repeated value and its multiplicity, and
    ``suffix = (M, tau_z, tau2_z)`` the amounts above it.  The stationary points of
    the objective in ``k`` (copies of ``y`` placed in the lower stratum) are roots of
    a quadratic whose coefficients are computed exactly here; the floor and ceiling
    of each root inside ``(0, n_run)`` are returned.  Endpoints 0 and ``n_run`` are
    not included.  In the degenerate case where the quadratic vanishes identically
    every ``k`` is returned.
    """
    if not 0.0 < pi <= 1.0:
        raise ValueError("pi must lie in (0, 1]")
    n_run = int(run[1])
    if n_run < 1:
        raise ValueError("run length must be >= 1")
    roots = _real_roots(*_coefficients(prefix, run, suffix, pi))
    if roots is None:
        return list(range(n_run + 1))
    out = set()
    for r in roots:
        if 0.0 < r < n_run:
            out.add(int(math.floor(r)))
            out.add(int(math.ceil(r)))
    return sorted(k for k in out if 0 <= k <= n_run)


def run_objective(prefix: tuple, run: tuple, suffix: tuple, pi: float, k: int) -> float:
    """Objective ``N_1 sigma_1 + N_2 sigma_2`` (simple expansion) for split ``k``."""
    n_x, tau_x, tau2_x = prefix
    y, n_run = run
    m_z, tau_z, tau2_z = suffix
    j = n_run - k
    return (stratum_term(n_x + k, tau_x + k * y, tau2_x + k * y * y, 0, pi, "simple_expansion")
            + stratum_term(m_z + j, tau_z + j * y, tau2_z + j * y * y, 0, pi, "simple_expansion"))


class _Prefix:
    """Integer prefix sums over the runs of a population."""

    def __init__(self, pop: ClaimPopulation):
        self.pop = pop
        self.a = pop.amounts
        self.c = pop.counts
        u = len(self.a)
        self.s = [[0] * (u + 1) for _ in range(4)]
        for j, (a, c) in enumerate(zip(self.a, self.c)):
            self.s[0][j + 1] = self.s[0][j] + c
            self.s[1][j + 1] = self.s[1][j] + c * a
            self.s[2][j + 1] = self.s[2][j] + c * a * a
            self.s[3][j + 1] = self.s[3][j] + c * a * a * a
        self.tot = tuple(col[u] for col in self.s)

    def lower(self, j: int, k: int) -> tuple[int, int, int, int]:
        a = self.a[j] if j < len(self.a) else 0
        return (self.s[0][j] + k, self.s[1][j] + k * a, self.s[2][j] + k * a * a,
                self.s[3][j] + k * a * a * a)

    def split(self, j: int, k: int):
        lo = self.lower(j, k)
        hi = tuple(t - v for t, v in zip(self.tot, lo))
        return lo, hi

    def objective(self, j: int, k: int, pi: float, kind: str) -> float:
        lo, hi = self.split(j, k)
        return stratum_term(*lo, pi, kind) + stratum_term(*hi, pi, kind)


@dataclass(frozen=True)
class Stratification:
    """A two-strata design.  ``boundary = (j, k)``: the lower stratum holds every
    run before unique value ``j`` plus ``k`` copies of it (``0 <= k < count_j``)."""

    boundary: tuple[int, int]
    n_lower: int
    threshold: int                 # largest amount in the lower stratum, cents
    strata: tuple[StratumStats, StratumStats]
    objective: float               # sum N_h sigma_yh, dollars
    kind: str
    pi: float
    degenerate: bool = False
    notes: tuple[str, ...] = field(default=())

    def allocation(self, n: int) -> Allocation:
        return optimal_allocation(self.strata, n)

    def stderr(self, n: int, fpc: bool = True) -> float:
        """Standard error of the estimated total at overall sample size ``n``;
        ``fpc=False`` gives the allocation-free ``objective / sqrt(n)``."""
        if not fpc:
            return self.objective / math.sqrt(n)
        return math.sqrt(stratified_variance(self.strata, self.allocation(n), fpc=True))


def _stats(lo_hi: tuple[int, int, int, int], lo_amt: int, hi_amt: int, pi: float,
           kind: str) -> StratumStats:
    n, t, t2, t3 = lo_hi
    term = stratum_term(n, t, t2, t3, pi, kind)
    return StratumStats(n, t, t2, t3, lo_amt, hi_amt, term / n / 100.0 if n else 0.0)


def _build(pre: _Prefix, j: int, k: int, pi: float, kind: str, notes=(), degenerate=False):
    if j < len(pre.c) and k == pre.c[j]:
        j, k = j + 1, 0
    lo, hi = pre.split(j, k)
    # amount ranges of the two strata
    if k > 0:
        lo_top, hi_bottom = pre.a[j], pre.a[j]
    else:
        lo_top, hi_bottom = pre.a[j - 1], pre.a[j]
    s1 = _stats(lo, pre.a[0], lo_top, pi, kind)
    s2 = _stats(hi, hi_bottom, pre.a[-1], pi, kind)
    obj = (stratum_term(*lo, pi, kind) + stratum_term(*hi, pi, kind)) / 100.0
    return Stratification((j, k), lo[0], lo_top, (s1, s2), obj, kind, pi, degenerate, tuple(notes))


def _check_kind_pi(kind: str, pi: float) -> None:
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    if not 0.0 <= pi <= 1.0:
        raise ValueError("pi must lie in [0, 1]")


def optimal_two_strata(pop: ClaimPopulation, pi: float = 0.5, kind: str = "simple_expansion",
                       allow_run_split: bool = True) -> Stratification:
    """Exact minimiser of ``sum N_h sigma_yh`` over two-strata splits by amount.

    Every boundary between distinct amounts is scanned with prefix sums.  With
    ``allow_run_split`` a boundary may also fall inside a run of equal amounts:
    for simple expansion only the endpoints and the quadratic's root neighbours
    (:func:`run_candidates`) are evaluated; for the ratio kind every split point is
    evaluated.  Ties go to the smallest lower stratum.  For the ratio kind the
    objective is evaluated at ``pi`` but the boundary is the same for every
    ``pi`` in (0, 1).
    """
    _check_kind_pi(kind, pi)
    if pop.N < 2:
        raise ValueError("need at least two claims to stratify")
    pre = _Prefix(pop)
    u = pop.unique
    if u == 1 and not allow_run_split:
        return _build(pre, 0, max(1, pop.counts[0] // 2), pi, kind,
                      ("single unique amount: split inside the run is the only option",), True)
    # the ratio boundary is pi-free; search with pi = 1/2 so the objective is never 0
    search_pi = 0.5 if kind == "ratio" else pi
    if search_pi == 0.0:
        first = (1, 0) if u > 1 else (0, 1)
        return _build(pre, *first, pi, kind, ("pi = 0: objective is identically zero",))
    best: Optional[tuple[float, int, int, int]] = None   # (value, n_lower, j, k)

    def consider(j: int, k: int) -> None:
        nonlocal best
        n_lower = pre.s[0][j] + k
        if n_lower <= 0 or n_lower >= pop.N:
            return
        val = pre.objective(j, k, search_pi, kind)
        if best is None or val < best[0] or (val == best[0] and n_lower < best[1]):
            best = (val, n_lower, j, k)

    for j in range(u):
        cnt = pre.c[j]
        consider(j, 0)
        if not allow_run_split or cnt == 1:
            continue
        if kind == "ratio":
            for k in range(1, cnt):
                consider(j, k)
            continue
        y = pre.a[j]
        prefix = (pre.s[0][j], pre.s[1][j], pre.s[2][j])
        suffix = (pre.tot[0] - pre.s[0][j + 1], pre.tot[1] - pre.s[1][j + 1],
                  pre.tot[2] - pre.s[2][j + 1])
        ks = {1, cnt - 1}
        ks.update(run_candidates(prefix, (y, cnt), suffix, search_pi))
        for k in sorted(ks):
            if 0 < k < cnt:
                consider(j, k)
    assert best is not None
    _, _, j, k = best
    return _build(pre, j, k, pi, kind, degenerate=(u == 1))


def stratify_at(pop: ClaimPopulation, threshold: int, pi: float,
                kind: str = "simple_expansion") -> Stratification:
    """Two strata split at an amount: lower stratum holds amounts <= ``threshold`` cents."""
    _check_kind_pi(kind, pi)
    pre = _Prefix(pop)
    j = int(np.searchsorted(np.asarray(pop.amounts), threshold, side="right"))
    if j <= 0 or j >= pop.unique:
        raise ValueError("threshold leaves a stratum empty")
    return _build(pre, j, 0, pi, kind)


def unstratified_objective(pop: ClaimPopulation, pi: float, kind: str = "simple_expansion") -> float:
    """``N sigma_y`` in dollars for the unstratified design under the same variance model."""
    _check_kind_pi(kind, pi)
    pre = _Prefix(pop)
    return stratum_term(*pre.tot, pi, kind) / 100.0


def cum_sqrt_f(pop: ClaimPopulation, L: int = 2, bins: int = 100) -> list[int]:
    """Dalenius-Hodges cum-sqrt(f) breakpoints (cents) on an equal-width histogram.

    The cumulative square-root frequency is cut at ``i/L`` of its total at the bin
    edge whose cumulative value is closest to each target; each cut is snapped to
    the largest distinct amount at or below it.  Stratum ``i`` then holds amounts in
    ``(break_{i-1}, break_i]``.
    """
    if L < 2:
        raise ValueError("need L >= 2 strata")
    if bins < L:
        raise ValueError("need at least L bins")
    amounts = np.asarray(pop.amounts, dtype=float)
    counts = np.asarray(pop.counts, dtype=float)
    lo, hi = amounts[0], amounts[-1]
    if pop.unique < L:
        raise ValueError(f"cannot form {L} strata from {pop.unique} distinct amounts")
    freq, edges = np.histogram(amounts, bins=bins, range=(lo, hi), weights=counts)
    if np.count_nonzero(freq) < L:
        raise ValueError(f"only {np.count_nonzero(freq)} nonempty bins for L={L}")
    cum = np.cumsum(np.sqrt(freq))
    breaks: list[int] = []
    for i in range(1, L):
        target = cum[-1] * i / L
        b = int(np.argmin(np.abs(cum[:-1] - target)))   # upper edge of bin b
        cut = edges[b + 1]
        idx = int(np.searchsorted(amounts, cut, side="right")) - 1
        idx = min(max(idx, 0), pop.unique - 2)
        brk = pop.amounts[idx]
        if breaks and brk <= breaks[-1]:
            brk = pop.amounts[min(pop.amounts.index(breaks[-1]) + 1, pop.unique - 2)]
        breaks.append(brk)
    return breaks


@dataclass(frozen=True)
class StratifiedPlan:
    n: int
    n_formula: int                 # ceiling of z^2 (sum N_h sigma_h)^2 / E^2, before checks
    allocation: Allocation
    achieved_margin: float         # with finite population correction
    approx_margin: float           # z * objective / sqrt(n), no correction
    z: float


def stratified_sample_size(strat: Stratification, margin: float, confidence: float,
                           min_stratum_n: int = 2) -> StratifiedPlan:
    """Overall size from ``n = z^2 (sum N_h sigma_h)^2 / E^2`` with Neyman allocation.

    Strata receiving fewer than ``min_stratum_n`` units are raised to it (flagged on
    the allocation) so downstream variance estimates exist; ``n`` is then increased
    until the margin with finite population correction is within ``margin``.
    """
    if margin <= 0.0:
        raise ValueError("margin must be positive")
    z = z_for_confidence(confidence)
    total_n = sum(s.N_h for s in strat.strata)
    if strat.objective == 0.0:
        empty = Allocation(tuple(0 for _ in strat.strata))
        return StratifiedPlan(0, 0, empty, 0.0, 0.0, z)
    n_formula = min(math.ceil((z * strat.objective / margin) ** 2), total_n)

    def allocate(n: int) -> Allocation:
        base = optimal_allocation(strat.strata, n)
        sizes = list(base.sizes)
        bumped = False
        for i, s in enumerate(strat.strata):
            floor_h = min(min_stratum_n, s.N_h)
            if sizes[i] < floor_h and s.sigma_yh > 0.0:
                sizes[i] = floor_h
                bumped = True
        return Allocation(tuple(sizes), base.fallback, bumped)

    n = max(n_formula, 1)
    alloc = allocate(n)
    achieved = z * math.sqrt(stratified_variance(strat.strata, alloc))
    while achieved > margin and n < total_n:
        n += 1
        alloc = allocate(n)
        achieved = z * math.sqrt(stratified_variance(strat.strata, alloc))
    return StratifiedPlan(alloc.n, n_formula, alloc, achieved,
                          z * strat.objective / math.sqrt(alloc.n), z)
