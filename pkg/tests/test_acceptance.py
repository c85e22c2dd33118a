"""Acceptance criteria 1-11.  Each test prints one PASS/FAIL line, visible even
under captured output."""
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from auditdesign.estimator_selector import g_mean_variance, prob_ratio_beats
from auditdesign.population_model import ClaimPopulation, moments
from auditdesign.sample_planner import PlanRequest, margin_of_error, plan, sample_size
from auditdesign.sim_lab import (
    all_or_nothing,
    coverage_experiment,
    make_edwards_like,
    make_neter_like,
    mc_sigma_r_bands,
    oracle_enumerate_conditional,
    oracle_enumerate_partial,
)
from auditdesign.stratifier import (
    cum_sqrt_f,
    optimal_two_strata,
    run_candidates,
    run_objective,
    stratify_at,
    unstratified_objective,
)
from auditdesign.variance_engine import (
    ErrorRate,
    PartialErrorSpec,
    conservative_partial,
    conservative_pi,
    var_conditional_expected,
    var_partial_bound,
    var_partial_expected,
    var_ratio_expected,
    var_roberts,
    var_total,
)

SEED = 20240601
EDWARDS_SEED = 2024
NETER_SEED = 2024


@pytest.fixture
def verdict(capsys):
    @contextmanager
    def report(number, title):
        detail = {}
        try:
            yield detail
        except BaseException as exc:
            with capsys.disabled():
                print(f"\nACCEPTANCE {number:>2} FAIL  {title}: {exc}".rstrip())
            raise
        extra = "; ".join(f"{k}={v}" for k, v in detail.items())
        with capsys.disabled():
            print(f"\nACCEPTANCE {number:>2} PASS  {title}" + (f" ({extra})" if extra else ""))
    return report


def rel_close(a, b, rel):
    return abs(a - b) <= rel * max(abs(a), abs(b))


def random_population(rng, n, lognormal=False):
    if lognormal:
        cents = np.maximum(np.round(rng.lognormal(8, 1.5, size=n)), 1)
    else:
        cents = rng.integers(1, 10**7, size=n)
    return ClaimPopulation.from_cents(cents.astype(int).tolist())


@pytest.fixture(scope="module")
def edwards():
    return make_edwards_like(EDWARDS_SEED)


def test_01_conditional_variance_oracle(verdict):
    with verdict(1, "expected conditional variance equals subset enumeration, N <= 8") as d:
        rng = np.random.default_rng(SEED + 1)
        start = time.perf_counter()
        checked = worst = 0
        for n in range(1, 9):
            for trial in range(50):
                pop = random_population(rng, n, lognormal=trial % 2 == 1)
                m = moments(pop)
                for ne in range(n + 1):
                    truth = oracle_enumerate_conditional(pop, ne).e_cond_var
                    got = var_conditional_expected(m, ErrorRate.exact(ne, n)).value
                    assert rel_close(got, truth, 1e-9), (n, ne, got, truth)
                    if truth:
                        worst = max(worst, abs(got - truth) / truth)
                    checked += 1
        elapsed = time.perf_counter() - start
        d.update(cases=checked, worst_rel=f"{worst:.1e}", seconds=f"{elapsed:.1f}")
        assert elapsed < 10.0, f"took {elapsed:.1f}s"


def test_02_three_estimator_ordering(verdict):
    with verdict(2, "roberts <= conditional <= total on 1000 random pairs") as d:
        rng = np.random.default_rng(SEED + 2)
        violations = 0
        for i in range(1000):
            pop = random_population(rng, int(rng.integers(2, 201)), lognormal=i % 2 == 1)
            m = moments(pop)
            p = float(rng.uniform(0, 1))
            r, c, t = (f(m, p).value for f in (var_roberts, var_conditional_expected, var_total))
            slack = 1e-12 * m.mu_x2
            violations += (r > c + slack) + (c > t + slack)
        d["violations"] = violations
        assert violations == 0


def test_03_ratio_variance_oracle(verdict):
    with verdict(3, "expected ratio residual variance equals enumeration; peak at 0.50") as d:
        rng = np.random.default_rng(SEED + 3)
        grid = [i / 100 for i in range(101)]
        checked = 0
        for n in range(2, 9):
            for trial in range(50):
                pop = random_population(rng, n, lognormal=trial % 2 == 1)
                m = moments(pop)
                for ne in range(1, n):
                    truth = oracle_enumerate_conditional(pop, ne).e_sigma_r
                    got = var_ratio_expected(m, ErrorRate.exact(ne, n)).value
                    assert rel_close(got, truth, 1e-9), (n, ne, got, truth)
                    checked += 1
                vals = [var_ratio_expected(m, p).value for p in grid]
                assert grid[int(np.argmax(vals))] == 0.50
        d["cases"] = checked


def test_04_partial_error_model(verdict):
    with verdict(4, "partial-error exact form, bound and worst case") as d:
        rng = np.random.default_rng(SEED + 4)
        checked = 0
        for n in range(2, 7):
            for trial in range(6):
                pop = random_population(rng, n, lognormal=trial % 2 == 1)
                m = moments(pop)
                for t in range(n + 1):
                    for p in range(t + 1):
                        q = float(rng.uniform(0.01, 0.99))
                        truth = oracle_enumerate_partial(pop, t, p, q)
                        got = var_partial_expected(m, PartialErrorSpec(n, t, p, q)).value
                        assert rel_close(got, truth, 1e-9) or got == truth == 0.0, (n, t, p, q)
                        checked += 1
        for i in range(1000):
            n = int(rng.integers(2, 300))
            pop = random_population(rng, n, lognormal=i % 2 == 1)
            m = moments(pop)
            t = int(rng.integers(0, n + 1))
            spec = PartialErrorSpec(n, t, int(rng.integers(0, t + 1)), float(rng.uniform(0.01, 0.99)))
            assert var_partial_bound(m, spec).value >= var_partial_expected(m, spec).value
        grid_checked = 0
        for i in range(20):
            pop = random_population(rng, 500, lognormal=i % 2 == 1)
            m = moments(pop)
            cons = conservative_partial(m).value
            for pt in np.linspace(0, 1, 21):
                for frac in np.linspace(0, 1, 11):
                    for q in np.linspace(0.05, 0.95, 10):
                        spec = PartialErrorSpec.from_rates(500, pt, pt * frac, q)
                        assert cons >= var_partial_bound(m, spec).value * (1 - 1e-12)
                        grid_checked += 1
        d.update(oracle_cases=checked, grid_points=grid_checked)


def test_05_run_shortcut(verdict):
    with verdict(5, "run candidates reach the exhaustive minimum on 500 instances") as d:
        rng = np.random.default_rng(SEED + 5)
        start = time.perf_counter()
        for _ in range(500):
            y = int(rng.integers(50, 5000))
            xs = [int(v) for v in rng.integers(1, y, size=int(rng.integers(0, 21)))]
            zs = [int(v) for v in rng.integers(y + 1, 10 * y, size=int(rng.integers(0, 21)))]
            prefix = (len(xs), sum(xs), sum(v * v for v in xs))
            suffix = (len(zs), sum(zs), sum(v * v for v in zs))
            run = (y, int(rng.integers(1, 51)))
            pi = float(rng.uniform(0.01, 1.0))
            every = [run_objective(prefix, run, suffix, pi, k) for k in range(run[1] + 1)]
            ks = {0, run[1]} | set(run_candidates(prefix, run, suffix, pi))
            assert min(every[k] for k in ks) == min(every)
        elapsed = time.perf_counter() - start
        d["seconds"] = f"{elapsed:.1f}"
        assert elapsed < 30.0


def test_06_criterion_variance_oracle(verdict):
    with verdict(6, "selection criterion variance equals enumeration; confidence > 0.5") as d:
        rng = np.random.default_rng(SEED + 6)
        checked = 0
        for n in range(2, 9):
            for trial in range(50):
                pop = random_population(rng, n, lognormal=trial % 2 == 1)
                m = moments(pop)
                for ne in range(1, n + 1):
                    o = oracle_enumerate_conditional(pop, ne)
                    mean, var = g_mean_variance(m, ne / n)
                    assert rel_close(var, o.ubar_var, 1e-9) or var == o.ubar_var == 0.0
                    if m.sigma2_x > 0 and var > 0:
                        assert prob_ratio_beats(m, ne / n) > 0.5
                    checked += 1
        d["cases"] = checked


def test_07_back_substitution(verdict):
    with verdict(7, "sample size back-substitution on 1000 random requests") as d:
        rng = np.random.default_rng(SEED + 7)
        clamped = 0
        for _ in range(1000):
            N = int(rng.integers(2, 10**6))
            var = float(10 ** rng.uniform(-2, 8))
            margin = float(10 ** rng.uniform(0, 9))
            conf = float(rng.uniform(0.5, 0.999))
            sp = sample_size(N, var, margin, conf)
            assert margin_of_error(N, sp.n, var, conf) <= margin
            if sp.n > 1 and not sp.clamped:
                assert margin_of_error(N, sp.n - 1, var, conf) > margin
            elif sp.clamped:
                clamped += 1
                assert margin_of_error(N, N - 1, var, conf) > margin
        d["clamped"] = clamped


def test_08_sample_size_curves(verdict, edwards):
    with verdict(8, "sample size by error rate peaks where expected") as d:
        grid = [round(i / 100, 2) for i in range(1, 100)]
        margin = 0.01 * edwards.total / 100
        ratio = [plan(edwards, PlanRequest(margin, 0.9, "ratio"), p) for p in grid]
        ns = [sp.n for sp in ratio]
        peak = [grid[i] for i, v in enumerate(ns) if v == max(ns)]
        assert peak == [0.50], peak
        assert grid[int(np.argmax([sp.n_real for sp in ratio]))] == 0.50
        simple = [plan(edwards, PlanRequest(margin, 0.9), p).n for p in grid]
        crit = conservative_pi(moments(edwards)).pi_crit
        simple_peak = [grid[i] for i, v in enumerate(simple) if v == max(simple)]
        assert all(abs(p - crit) <= 0.10 for p in simple_peak), (simple_peak, crit)
        neter = make_neter_like(NETER_SEED)
        cr = conservative_pi(moments(neter))
        assert cr.pi_crit_unclamped > 1.0
        cons = plan(neter, PlanRequest(0.01 * neter.total / 100, 0.9, variance_source="conservative"))
        assert cons.pi == 1.0
        d.update(simple_peak=simple_peak, pi_crit=f"{crit:.3f}",
                 neter_unclamped=f"{cr.pi_crit_unclamped:.2f}")


def test_09_partial_scenarios_below_all_or_nothing(verdict, edwards):
    with verdict(9, "partial-error scenarios below scenario 1 for rates <= 0.8") as d:
        rates = [round(0.1 * i, 1) for i in range(1, 9)]
        start = time.perf_counter()
        rows = mc_sigma_r_bands(edwards, [1, 2, 3, 4], rates, 500, SEED + 9)
        elapsed = time.perf_counter() - start
        means = {(r.scenario, r.rate): r.mean for r in rows}
        bad = [(s, p, round(means[(s, p)] / means[("1", p)], 4))
               for s in ("2", "3", "4") for p in rates if not means[(s, p)] < means[("1", p)]]
        d["seconds"] = f"{elapsed:.1f}"
        assert elapsed < 120.0
        assert not bad, f"scenario, rate, ratio to scenario 1 not below: {bad}"


def test_10_two_strata_standard_errors(verdict, edwards):
    with verdict(10, "optimal two strata beat cum-sqrt(f) and SRS; ratio boundary fixed") as d:
        (brk,) = cum_sqrt_f(edwards)
        n = 100
        grid = [round(0.05 * i, 2) for i in range(1, 20)]
        for kind in ("simple_expansion", "ratio"):
            bounds = set()
            for p in grid:
                best = optimal_two_strata(edwards, p, kind)
                se_opt = best.stderr(n, fpc=False)
                se_cum = stratify_at(edwards, brk, p, kind).objective / math.sqrt(n)
                se_srs = unstratified_objective(edwards, p, kind) / math.sqrt(n)
                assert se_opt <= se_cum and se_opt <= se_srs, (kind, p)
                bounds.add(best.boundary)
            if kind == "ratio":
                assert len(bounds) == 1, bounds
        d["grid_points"] = len(grid)


def test_11_coverage(verdict, edwards):
    with verdict(11, "interval coverage near 90% at planned n") as d:
        margin = 0.1 * 0.3 * edwards.total / 100
        start = time.perf_counter()
        for est in ("ratio", "simple_expansion"):
            n = plan(edwards, PlanRequest(margin, 0.9, est), 0.3).n
            res = coverage_experiment(edwards, all_or_nothing(0.3), n, est, 0.9, 10**4, SEED + 11)
            again = coverage_experiment(edwards, all_or_nothing(0.3), n, est, 0.9, 10**4, SEED + 11)
            assert res == again
            d[f"{est}_n"] = n
            d[f"{est}_coverage"] = res.coverage
            if not 0.86 <= res.coverage <= 0.94:
                doubled = coverage_experiment(edwards, all_or_nothing(0.3), min(2 * n, edwards.N),
                                              est, 0.9, 10**4, SEED + 11)
                d[f"{est}_doubled"] = doubled.coverage
                assert abs(doubled.coverage - 0.9) < abs(res.coverage - 0.9)
                raise AssertionError(f"{est} coverage {res.coverage} outside [0.86, 0.94]")
        elapsed = time.perf_counter() - start
        d["seconds"] = f"{elapsed:.1f}"
        assert elapsed < 120.0
