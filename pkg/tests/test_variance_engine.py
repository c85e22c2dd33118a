import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from auditdesign.population_model import ClaimPopulation, moments
from auditdesign.sim_lab import oracle_enumerate_conditional, oracle_enumerate_partial
from auditdesign.variance_engine import (
    DomainError,
    ErrorRate,
    PartialErrorSpec,
    conservative_partial,
    conservative_pi,
    h_conditional,
    snap_rate,
    var_conditional_expected,
    var_partial_bound,
    var_partial_expected,
    var_ratio_expected,
    var_ratio_large_n,
    var_ratio_roberts,
    var_roberts,
    var_total,
)

from conftest import populations


def close(a, b, rel=1e-9, scale=1.0):
    return abs(a - b) <= rel * max(abs(a), abs(b), 1e-300) or abs(a - b) <= 1e-12 * scale


# ---------------------------------------------------------------- worked examples

def test_conditional_examples(m1234):
    assert var_conditional_expected(m1234, 0.0).value == 0.0
    assert var_conditional_expected(m1234, 1.0).value == m1234.sigma2_x
    assert var_conditional_expected(m1234, 0.5).value == pytest.approx(25 / 12, rel=1e-14)


def test_roberts_and_total_examples(m1234):
    assert var_roberts(m1234, 0.5).value == pytest.approx(1.71875, rel=1e-14)
    assert var_roberts(m1234, 0.0).value == 0.0
    assert var_roberts(m1234, 1.0).value == pytest.approx(m1234.sigma2_x, rel=1e-14)
    assert var_total(m1234, 0.5).value == pytest.approx(2.1875, rel=1e-14)
    assert var_total(m1234, 0.0).value == 0.0


def test_interior_rate_needs_two_claims():
    m = moments(ClaimPopulation.from_dollars([3]))
    with pytest.raises(DomainError):
        var_conditional_expected(m, 0.5)
    assert var_conditional_expected(m, 1.0).value == 0.0


def test_error_rate_validation():
    with pytest.raises(ValueError):
        ErrorRate(1.5)
    with pytest.raises(ValueError):
        ErrorRate(0.5, 7, 4)
    r = snap_rate(0.33, 10)
    assert (r.ne, r.pi) == (3, 0.3)


def test_conservative_examples():
    m = moments(ClaimPopulation.from_dollars([1, 2, 3]))
    c = conservative_pi(m)
    assert c.pi_crit == pytest.approx(13 / 22, rel=1e-14)
    assert c.pi_approx == pytest.approx(14 / 24, rel=1e-14)
    assert c.attained_at == "interior"
    const = conservative_pi(moments(ClaimPopulation.from_dollars([5, 5, 5])))
    assert const.pi_crit == 0.5
    assert const.pi_approx == 0.5
    assert const.h_max.value == pytest.approx(h_conditional(moments(
        ClaimPopulation.from_dollars([5, 5, 5])), 0.5))


def test_conservative_neter_uses_one(neter):
    m = moments(neter)
    c = conservative_pi(m)
    assert c.pi_crit_unclamped > 1.0
    assert c.pi_crit == 1.0
    assert c.pi_max == 1.0
    assert c.h_max.value == m.sigma2_x


@given(populations(min_size=2, max_size=30))
def test_conservative_is_grid_max(pop):
    m = moments(pop)
    c = conservative_pi(m)
    grid = np.linspace(0, 1, 201)
    best = max(h_conditional(m, p) for p in grid)
    assert c.h_max.value >= best * (1 - 1e-12)


def test_partial_examples(m1234):
    assert conservative_partial(m1234).value == pytest.approx(2.25, rel=1e-14)
    assert conservative_partial(m1234).inputs["pi_star"] == pytest.approx(0.6)
    const = moments(ClaimPopulation.from_dollars([4, 4]))
    assert conservative_partial(const).value == pytest.approx(0.25 * 16)
    spec = PartialErrorSpec(4, 2, 0, 0.5)
    assert var_partial_expected(m1234, spec).value == pytest.approx(
        var_conditional_expected(m1234, 0.5).value, rel=1e-14)
    assert var_partial_bound(m1234, spec).value == pytest.approx(var_total(m1234, 0.5).value,
                                                                rel=1e-14)
    assert var_partial_expected(m1234, PartialErrorSpec(4, 0, 0, 0.5)).value == 0.0


def test_partial_q_to_one(m1234):
    spec = PartialErrorSpec(4, 3, 2, 1 - 1e-9)
    assert var_partial_expected(m1234, spec).value == pytest.approx(
        var_conditional_expected(m1234, 0.75).value, rel=1e-7)


def test_partial_spec_validation():
    with pytest.raises(ValueError):
        PartialErrorSpec(4, 2, 3, 0.5)
    with pytest.raises(ValueError):
        PartialErrorSpec(4, 2, 1, 1.0)
    with pytest.raises(ValueError):
        PartialErrorSpec.from_rates(10, 0.2, 0.3, 0.5)


def test_partial_bound_gap_vanishes_with_n():
    rng = np.random.default_rng(3)
    base = rng.integers(100, 10**5, size=40).tolist()
    gaps = []
    for k in (25, 25_000):
        pop = ClaimPopulation.from_cents(base).scaled_counts(k)
        m = moments(pop)
        spec = PartialErrorSpec.from_rates(pop.N, 0.4, 0.1, 0.5)
        gaps.append(var_partial_bound(m, spec).value - var_partial_expected(m, spec).value)
    assert gaps[1] < gaps[0] / 500


def test_ratio_examples(m1234):
    assert var_ratio_expected(m1234, 0.0).value == 0.0
    assert var_ratio_expected(m1234, 1.0).value == 0.0
    exact = var_ratio_expected(m1234, 0.5).value
    assert exact == pytest.approx(1.5833333333333333, rel=1e-14)
    literal = var_ratio_expected(m1234, 0.5, finite_correction=False).value
    assert literal == pytest.approx(1.65625, rel=1e-14)
    grid = [i / 100 for i in range(101)]
    vals = [var_ratio_expected(m1234, p).value for p in grid]
    assert grid[int(np.argmax(vals))] == 0.5


def test_ratio_roberts_regression(m1234):
    # direct evaluation of the skewness form for {1,2,3,4}: G1 = 0, cv^2 = 0.2
    cv2 = 1.25 / 6.25
    bracket = cv2 + 4 / (1 + cv2) - 5
    expected = 0.25 * 7.5 * (1 + bracket / 4)
    assert var_ratio_roberts(m1234, 0.5).value == pytest.approx(expected, rel=1e-14)
    assert var_ratio_roberts(m1234, 0.0).value == 0.0
    with pytest.raises(DomainError):
        var_ratio_roberts(moments(ClaimPopulation.from_dollars([2, 2])), 0.5)


def test_ratio_large_n_agreement():
    rng = np.random.default_rng(11)
    base = ClaimPopulation.from_cents(rng.integers(100, 10**5, size=300).tolist())
    rels = []
    for k in (1, 1000):
        m = moments(base.scaled_counts(k))
        a = var_ratio_roberts(m, 0.3).value
        b = var_ratio_expected(m, 0.3).value
        c = var_ratio_large_n(m, 0.3).value
        rels.append((abs(a - b) / b, abs(b - c) / c))
    assert rels[1][0] < rels[0][0] / 100 and rels[1][0] < 1e-5
    assert rels[1][1] < 1e-5


# ---------------------------------------------------------------- properties

@given(populations(min_size=1, max_size=40), st.floats(0, 1))
def test_ratio_symmetry(pop, p):
    assume(1 - (1 - p) == p)
    m = moments(pop)
    assert var_ratio_expected(m, p).value == var_ratio_expected(m, 1 - p).value


def test_ordering_and_gap_bound():
    rng = np.random.default_rng(7)
    for trial in range(300):
        n = int(rng.integers(4, 201))
        if trial % 2:
            cents = rng.integers(1, 10**6, size=n)
        else:
            cents = np.maximum(np.round(rng.lognormal(6, 1.2, size=n) * 100), 1).astype(int)
        m = moments(ClaimPopulation.from_cents(cents.tolist()))
        for p in np.round(np.arange(0, 1.0001, 0.05), 10):
            r = var_roberts(m, p).value
            c = var_conditional_expected(m, p).value
            t = var_total(m, p).value
            slack = 1e-12 * m.mu_x2
            assert r <= c + slack and c <= t + slack
            gap = p * (1 - p) * (m.sigma2_x + m.mu_x**2) / m.N * (1 + m.N / (m.N - 1))
            assert t - r <= gap + slack


def test_partial_bound_coefficient_below_two():
    # dropped correction coefficient claimed to be less than 2
    rng = np.random.default_rng(1)
    for _ in range(2000):
        n = int(rng.integers(2, 500))
        t = int(rng.integers(1, n + 1))
        p = int(rng.integers(0, t + 1))
        q = float(rng.uniform(0.01, 0.99))
        spec = PartialErrorSpec(n, t, p, q)
        pt, pp, frac = spec.pi_T, spec.pi_p, p / t
        coef = (pp * (1 - q) ** 2 * (1 - frac)
                + (1 - pt) * (1 - frac * (1 - q)) * (pt - pp * (1 - q)))
        assert 0 <= coef < 2


# ---------------------------------------------------------------- oracle agreement

def _random_pops(rng, count, max_n=8, min_n=1):
    for _ in range(count):
        n = int(rng.integers(min_n, max_n + 1))
        yield ClaimPopulation.from_cents(rng.integers(1, 10**5, size=n).tolist())


def test_conditional_and_total_against_enumeration():
    rng = np.random.default_rng(101)
    for pop in _random_pops(rng, 25):
        m = moments(pop)
        for ne in range(pop.N + 1):
            o = oracle_enumerate_conditional(pop, ne)
            rate = ErrorRate.exact(ne, pop.N)
            assert close(var_conditional_expected(m, rate).value, o.e_cond_var, scale=m.mu_x2)
            assert close(var_total(m, rate).value, o.e_cond_var + o.var_cond_mean,
                         scale=m.mu_x2)


def test_ratio_against_enumeration():
    rng = np.random.default_rng(102)
    for pop in _random_pops(rng, 25):
        m = moments(pop)
        for ne in range(1, pop.N):
            o = oracle_enumerate_conditional(pop, ne)
            assert close(var_ratio_expected(m, ErrorRate.exact(ne, pop.N)).value, o.e_sigma_r,
                         scale=m.mu_x2)


def test_cross_moment_identity():
    # E(Xbar_e Xbar2_e) = (N - Ne)/((N - 1) Ne) mu12 + mu mu2
    rng = np.random.default_rng(103)
    for pop in _random_pops(rng, 25):
        m = moments(pop)
        for ne in range(1, pop.N + 1):
            o = oracle_enumerate_conditional(pop, ne)
            fpc = (pop.N - ne) / ((pop.N - 1) * ne) if pop.N > 1 else 0.0
            expected = fpc * m.mu12 + m.mu_x * m.mu_x2
            assert close(expected, o.e_xbar_x2bar, scale=m.mu_x * m.mu_x2)


def test_cross_moment_worked_example(pop1234):
    o = oracle_enumerate_conditional(pop1234, 2)
    assert o.e_xbar_x2bar == pytest.approx(20.833333333333332, rel=1e-12)


def test_partial_against_enumeration(pop1234, m1234):
    o = oracle_enumerate_partial(pop1234, 2, 1, 0.5)
    assert close(var_partial_expected(m1234, PartialErrorSpec(4, 2, 1, 0.5)).value, o)
    rng = np.random.default_rng(104)
    for pop in _random_pops(rng, 20, max_n=6, min_n=2):
        m = moments(pop)
        for t in range(pop.N + 1):
            for p in range(t + 1):
                q = float(rng.uniform(0.05, 0.95))
                spec = PartialErrorSpec(pop.N, t, p, q)
                truth = oracle_enumerate_partial(pop, t, p, q)
                assert close(var_partial_expected(m, spec).value, truth, scale=m.mu_x2)
                assert var_partial_bound(m, spec).value >= truth - 1e-12 * m.mu_x2


def test_partial_bounds_dominate():
    rng = np.random.default_rng(105)
    for _ in range(1000):
        n = int(rng.integers(2, 60))
        pop = ClaimPopulation.from_cents(rng.integers(1, 10**5, size=n).tolist())
        m = moments(pop)
        t = int(rng.integers(0, n + 1))
        p = int(rng.integers(0, t + 1))
        spec = PartialErrorSpec(n, t, p, float(rng.uniform(0.01, 0.99)))
        bound = var_partial_bound(m, spec).value
        assert bound >= var_partial_expected(m, spec).value - 1e-12 * m.mu_x2
        cons = conservative_partial(m).value
        assert cons >= bound - 1e-12 * m.mu_x2
