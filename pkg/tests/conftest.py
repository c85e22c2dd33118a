import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from auditdesign.population_model import ClaimPopulation, moments

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def cents_lists(min_size=1, max_size=8, hi=10**6):
    return st.lists(st.integers(1, hi), min_size=min_size, max_size=max_size)


def populations(min_size=1, max_size=8, hi=10**6):
    return cents_lists(min_size, max_size, hi).map(ClaimPopulation.from_cents)


@pytest.fixture
def pop1234():
    return ClaimPopulation.from_dollars([1, 2, 3, 4])


@pytest.fixture
def m1234(pop1234):
    return moments(pop1234)


@pytest.fixture(scope="session")
def edwards():
    from auditdesign.sim_lab import make_edwards_like
    return make_edwards_like(2024)


@pytest.fixture(scope="session")
def neter():
    from auditdesign.sim_lab import make_neter_like
    return make_neter_like(2024)
