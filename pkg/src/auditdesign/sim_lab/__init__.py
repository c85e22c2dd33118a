"""Simulation lab: error generators, synthetic populations, Monte Carlo experiments
and enumeration oracles."""
from .experiments import (
    BAND_HEADER,
    COVERAGE_HEADER,
    BandRow,
    CoverageResult,
    coverage_experiment,
    mc_sigma_r_bands,
    replicate_rng,
)
from .generators import (
    SCENARIOS,
    RealizedAudit,
    ScenarioSpec,
    all_or_nothing,
    gen_all_or_nothing,
    gen_scenario,
    make_edwards_like,
    make_neter_like,
    realized_sigma_r,
    realized_sigma_y,
)
from .oracles import ConditionalOracle, oracle_enumerate_conditional, oracle_enumerate_partial

__all__ = [
    "BAND_HEADER",
    "COVERAGE_HEADER",
    "SCENARIOS",
    "BandRow",
    "ConditionalOracle",
    "CoverageResult",
    "RealizedAudit",
    "ScenarioSpec",
    "all_or_nothing",
    "coverage_experiment",
    "gen_all_or_nothing",
    "gen_scenario",
    "make_edwards_like",
    "make_neter_like",
    "mc_sigma_r_bands",
    "oracle_enumerate_conditional",
    "oracle_enumerate_partial",
    "realized_sigma_r",
    "realized_sigma_y",
    "replicate_rng",
]
