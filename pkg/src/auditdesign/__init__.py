"""Sample design for audit populations: error-amount variance models, sample sizes,
estimator choice, two-strata designs and simulation checks."""
from .estimator_selector import SelectorReport, prob_ratio_beats, select
from .population_model import (
    ClaimPopulation,
    PopulationFormatError,
    PopulationMoments,
    load_population,
    moments,
)
from .sample_planner import PlanRequest, SamplePlan, margin_of_error, plan, sample_size
from .stratifier import Stratification, optimal_two_strata
from .variance_engine import DomainError, ErrorRate, PartialErrorSpec, VarianceEstimate

__all__ = [
    "ClaimPopulation",
    "DomainError",
    "ErrorRate",
    "PartialErrorSpec",
    "PlanRequest",
    "PopulationFormatError",
    "PopulationMoments",
    "SamplePlan",
    "SelectorReport",
    "Stratification",
    "VarianceEstimate",
    "load_population",
    "margin_of_error",
    "moments",
    "optimal_two_strata",
    "plan",
    "prob_ratio_beats",
    "sample_size",
    "select",
]
