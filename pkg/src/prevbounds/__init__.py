"""Partial-identification bounds on infection prevalence from linked test and hospital records."""

from .bounds import bound_ladder, bound_pair, error_adjusted, hospital_independent, hospital_monotone_upper, worst_case
from .bounds import test_monotone
from .domain import (
    AGE_GROUPS,
    AgeWeights,
    AssumptionRegime,
    BoundsResult,
    CellCounts,
    ErrorBand,
    PrevBoundsError,
    Regime,
)
from .inference import age_standardize, bounds_with_inference, region_ci, se_lower, se_upper
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "AGE_GROUPS",
    "AgeWeights",
    "AssumptionRegime",
    "BACKEND",
    "BoundsResult",
    "CellCounts",
    "ErrorBand",
    "PrevBoundsError",
    "Regime",
    "age_standardize",
    "bound_ladder",
    "bound_pair",
    "bounds_with_inference",
    "error_adjusted",
    "hospital_independent",
    "hospital_monotone_upper",
    "region_ci",
    "se_lower",
    "se_upper",
    "test_monotone",
    "worst_case",
]
