"""Standard errors, confidence intervals on the identified set, age standardization."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping

from .bounds import POPULATION, TESTED, bound_pair
from .domain import (
    AgeWeights,
    AllStrataEmpty,
    AssumptionRegime,
    BoundsResult,
    CellCounts,
    ZeroDenominator,
)

log = logging.getLogger(__name__)

Z_95 = 1.96

SHARE_WEIGHTED_SE = "share-weighted"
WEIGHTED_MEAN_SE = "weighted-mean"


def se_lower(cell: CellCounts, value: float, denominator_role: str = POPULATION) -> float:
    """Standard error of a bound read as a sample proportion, ``sqrt(p(1-p)/n)``.

    ``n`` is the cell population for confirmed-positive rates and the number
    tested for positivity rates.
    """
    n = cell.n_pop if denominator_role == POPULATION else cell.n_tested
    if n <= 0:
        raise ZeroDenominator(f"{denominator_role} denominator is zero for {cell}")
    p = float(value)
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def se_upper(cell: CellCounts, value: float, denominator_role: str = TESTED) -> float:
    return se_lower(cell, value, denominator_role)


def region_ci(lower, upper, se_lo, se_hi, z: float = Z_95):
    """``[lower - z*se_lo, upper + z*se_hi]`` clipped to the unit interval."""
    if se_lo < 0 or se_hi < 0:
        raise ValueError("standard errors must be nonnegative")
    return max(0.0, lower - z * se_lo), min(1.0, upper + z * se_hi)


def bounds_with_inference(
    pop: CellCounts,
    hosp: CellCounts | None,
    regime: AssumptionRegime,
    z: float = Z_95,
) -> BoundsResult:
    """Bounds for one cell (pair) with proportion standard errors and the region CI.

    Under the hospital regimes each endpoint takes the standard error of the
    cell that attains it.
    """
    pair = bound_pair(pop, hosp, regime)
    lo, hi = float(pair.lower), float(pair.upper)
    s_lo = se_lower(pair.lower_cell, lo, pair.lower_denominator)
    s_hi = se_lower(pair.upper_cell, hi, pair.upper_denominator)
    c_lo, c_hi = region_ci(lo, hi, s_lo, s_hi, z)
    return BoundsResult(regime, lo, hi, s_lo, s_hi, c_lo, c_hi)


@dataclass(frozen=True)
class StratifiedBounds:
    """Per-age-group results; ``None`` marks a stratum with an empty denominator."""

    strata: Mapping[str, BoundsResult | None]
    age_weights: AgeWeights


def age_standardize(
    strata: StratifiedBounds,
    se_formula: str = SHARE_WEIGHTED_SE,
    weighted: bool = True,
    z: float = Z_95,
) -> BoundsResult:
    """Population-share weighted average of stratum bounds.

    ``se_formula="share-weighted"`` uses ``sqrt(sum(pi_a * se_a**2))``;
    ``"weighted-mean"`` uses ``sqrt(sum(pi_a**2 * se_a**2))``, the variance of a
    weighted mean of independent strata. Empty strata are dropped and the
    remaining weights renormalized. ``weighted=False`` gives every surviving
    stratum equal weight.
    """
    live = {a: r for a, r in strata.strata.items() if r is not None}
    if not live:
        raise AllStrataEmpty("no stratum has valid bounds")
    dropped = sorted(set(strata.strata) - set(live))
    if dropped:
        log.warning("dropping empty age strata %s and renormalizing weights", dropped)

    if weighted:
        raw = {a: strata.age_weights.weights.get(a, 0.0) for a in live}
    else:
        raw = {a: 1.0 for a in live}
    total = math.fsum(raw.values())
    if total <= 0:
        raise AllStrataEmpty("surviving strata carry zero population weight")
    w = {a: raw[a] / total for a in live}

    lower = math.fsum(w[a] * live[a].lower for a in live)
    upper = math.fsum(w[a] * live[a].upper for a in live)
    power = 1 if se_formula == SHARE_WEIGHTED_SE else 2
    if se_formula not in (SHARE_WEIGHTED_SE, WEIGHTED_MEAN_SE):
        raise ValueError(f"unknown se_formula {se_formula!r}")
    s_lo = math.sqrt(math.fsum(w[a] ** power * live[a].se_lower**2 for a in live))
    s_hi = math.sqrt(math.fsum(w[a] ** power * live[a].se_upper**2 for a in live))
    # the weighted mean can exceed a stratum bound by rounding only
    lower, upper = min(max(lower, 0.0), 1.0), min(max(upper, 0.0), 1.0)
    upper = max(upper, lower)
    c_lo, c_hi = region_ci(lower, upper, s_lo, s_hi, z)
    regime = next(iter(live.values())).regime
    return BoundsResult(regime, lower, upper, s_lo, s_hi, c_lo, c_hi)
