"""Closed-form prevalence bounds from cell counts.

Every function accepts ``exact=True`` to compute in :class:`fractions.Fraction`
instead of floats; the brute-force enumerator in :mod:`prevbounds.simulate` is
compared against that mode.

Notation used in comments: for a cell, ``N`` is the population (or admissions),
``T`` the number tested, ``P`` the number positive and ``T - P`` the tested
negatives.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .domain import (
    AssumptionRegime,
    CellCounts,
    EmptyIdentifiedSet,
    EmptyPopulation,
    ErrorBand,
    MissingHospitalCell,
    NoTests,
    Regime,
    validate_cell,
)

POPULATION = "pop"
TESTED = "tested"


def _div(num, den, exact):
    return Fraction(num, den) if exact else num / den


def _lam(x: float, exact: bool):
    # decimal reading keeps 0.005 as 1/200 rather than its binary approximation
    return Fraction(repr(float(x))) if exact else float(x)


def _clamp(x):
    if x < 0:
        return type(x)(0)
    if x > 1:
        return type(x)(1)
    return x


def _need_pop(cell: CellCounts):
    validate_cell(cell)
    if cell.n_pop <= 0:
        raise EmptyPopulation(f"empty cell {cell}")


def _need_tests(cell: CellCounts):
    _need_pop(cell)
    if cell.n_tested <= 0:
        raise NoTests(f"no tests in cell {cell}; test positivity undefined")


def worst_case(pop: CellCounts, exact: bool = False):
    """No-assumption bounds: confirmed positive rate, plus the untested rate on top."""
    _need_pop(pop)
    lower = _div(pop.n_positive, pop.n_pop, exact)
    upper = _div(pop.n_positive + pop.n_pop - pop.n_tested, pop.n_pop, exact)
    return lower, upper


def test_monotone(pop: CellCounts, exact: bool = False):
    """Confirmed positive rate and test positivity rate."""
    _need_tests(pop)
    return _div(pop.n_positive, pop.n_pop, exact), _div(pop.n_positive, pop.n_tested, exact)


test_monotone.__test__ = False  # keep pytest from collecting it when imported


def hospital_monotone_upper(pop: CellCounts, hosp: CellCounts, exact: bool = False):
    """Population lower bound unchanged; upper bound is the smaller positivity rate."""
    lp, up = test_monotone(pop, exact)
    _, uh = test_monotone(hosp, exact)
    return lp, min(up, uh)


def hospital_independent(pop: CellCounts, hosp: CellCounts, exact: bool = False):
    """Intersection of the population and hospital test-monotone bounds."""
    lp, up = test_monotone(pop, exact)
    lh, uh = test_monotone(hosp, exact)
    return max(lp, lh), min(up, uh)


def error_adjusted(
    base,
    cell: CellCounts,
    band: ErrorBand,
    upper_denominator: str = POPULATION,
    lower_denominator: str = POPULATION,
    exact: bool = False,
):
    """Shift ``base`` bounds to allow a share ``band`` of negative tests to be false.

    The correction for an endpoint is ``lambda * (T - P) / denom`` where
    ``denom`` is that bound's own denominator: ``N`` for confirmed-positive
    style bounds and ``T`` for positivity-rate bounds.
    """
    lower, upper = base
    denoms = {POPULATION: cell.n_pop, TESTED: cell.n_tested}
    neg = cell.n_negative
    if neg:
        lower = lower + _lam(band.lambda_lower, exact) * _div(neg, denoms[lower_denominator], exact)
        upper = upper + _lam(band.lambda_upper, exact) * _div(neg, denoms[upper_denominator], exact)
    return _clamp(lower), _clamp(upper)


@dataclass(frozen=True)
class BoundPair:
    """Bounds plus where each endpoint came from, for standard errors downstream."""

    lower: float | Fraction
    upper: float | Fraction
    lower_cell: CellCounts
    lower_denominator: str
    upper_cell: CellCounts
    upper_denominator: str

    def as_tuple(self):
        return self.lower, self.upper


def _tm_adjusted(cell, band, exact):
    base = test_monotone(cell, exact)
    if band is None or band.is_zero:
        return base
    return error_adjusted(base, cell, band, upper_denominator=TESTED, exact=exact)


def bound_pair(
    pop: CellCounts,
    hosp: CellCounts | None,
    regime: AssumptionRegime,
    exact: bool = False,
) -> BoundPair:
    """Evaluate one rung of the assumption ladder and record the binding cells.

    For the hospital regimes each cell's test-monotone bounds are error
    adjusted first and then combined; see the decisions note in the README.
    """
    band = regime.error_band
    kind = regime.regime
    if kind.needs_hospital and hosp is None:
        raise MissingHospitalCell(f"regime {kind.value} needs a hospital cell")

    if kind is Regime.WORST_CASE:
        lo, hi = worst_case(pop, exact)
        if band is not None and not band.is_zero:
            lo, hi = error_adjusted((lo, hi), pop, band, exact=exact)
        return BoundPair(lo, hi, pop, POPULATION, pop, POPULATION)

    lp, up = _tm_adjusted(pop, band, exact)
    if kind is Regime.TEST_MONOTONE:
        return BoundPair(lp, up, pop, POPULATION, pop, TESTED)

    lh, uh = _tm_adjusted(hosp, band, exact)
    upper, upper_cell = (up, pop) if up <= uh else (uh, hosp)
    if kind is Regime.HOSP_MONOTONE:
        lower, lower_cell = lp, pop
    else:
        lower, lower_cell = (lp, pop) if lp >= lh else (lh, hosp)
    if lower > upper:
        raise EmptyIdentifiedSet(float(lower), float(upper))
    return BoundPair(lower, upper, lower_cell, POPULATION, upper_cell, TESTED)


def bound_ladder(
    pop: CellCounts,
    hosp: CellCounts | None,
    regime: AssumptionRegime,
    exact: bool = False,
):
    """Bounds ``(lower, upper)`` on population prevalence under ``regime``."""
    return bound_pair(pop, hosp, regime, exact).as_tuple()
