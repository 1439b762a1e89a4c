"""Core value types and error classes shared across the package."""

from __future__ import annotations

import datetime as dt
import enum
import math
import re
from dataclasses import dataclass, field
from typing import Mapping

AGE_GROUPS: tuple[str, ...] = ("0-17", "18-30", "30-50", "50-64", "65-74", "75+")

_ICD10_RE = re.compile(r"^[A-Z][0-9][0-9A-Z](\.?[0-9A-Z]{1,4})?$")


class PrevBoundsError(Exception):
    """Base class for all package errors."""


class ConfigError(PrevBoundsError):
    pass


class DataError(PrevBoundsError):
    pass


class InvariantViolation(PrevBoundsError):
    pass


class OrderingViolation(DataError):
    pass


class NegativeCount(DataError):
    pass


class SchemaError(DataError):
    pass


class RowError(DataError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DuplicateAdmission(DataError):
    pass


class EmptyDiagnoses(DataError):
    pass


class EmptyPopulation(DataError):
    pass


class NoTests(DataError):
    pass


class ZeroDenominator(DataError):
    pass


class MissingHospitalCell(ConfigError):
    pass


class MissingPopulationTotals(ConfigError):
    pass


class MissingCountyTotals(ConfigError):
    pass


class AllStrataEmpty(DataError):
    pass


class DegenerateSummary(DataError):
    pass


class NoDiscordantPairs(DataError):
    pass


class TooLarge(PrevBoundsError):
    pass


class InvalidScenario(ConfigError):
    pass


class EmptyIdentifiedSet(DataError):
    """The data contradict the maintained assumptions: lower bound exceeds upper bound."""

    def __init__(self, lower: float, upper: float):
        super().__init__(f"identified set is empty (lower={lower!r} > upper={upper!r})")
        self.lower = lower
        self.upper = upper


class TestResult(enum.Enum):
    __test__ = False
    # Order encodes the same-day collapse priority: higher wins.
    INCONCLUSIVE = 0
    NEGATIVE = 1
    POSITIVE = 2

    @classmethod
    def parse(cls, text: str) -> "TestResult":
        try:
            return _RESULT_NAMES[text.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown test result {text!r}") from None


_RESULT_NAMES = {
    "positive": TestResult.POSITIVE,
    "negative": TestResult.NEGATIVE,
    "inconclusive": TestResult.INCONCLUSIVE,
}


class Sex(enum.Enum):
    FEMALE = "F"
    MALE = "M"
    OTHER = "O"


@dataclass(frozen=True, slots=True)
class TestRecord:
    __test__ = False
    person_id: str
    specimen_date: dt.date
    result: TestResult


@dataclass(frozen=True, slots=True)
class DiagnosisEntry:
    code: str
    is_admitting: bool = False
    is_primary_final: bool = False
    position: int = 0

    def __post_init__(self):
        if not _ICD10_RE.match(self.code.upper()):
            raise ValueError(f"not an ICD-10 code: {self.code!r}")


@dataclass(frozen=True, slots=True)
class AdmissionRecord:
    person_id: str
    admit_time: dt.datetime
    discharge_time: dt.datetime | None = None
    diagnoses: tuple[DiagnosisEntry, ...] = ()

    def __post_init__(self):
        if self.discharge_time is not None and self.discharge_time < self.admit_time:
            raise ValueError("discharge_time precedes admit_time")

    @property
    def admit_date(self) -> dt.date:
        return self.admit_time.date()


@dataclass(frozen=True, slots=True)
class PersonRecord:
    person_id: str
    age_group: str | None = None
    county: str | None = None
    sex: Sex | None = None

    def __post_init__(self):
        if self.age_group is not None and self.age_group not in AGE_GROUPS:
            raise ValueError(f"unknown age group {self.age_group!r}")


@dataclass(frozen=True, slots=True)
class CellCounts:
    """Sufficient statistics for one cell: population, tested, positive."""

    n_pop: int
    n_tested: int
    n_positive: int

    def __add__(self, other: "CellCounts") -> "CellCounts":
        return CellCounts(
            self.n_pop + other.n_pop,
            self.n_tested + other.n_tested,
            self.n_positive + other.n_positive,
        )

    def scaled(self, k: int) -> "CellCounts":
        return CellCounts(self.n_pop * k, self.n_tested * k, self.n_positive * k)

    @property
    def n_negative(self) -> int:
        # Tested but not positive (inconclusives, when counted as tested, land here).
        return self.n_tested - self.n_positive


def validate_cell(counts: CellCounts) -> CellCounts:
    """Return ``counts`` unchanged if ``0 <= n_positive <= n_tested <= n_pop``."""
    values = (counts.n_pop, counts.n_tested, counts.n_positive)
    if any(int(v) != v for v in values):
        raise NegativeCount(f"counts must be integers: {counts}")
    if min(values) < 0:
        raise NegativeCount(f"negative count in {counts}")
    if counts.n_positive > counts.n_tested:
        raise OrderingViolation(
            f"n_positive={counts.n_positive} exceeds n_tested={counts.n_tested}"
        )
    if counts.n_tested > counts.n_pop:
        raise OrderingViolation(f"n_tested={counts.n_tested} exceeds n_pop={counts.n_pop}")
    return counts


@dataclass(frozen=True)
class ErrorBand:
    """Bounds on the share of negative tests that are false: ``[lambda_lower, lambda_upper]``."""

    lambda_lower: float = 0.0
    lambda_upper: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.lambda_lower <= self.lambda_upper <= 1.0:
            raise ValueError(
                f"need 0 <= lambda_lower <= lambda_upper <= 1, got "
                f"({self.lambda_lower}, {self.lambda_upper})"
            )

    @property
    def is_zero(self) -> bool:
        return self.lambda_lower == 0.0 and self.lambda_upper == 0.0


class Regime(enum.Enum):
    WORST_CASE = "worst"
    TEST_MONOTONE = "monotone"
    HOSP_MONOTONE = "hosp-monotone"
    HOSP_INDEPENDENT = "hosp-independent"

    @property
    def needs_hospital(self) -> bool:
        return self in (Regime.HOSP_MONOTONE, Regime.HOSP_INDEPENDENT)


@dataclass(frozen=True)
class AssumptionRegime:
    regime: Regime
    error_band: ErrorBand | None = None

    @property
    def label(self) -> str:
        if self.error_band is None or self.error_band.is_zero:
            return self.regime.value
        b = self.error_band
        return f"{self.regime.value}[{b.lambda_lower:g},{b.lambda_upper:g}]"


@dataclass(frozen=True)
class BoundsResult:
    regime: AssumptionRegime
    lower: float
    upper: float
    se_lower: float = 0.0
    se_upper: float = 0.0
    ci_lower: float = field(default=math.nan)
    ci_upper: float = field(default=math.nan)

    def __post_init__(self):
        if not 0.0 <= self.lower <= self.upper <= 1.0:
            raise InvariantViolation(f"bounds out of order: [{self.lower}, {self.upper}]")
        if self.se_lower < 0 or self.se_upper < 0:
            raise InvariantViolation("negative standard error")
        if math.isnan(self.ci_lower):
            object.__setattr__(self, "ci_lower", self.lower)
        if math.isnan(self.ci_upper):
            object.__setattr__(self, "ci_upper", self.upper)
        if self.ci_lower > self.lower or self.ci_upper < self.upper:
            raise InvariantViolation("confidence interval does not nest the bounds")


@dataclass(frozen=True)
class AgeWeights:
    weights: Mapping[str, float]

    def __post_init__(self):
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("age weights must be nonnegative")
        if abs(math.fsum(self.weights.values()) - 1.0) > 1e-12:
            raise ValueError("age weights must sum to 1")
        unknown = set(self.weights) - set(AGE_GROUPS)
        if unknown:
            raise ValueError(f"unknown age groups {sorted(unknown)}")

    @classmethod
    def from_totals(cls, totals: Mapping[str, int]) -> "AgeWeights":
        total = sum(totals.values())
        if total <= 0:
            raise ValueError("age totals sum to zero")
        return cls({a: totals[a] / total for a in totals})

    def __getitem__(self, age_group: str) -> float:
        return self.weights[age_group]
