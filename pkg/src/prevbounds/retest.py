"""Test-retest events and the false-negative / NPV estimator built on them.

The estimator assumes no false positives, infection status constant across
the two days, and retesting unrelated to true status. Under those
assumptions, with prevalence ``pi`` among the retested and sensitivity ``s``::

    P(+,+) = pi s^2
    P(+,-) = P(-,+) = pi s (1 - s)
    P(-,-) = pi (1 - s)^2 + (1 - pi)

which is solved by the method of moments below.
"""

from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import kernels
from .domain import DegenerateSummary, NoDiscordantPairs
from .ingest import INCONCLUSIVE, POSITIVE, LinkedStore


@dataclass(frozen=True)
class RetestEvent:
    person_id: str
    date: dt.date
    r1: bool
    r2: bool


@dataclass(frozen=True)
class RetestSummary:
    """Joint distribution of (first, second) result among retest events; 1 = positive."""

    p11: float
    p10: float
    p01: float
    p00: float
    n_events: int

    def __post_init__(self):
        ps = (self.p11, self.p10, self.p01, self.p00)
        if min(ps) < 0 or abs(sum(ps) - 1.0) > 1e-12:
            raise ValueError(f"proportions must be nonnegative and sum to 1: {ps}")

    @classmethod
    def from_counts(cls, n11: int, n10: int, n01: int, n00: int) -> "RetestSummary":
        n = n11 + n10 + n01 + n00
        if n == 0:
            raise DegenerateSummary("no retest events")
        return cls(n11 / n, n10 / n, n01 / n, n00 / n, n)

    def counts(self) -> tuple[int, int, int, int]:
        n = self.n_events
        return tuple(int(round(p * n)) for p in (self.p11, self.p10, self.p01, self.p00))


def _event_arrays(store: LinkedStore, inconclusive_as_tested: bool = True):
    p, d, r = store.t_person, store.t_day, store.t_result
    if not inconclusive_as_tested:
        keep = r != INCONCLUSIVE
        p, d, r = p[keep], d[keep], r[keep]
    i = kernels.retest_starts(p, d)
    r1, r2 = r[i], r[i + 1]
    # events with an inconclusive result carry no binary outcome
    ok = (r1 != INCONCLUSIVE) & (r2 != INCONCLUSIVE)
    i, r1, r2 = i[ok], r1[ok], r2[ok]
    return p[i], d[i], r1 == POSITIVE, r2 == POSITIVE


def extract_retest_events(store: LinkedStore, inconclusive_as_tested: bool = True) -> list[RetestEvent]:
    """Persons tested on day t and t + 1 but not on t - 1, in (person, day) order."""
    p, d, r1, r2 = _event_arrays(store, inconclusive_as_tested)
    ids = store.person_ids
    return [
        RetestEvent(ids[a], dt.date.fromordinal(int(b)), bool(x), bool(y))
        for a, b, x, y in zip(p, d, r1, r2)
    ]


def summarize(events) -> RetestSummary:
    r1 = np.fromiter((e.r1 for e in events), dtype=bool)
    r2 = np.fromiter((e.r2 for e in events), dtype=bool)
    return _summary(r1, r2)


def _summary(r1, r2) -> RetestSummary:
    return RetestSummary.from_counts(
        int((r1 & r2).sum()), int((r1 & ~r2).sum()), int((~r1 & r2).sum()), int((~r1 & ~r2).sum())
    )


def retest_summary(store: LinkedStore, inconclusive_as_tested: bool = True) -> RetestSummary:
    _, _, r1, r2 = _event_arrays(store, inconclusive_as_tested)
    return _summary(r1, r2)


@dataclass(frozen=True)
class FnEstimate:
    fn_rate: float
    one_minus_npv: float
    prevalence_retested: float

    @property
    def npv(self) -> float:
        return 1.0 - self.one_minus_npv


def estimate_fn_bound(summary: RetestSummary) -> FnEstimate:
    """False-negative rate and 1 - NPV implied by a retest summary.

    The discordant cells are averaged (they share an expectation under the
    assumptions), which makes the estimate symmetric in ``p10`` and ``p01``.
    """
    p11 = summary.p11
    if p11 <= 0:
        raise DegenerateSummary("no concordant positive pairs; false-negative rate not identified")
    disc = (summary.p10 + summary.p01) / 2.0
    fn = disc / (p11 + disc)
    prevalence = (p11 + disc) ** 2 / p11
    first_negative = disc + summary.p00
    one_minus_npv = 0.0 if fn == 0.0 else prevalence * fn / first_negative
    return FnEstimate(fn, one_minus_npv, prevalence)


class Verdict(enum.Enum):
    RANDOM_RETESTING_CONSISTENT = "random-retesting-consistent"
    NON_RANDOM_RETESTING = "non-random-retesting"


@dataclass(frozen=True)
class SymmetryResult:
    statistic: float  # share of discordant pairs that are negative-then-positive
    p_value: float
    verdict: Verdict
    direction: str
    n_discordant: int


def symmetry_diagnostic(summary: RetestSummary, alpha: float = 0.05) -> SymmetryResult:
    """Exact two-sided binomial test that positive-then-negative and
    negative-then-positive pairs are equally common."""
    _, n10, n01, _ = summary.counts()
    n = n10 + n01
    if n == 0:
        raise NoDiscordantPairs("no discordant retest pairs")
    p_value = float(stats.binomtest(n01, n, 0.5, alternative="two-sided").pvalue)
    if n01 > n10:
        direction = "negative-then-positive more common"
    elif n10 > n01:
        direction = "positive-then-negative more common"
    else:
        direction = "balanced"
    verdict = Verdict.NON_RANDOM_RETESTING if p_value < alpha else Verdict.RANDOM_RETESTING_CONSISTENT
    return SymmetryResult(n01 / n, p_value, verdict, direction, n)
