"""Admission cohorts, in-hospital test outcomes, weekly cells and validation proxies."""

from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import kernels
from .config import CLEAR_CAUSES, CodeSetConfig, RunConfig, normalize_code
from .domain import (
    AGE_GROUPS,
    AdmissionRecord,
    CellCounts,
    EmptyDiagnoses,
    MissingCountyTotals,
    MissingPopulationTotals,
    validate_cell,
)
from .ingest import INCONCLUSIVE, POSITIVE, LinkedStore


class CohortKind(enum.Enum):
    POPULATION = "population"
    ICLI = "icli"
    NON_ICLI = "non-icli"
    CLEAR_CAUSE = "clear-cause"


@dataclass(frozen=True)
class CohortLabel:
    """A cohort; ``ClearCause`` with ``cause=None`` is the pooled clear-cause sample."""

    kind: CohortKind
    cause: str | None = None

    def __str__(self):
        return self.kind.value if self.cause is None else f"{self.kind.value}:{self.cause}"

    @classmethod
    def parse(cls, text: str) -> "CohortLabel":
        kind, _, cause = text.partition(":")
        return cls(CohortKind(kind), cause or None)


def label_rank(label: CohortLabel):
    """Sort key giving a stable cohort order in outputs."""
    kinds = list(CohortKind)
    cause = -1 if label.cause is None else CLEAR_CAUSES.index(label.cause)
    return kinds.index(label.kind), cause


POPULATION = CohortLabel(CohortKind.POPULATION)
ICLI = CohortLabel(CohortKind.ICLI)
NON_ICLI = CohortLabel(CohortKind.NON_ICLI)
CLEAR_CAUSE = CohortLabel(CohortKind.CLEAR_CAUSE)


def clear_cause(cause: str) -> CohortLabel:
    if cause not in CLEAR_CAUSES:
        raise ValueError(f"unknown clear cause {cause!r}")
    return CohortLabel(CohortKind.CLEAR_CAUSE, cause)


HOSPITAL_COHORTS = (ICLI, NON_ICLI, CLEAR_CAUSE) + tuple(clear_cause(c) for c in CLEAR_CAUSES)


class TestOutcome(enum.Enum):
    __test__ = False
    NOT_TESTED = "not-tested"
    TESTED_NEGATIVE = "tested-negative"
    TESTED_POSITIVE = "tested-positive"


@dataclass(frozen=True)
class WeeklyCell:
    week_id: dt.date
    cohort: CohortLabel
    age_group: str | None  # None: all ages
    counts: CellCounts

    @property
    def is_empty(self) -> bool:
        return self.counts.n_pop == 0


# bit 0: ICLI; bit 1 + k: clear cause k
_ICLI_BIT = 1
_CAUSE_BITS = {c: 1 << (k + 1) for k, c in enumerate(CLEAR_CAUSES)}


def _matches(code: str, prefixes: frozenset[str]) -> bool:
    for k in range(1, len(code) + 1):
        if code[:k] in prefixes:
            return True
    return False


class Classifier:
    """Caches per-code flags so bulk classification touches each distinct code once."""

    def __init__(self, codes: CodeSetConfig):
        self.codes = codes
        self._cache: dict[str, tuple[bool, int, bool, bool]] = {}

    def _flags(self, raw: str):
        f = self._cache.get(raw)
        if f is None:
            code = normalize_code(raw)
            cfg = self.codes
            causes = 0
            for cause, prefixes in cfg.clear_cause_map.items():
                if cause != "cancer" and _matches(code, prefixes):
                    causes |= _CAUSE_BITS[cause]
            f = (
                _matches(code, cfg.icli_codes),
                causes,
                _matches(code, cfg.clear_cause_map["cancer"]),
                _matches(code, cfg.chemo_codes),
            )
            self._cache[raw] = f
        return f

    def mask(self, diagnoses) -> int:
        """Bit mask of cohort memberships; raises EmptyDiagnoses for no codes."""
        if not diagnoses:
            raise EmptyDiagnoses("admission has no diagnosis codes")
        out = 0
        cancer = False
        chemo = False
        restrict = self.codes.cancer_restrict
        for e in diagnoses:
            icli, causes, is_cancer, is_chemo = self._flags(e.code)
            if icli:
                out |= _ICLI_BIT
            out |= causes
            if is_cancer and (not restrict or e.is_admitting or e.is_primary_final):
                cancer = True
            chemo = chemo or is_chemo
        if cancer or (restrict and chemo):
            out |= _CAUSE_BITS["cancer"]
        return out


def labels_from_mask(mask: int) -> frozenset[CohortLabel]:
    out = {ICLI if mask & _ICLI_BIT else NON_ICLI}
    for cause, bit in _CAUSE_BITS.items():
        if mask & bit:
            out.add(clear_cause(cause))
    return frozenset(out)


def classify_admission(adm: AdmissionRecord, cfg: CodeSetConfig) -> frozenset[CohortLabel]:
    """Cohort labels for one admission.

    ICLI if any code matches the ICLI set, otherwise NonICLI. Clear causes are
    flagged at any priority, except cancer, which must be the admitting or
    primary final diagnosis unless a chemotherapy code is present.
    """
    return labels_from_mask(Classifier(cfg).mask(adm.diagnoses))


def _cohort_member(masks: np.ndarray, label: CohortLabel) -> np.ndarray:
    diagnosed = masks >= 0
    if label == ICLI:
        return diagnosed & ((masks & _ICLI_BIT) != 0)
    if label == NON_ICLI:
        return diagnosed & ((masks & _ICLI_BIT) == 0)
    if label == CLEAR_CAUSE:
        return diagnosed & ((masks & ~_ICLI_BIT) != 0)
    if label.kind is CohortKind.CLEAR_CAUSE:
        return diagnosed & ((masks & _CAUSE_BITS[label.cause]) != 0)
    raise ValueError(f"{label} is not a hospital cohort")


# --- tests ------------------------------------------------------------------


def _counted_tests(store: LinkedStore, cfg: RunConfig):
    """Tests that count as 'tested' under the inconclusive policy."""
    if cfg.inconclusive_as_tested:
        return store.t_person, store.t_day, store.t_result
    keep = store.t_result != INCONCLUSIVE
    return store.t_person[keep], store.t_day[keep], store.t_result[keep]


def in_hospital_outcomes(store: LinkedStore, cfg: RunConfig, idx=None):
    """Vectorized in-hospital outcome for admissions ``idx`` (default: all).

    Returns ``(tested, positive)`` boolean arrays.
    """
    a_person, a_day = store.a_person, store.a_day
    if idx is not None:
        a_person, a_day = a_person[idx], a_day[idx]
    tp, td, tr = _counted_tests(store, cfg)
    return kernels.window_flags(
        tp, td, tr == POSITIVE, a_person, a_day - cfg.window_before, a_day + cfg.window_after
    )


def in_hospital_test_outcome(
    adm: AdmissionRecord, store: LinkedStore, cfg: RunConfig | None = None
) -> TestOutcome:
    """Outcome of the tests dated within [admit - 5, admit + 1] days for this person."""
    before, after = (5, 1) if cfg is None else (cfg.window_before, cfg.window_after)
    drop_inconclusive = cfg is not None and not cfg.inconclusive_as_tested
    t0 = adm.admit_date
    tested = positive = False
    for t in store.tests_for(adm.person_id):
        if drop_inconclusive and t.result.value == INCONCLUSIVE:
            continue
        if -before <= (t.specimen_date - t0).days <= after:
            tested = True
            positive = positive or t.result.value == POSITIVE
    if positive:
        return TestOutcome.TESTED_POSITIVE
    return TestOutcome.TESTED_NEGATIVE if tested else TestOutcome.NOT_TESTED


# --- weeks ------------------------------------------------------------------


def week_index(days: np.ndarray, cfg: RunConfig) -> np.ndarray:
    return np.floor_divide(np.asarray(days, dtype=np.int64) - cfg.week_anchor.toordinal(), 7)


def week_start(index: int, cfg: RunConfig) -> dt.date:
    return cfg.week_anchor + dt.timedelta(days=7 * int(index))


def _week_range(cfg: RunConfig) -> tuple[int, int]:
    lo = max(0, int(week_index(np.array([cfg.study_start.toordinal()]), cfg)[0]))
    hi = int(week_index(np.array([cfg.study_end.toordinal()]), cfg)[0])
    return lo, hi


def study_weeks(cfg: RunConfig) -> list[dt.date]:
    """Starts of every week overlapping the study window, from the anchor on."""
    lo, hi = _week_range(cfg)
    return [week_start(k, cfg) for k in range(lo, hi + 1)]


def _in_study(days, cfg):
    return (days >= cfg.study_start.toordinal()) & (days <= cfg.study_end.toordinal())


def _age_totals(cfg: RunConfig, need_ages: bool) -> tuple[int, dict[str, int]]:
    total = cfg.total_population
    if total is None:
        raise MissingPopulationTotals("population.total or population.age_totals required")
    if need_ages and set(cfg.age_totals) != set(AGE_GROUPS):
        raise MissingPopulationTotals("population.age_totals must list all six age groups")
    return total, dict(cfg.age_totals)


def population_cells(store: LinkedStore, cfg: RunConfig, by_age: bool = True):
    """Weekly population cells for every week with tests, keyed by (week, age_group).

    A person counts once as tested in a week with any counted test, and once as
    positive with any positive test that week. ``age_group`` None is all ages.
    """
    total, ages = _age_totals(cfg, by_age)
    tp, td, tr = _counted_tests(store, cfg)
    keep = _in_study(td, cfg)
    tp, td, tr = tp[keep], td[keep], tr[keep]
    wk = week_index(td, cfg)
    pp, ww, vv = kernels.collapse_max(tp, wk, (tr == POSITIVE).astype(np.int8))
    out: dict[tuple[dt.date, str | None], CellCounts] = {}
    base, hi = _week_range(cfg)
    nw = hi - base + 1
    if nw <= 0:
        return out
    valid = (ww >= base) & (ww <= hi)
    pp, ww, vv = pp[valid], ww[valid] - base, vv[valid]
    tested = np.bincount(ww, minlength=nw)
    positive = np.bincount(ww, weights=vv, minlength=nw).astype(np.int64)
    for k in range(nw):
        out[(week_start(base + k, cfg), None)] = validate_cell(
            CellCounts(total, int(tested[k]), int(positive[k]))
        )
    if by_age:
        age = store.age_group[pp]
        known = age >= 0
        flat = ww[known] * len(AGE_GROUPS) + age[known]
        t_age = np.bincount(flat, minlength=nw * len(AGE_GROUPS))
        p_age = np.bincount(flat, weights=vv[known], minlength=nw * len(AGE_GROUPS)).astype(np.int64)
        for k in range(nw):
            for a, g in enumerate(AGE_GROUPS):
                j = k * len(AGE_GROUPS) + a
                out[(week_start(base + k, cfg), g)] = validate_cell(
                    CellCounts(ages[g], int(t_age[j]), int(p_age[j]))
                )
    return out


def weekly_population_cells(store: LinkedStore, cfg: RunConfig, week: dt.date) -> list[WeeklyCell]:
    """Population cells for one week: one per age group, then the all-ages cell."""
    _, ages = _age_totals(cfg, True)
    cells = population_cells(store, cfg, by_age=True)
    out = []
    for g in AGE_GROUPS + (None,):
        counts = cells.get((week, g))
        if counts is None:
            counts = CellCounts(ages[g] if g else cfg.total_population, 0, 0)
        out.append(WeeklyCell(week, POPULATION, g, counts))
    return out


@dataclass(frozen=True)
class AdmissionTable:
    """Per-admission arrays used by the hospital aggregations."""

    index: np.ndarray  # positions into store.admissions
    mask: np.ndarray  # cohort bit mask; -1 for admissions without diagnoses
    week: np.ndarray
    age: np.ndarray
    tested: np.ndarray
    positive: np.ndarray


def admission_table(store: LinkedStore, cfg: RunConfig) -> AdmissionTable:
    keep = np.flatnonzero(_in_study(store.a_day, cfg))
    clf = Classifier(cfg.codes)
    masks = np.full(len(keep), -1, dtype=np.int64)
    adms = store.admissions
    for j, i in enumerate(keep):
        dx = adms[i].diagnoses
        if dx:
            masks[j] = clf.mask(dx)
    tested, positive = in_hospital_outcomes(store, cfg, keep)
    return AdmissionTable(
        index=keep,
        mask=masks,
        week=week_index(store.a_day[keep], cfg),
        age=store.age_group[store.a_person[keep]],
        tested=tested,
        positive=positive,
    )


def hospital_cells(
    store: LinkedStore,
    cfg: RunConfig,
    cohorts: Iterable[CohortLabel] = HOSPITAL_COHORTS,
    by_age: bool = True,
    table: AdmissionTable | None = None,
):
    """Admission-level cells keyed by (week, cohort, age_group).

    The unit is the admission: ``n_pop`` admissions in the cohort that week,
    ``n_tested``/``n_positive`` from the in-hospital test window.
    """
    tab = table or admission_table(store, cfg)
    out: dict[tuple[dt.date, CohortLabel, str | None], CellCounts] = {}
    base, hi = _week_range(cfg)
    nw = hi - base + 1
    if nw <= 0:
        return out
    ok = (tab.week >= base) & (tab.week <= hi)
    groups = [(None, ok)]
    if by_age:
        groups += [(g, ok & (tab.age == a)) for a, g in enumerate(AGE_GROUPS)]
    for cohort in cohorts:
        member = _cohort_member(tab.mask, cohort)
        for g, sel in groups:
            m = member & sel
            w = tab.week[m] - base
            n = np.bincount(w, minlength=nw)
            t = np.bincount(w, weights=tab.tested[m], minlength=nw).astype(np.int64)
            p = np.bincount(w, weights=tab.positive[m], minlength=nw).astype(np.int64)
            for k in range(nw):
                out[(week_start(base + k, cfg), cohort, g)] = validate_cell(
                    CellCounts(int(n[k]), int(t[k]), int(p[k]))
                )
    return out


def weekly_hospital_cells(
    store: LinkedStore, cfg: RunConfig, week: dt.date, cohort: CohortLabel
) -> list[WeeklyCell]:
    """Hospital cells for one week and cohort: one per age group, then all ages."""
    cells = hospital_cells(store, cfg, [cohort])
    zero = CellCounts(0, 0, 0)
    return [
        WeeklyCell(week, cohort, g, cells.get((week, cohort, g), zero))
        for g in AGE_GROUPS + (None,)
    ]


# --- validation proxies -----------------------------------------------------


def _first_admissions(store: LinkedStore, cfg: RunConfig, tab: AdmissionTable) -> np.ndarray:
    """Boolean mask over ``tab`` rows: the person's first admission after the cutoff."""
    cutoff = cfg.first_admission_after.toordinal()
    # admissions are sorted by (person, time); tab.index preserves that order
    days = store.a_day[tab.index]
    persons = store.a_person[tab.index]
    eligible = days >= cutoff
    first = np.zeros(len(tab.index), dtype=bool)
    seen: set[int] = set()
    for j in np.flatnonzero(eligible):
        p = int(persons[j])
        if p not in seen:
            seen.add(p)
            first[j] = True
    return first


def _prior_flags(store, cfg, persons, days):
    tp, td, _ = _counted_tests(store, cfg)
    tested, _ = kernels.window_flags(
        tp, td, np.zeros(len(tp), dtype=np.int8), persons, days - cfg.prior_start, days - cfg.prior_end
    )
    return tested


def prior_test_rate(
    store: LinkedStore, cfg: RunConfig, cohort: CohortLabel, t: dt.date, table=None
) -> float:
    """Share of the cohort's first admissions on date ``t`` with a test in [t-15, t-9].

    For the population cohort: share of the population tested in that window.
    Returns 0.0 when no admissions qualify.
    """
    day = t.toordinal()
    if cohort == POPULATION:
        total = cfg.total_population
        if total is None:
            raise MissingPopulationTotals("population total required for the population cohort")
        tp, td, _ = _counted_tests(store, cfg)
        sel = (td >= day - cfg.prior_start) & (td <= day - cfg.prior_end)
        return len(np.unique(tp[sel])) / total
    tab = table or admission_table(store, cfg)
    rows = _first_admissions(store, cfg, tab) & _cohort_member(tab.mask, cohort)
    rows &= store.a_day[tab.index] == day
    if not rows.any():
        return 0.0
    idx = tab.index[rows]
    return float(_prior_flags(store, cfg, store.a_person[idx], store.a_day[idx]).mean())


def prior_test_series(store: LinkedStore, cfg: RunConfig, cohort: CohortLabel, table=None):
    """Weekly prior-test rates for ``cohort``: {week: (rate, n)}.

    Hospital cohorts average over first admissions in the week; the population
    series averages the daily population rate over the days of the week.
    """
    out = {}
    if cohort == POPULATION:
        total = cfg.total_population
        if total is None:
            raise MissingPopulationTotals("population total required for the population cohort")
        tp, td, _ = _counted_tests(store, cfg)
        for week in study_weeks(cfg):
            rates = []
            for off in range(7):
                day = week.toordinal() + off
                sel = (td >= day - cfg.prior_start) & (td <= day - cfg.prior_end)
                rates.append(len(np.unique(tp[sel])) / total)
            out[week] = (float(np.mean(rates)), total)
        return out
    tab = table or admission_table(store, cfg)
    rows = _first_admissions(store, cfg, tab) & _cohort_member(tab.mask, cohort)
    idx = tab.index[rows]
    flags = _prior_flags(store, cfg, store.a_person[idx], store.a_day[idx])
    weeks = tab.week[rows]
    for k in np.unique(weeks):
        sel = weeks == k
        if k < 0:
            continue
        out[week_start(int(k), cfg)] = (float(flags[sel].mean()), int(sel.sum()))
    return out


def _ever_tested_by_county(store: LinkedStore, cfg: RunConfig) -> np.ndarray:
    tp, td, _ = _counted_tests(store, cfg)
    persons = np.unique(tp[td <= cfg.study_end.toordinal()])
    c = store.county[persons]
    return np.bincount(c[c >= 0], minlength=len(store.counties))


def community_test_rate(store: LinkedStore, cfg: RunConfig, county: str) -> float:
    """Distinct persons in ``county`` ever tested by the study end, over its population."""
    if county not in cfg.county_totals:
        raise MissingCountyTotals(f"no population total for county {county!r}")
    pop = cfg.county_totals[county]
    if pop <= 0:
        raise MissingCountyTotals(f"county {county!r} has zero population")
    if county not in store.counties:
        return 0.0
    counts = _ever_tested_by_county(store, cfg)
    return min(1.0, counts[store.counties.index(county)] / pop)


def community_rate_table(store: LinkedStore, cfg: RunConfig, cohorts=(ICLI, NON_ICLI, CLEAR_CAUSE)):
    """Average county test rate: unweighted over counties, per person, and per cohort admission."""
    if not cfg.county_totals:
        raise MissingCountyTotals("population.county_totals required")
    counts = _ever_tested_by_county(store, cfg)
    rate = {}
    for name, pop in cfg.county_totals.items():
        n = counts[store.counties.index(name)] if name in store.counties else 0
        rate[name] = min(1.0, n / pop) if pop > 0 else 0.0
    pops = np.array([cfg.county_totals[c] for c in rate], dtype=float)
    vals = np.array([rate[c] for c in rate])
    rows = {
        "counties": (float(vals.mean()), len(vals)),
        "population": (float((pops * vals).sum() / pops.sum()), int(pops.sum())),
    }
    tab = admission_table(store, cfg)
    county_of = store.county[store.a_person[tab.index]]
    per_code = np.array([rate.get(c, np.nan) for c in store.counties] + [np.nan])
    adm_rate = per_code[np.where(county_of >= 0, county_of, len(store.counties))]
    for cohort in cohorts:
        sel = _cohort_member(tab.mask, cohort) & ~np.isnan(adm_rate)
        rows[str(cohort)] = (float(adm_rate[sel].mean()) if sel.any() else float("nan"), int(sel.sum()))
    return rows
