"""Synthetic populations with known infection status, and a brute-force bound enumerator.

The generator draws weekly infection, testing and admissions for a population
under configurable departures from the testing and hospital assumptions, and
writes files in the ingest schemas plus a ground-truth file.

The enumerator recomputes identified sets for tiny populations from first
principles: it lists every 0/1 infection assignment to the units whose status
is unobserved, and takes the extremes of prevalence over probability mixtures
of those assignments subject to the regime's constraints. Because both
objective and constraints are linear in the mixture, this is a small linear
program solved exactly over the convex hull of the enumerated count vectors.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
import os
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
import yaml

from . import kernels
from .config import RunConfig, dump_config, load_config
from .domain import (
    AGE_GROUPS,
    AdmissionRecord,
    AssumptionRegime,
    EmptyIdentifiedSet,
    EmptyPopulation,
    InvalidScenario,
    MissingHospitalCell,
    NoTests,
    PersonRecord,
    Regime,
    Sex,
    TooLarge,
)
from .ingest import (
    POSITIVE,
    NEGATIVE,
    INCONCLUSIVE,
    PersonIndex,
    TestColumns,
    _DxParser,
    build_store,
    dedup_admissions,
)

# --- scenario ---------------------------------------------------------------

DEFAULT_AGE_SHARES = {"0-17": 0.23, "18-30": 0.17, "30-50": 0.25, "50-64": 0.19, "65-74": 0.09, "75+": 0.07}

_GENERIC_CODES = ("K80.20", "N39.0", "I50.9", "E11.9", "K57.30", "M17.11", "L03.115", "N17.9")
_CAUSE_CODES = {
    "labor_delivery": "O80",
    "ami": "I21.4",
    "stroke": "I63.9",
    "fractures": "S72.001A",
    "crushes": "S67.00XA",
    "open_wounds": "S61.219A",
    "appendicitis": "K35.80",
    "vehicle_accidents": "V43.52XA",
    "other_accidents": "W19.XXXA",
    "cancer": "C50.911:A",
}
_ICLI_CODES = ("U07.1", "J12.89", "J18.9", "R05", "R50.9")


@dataclass(frozen=True)
class RetestPolicy:
    rate: float = 0.0  # chance a tested person is retested the next day
    negative_positive_multiplier: float = 1.0  # retest multiplier for true positives testing negative


@dataclass(frozen=True)
class ScenarioConfig:
    population: int = 10_000
    prevalence: tuple[float, ...] = (0.02,)
    test_rate: float = 0.01  # weekly test probability for the uninfected
    rho: float = 5.0  # testing propensity, infected relative to uninfected
    hospital_rate: float = 0.01  # weekly non-ICLI admission probability
    hospital_corr: float = 0.0  # correlation between admission and infection
    hospital_test_rate: float = 0.06  # in-hospital test probability for the uninfected
    hospital_rho: float | None = None  # defaults to rho
    icli_rate: float = 0.002  # weekly ICLI admission probability among the infected
    icli_background: float = 0.0005  # weekly ICLI admission probability among the uninfected
    icli_test_rate: float = 0.7
    clear_cause_share: float = 0.5  # non-ICLI admissions that carry a clear-cause code
    fn_rate: float = 0.0
    inconclusive_rate: float = 0.0
    duplicate_rate: float = 0.0  # admissions emitted twice (half of them as count ties)
    retest: RetestPolicy = field(default_factory=RetestPolicy)
    persistence: float = 0.0  # chance infection status carries over to the next week
    n_counties: int = 10
    start: dt.date = dt.date(2020, 6, 12)
    seed: int = 0

    def __post_init__(self):
        rates = {
            "test_rate": self.test_rate,
            "hospital_rate": self.hospital_rate,
            "hospital_test_rate": self.hospital_test_rate,
            "icli_rate": self.icli_rate,
            "icli_background": self.icli_background,
            "icli_test_rate": self.icli_test_rate,
            "clear_cause_share": self.clear_cause_share,
            "fn_rate": self.fn_rate,
            "inconclusive_rate": self.inconclusive_rate,
            "duplicate_rate": self.duplicate_rate,
            "persistence": self.persistence,
            "retest.rate": self.retest.rate,
        }
        for name, v in rates.items():
            if not 0.0 <= v <= 1.0:
                raise InvalidScenario(f"{name}={v} outside [0, 1]")
        if any(not 0.0 <= p <= 1.0 for p in self.prevalence) or not self.prevalence:
            raise InvalidScenario("prevalence path must be nonempty with values in [0, 1]")
        if self.population <= 0 or self.n_counties <= 0:
            raise InvalidScenario("population and n_counties must be positive")
        if self.rho <= 0 or (self.hospital_rho is not None and self.hospital_rho <= 0):
            raise InvalidScenario("rho must be positive")
        if self.rho * self.test_rate > 1.0:
            raise InvalidScenario("rho * test_rate exceeds 1")
        if self.h_rho * self.hospital_test_rate > 1.0:
            raise InvalidScenario("hospital rho * hospital_test_rate exceeds 1")
        if self.retest.rate * max(1.0, self.retest.negative_positive_multiplier) > 1.0:
            raise InvalidScenario("retest rate times multiplier exceeds 1")
        for p in self.prevalence:
            lo, hi = self.admission_probs(p)
            if not (0.0 <= lo <= 1.0 and 0.0 <= hi <= 1.0):
                raise InvalidScenario(
                    f"hospital_corr={self.hospital_corr} infeasible at prevalence {p}"
                )

    @property
    def h_rho(self) -> float:
        return self.rho if self.hospital_rho is None else self.hospital_rho

    def admission_probs(self, prevalence: float) -> tuple[float, float]:
        """(P(admit | uninfected), P(admit | infected)) with the configured correlation
        and marginal admission rate ``hospital_rate``."""
        h, p, r = self.hospital_rate, prevalence, self.hospital_corr
        if p in (0.0, 1.0) or h in (0.0, 1.0):
            return h, h
        s = math.sqrt(h * (1 - h))
        return h - r * s * math.sqrt(p / (1 - p)), h + r * s * math.sqrt((1 - p) / p)

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioConfig":
        doc = dict(doc)
        try:
            if "retest" in doc:
                doc["retest"] = RetestPolicy(**(doc["retest"] or {}))
            if "prevalence" in doc:
                pv = doc["prevalence"]
                doc["prevalence"] = tuple(pv) if isinstance(pv, (list, tuple)) else (float(pv),)
            if "weeks" in doc:
                weeks = int(doc.pop("weeks"))
                if len(doc.get("prevalence", (0.02,))) == 1:
                    doc["prevalence"] = tuple(doc.get("prevalence", (0.02,))) * weeks
            if "start" in doc and not isinstance(doc["start"], dt.date):
                doc["start"] = dt.date.fromisoformat(str(doc["start"]))
            return cls(**doc)
        except TypeError as exc:
            raise InvalidScenario(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise InvalidScenario(f"cannot read scenario {path}: {exc}") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["prevalence"] = list(self.prevalence)
        d["start"] = self.start.isoformat()
        return d


# --- generation -------------------------------------------------------------


@dataclass
class GroundTruth:
    weeks: list[dt.date]
    infected: np.ndarray  # (n_weeks, population) bool
    cohort_prevalence: dict[tuple[dt.date, str], tuple[float, int]]

    @property
    def prevalence(self) -> np.ndarray:
        return self.infected.mean(axis=1)

    def rows(self):
        out = [(w, "population", float(p), self.infected.shape[1]) for w, p in zip(self.weeks, self.prevalence)]
        for (w, c), (p, n) in sorted(self.cohort_prevalence.items()):
            out.append((w, c, p, n))
        return out


@dataclass
class SyntheticData:
    scenario: ScenarioConfig
    person_ids: list[str]
    age: np.ndarray
    county: np.ndarray
    sex: np.ndarray
    tests: TestColumns  # person codes index person_ids
    adm_person: np.ndarray
    adm_time: np.ndarray  # seconds since 1970-01-01
    adm_discharge: np.ndarray
    adm_dx: list[str]
    adm_infected: np.ndarray
    truth: GroundTruth
    # test-level truth, aligned with ``tests`` rows
    test_infected: np.ndarray = None

    @property
    def county_names(self) -> list[str]:
        return [f"c{k:02d}" for k in range(self.scenario.n_counties)]

    def run_config(self, base: RunConfig | None = None) -> RunConfig:
        """A run config whose study window, anchor and denominators match this population."""
        base = base or load_config()
        end = self.scenario.start + dt.timedelta(days=7 * len(self.scenario.prevalence) - 1)
        ages = np.bincount(self.age, minlength=len(AGE_GROUPS))
        counties = np.bincount(self.county, minlength=self.scenario.n_counties)
        cfg = RunConfig(
            **{
                **base.__dict__,
                "study_start": self.scenario.start,
                "study_end": end,
                "week_anchor": self.scenario.start,
                "first_admission_after": self.scenario.start,
            }
        )
        return cfg.with_population(
            total=len(self.person_ids),
            age_totals={g: int(n) for g, n in zip(AGE_GROUPS, ages)},
            county_totals={name: int(n) for name, n in zip(self.county_names, counties)},
        )

    def subsample(self, fraction: float, seed: int = 0) -> "SyntheticData":
        """Keep a simple random sample of persons with all their tests and admissions.

        Ground truth stays that of the full population.
        """
        if not 0.0 < fraction <= 1.0:
            raise InvalidScenario("fraction must be in (0, 1]")
        rng = np.random.default_rng(np.random.SeedSequence([self.scenario.seed, seed, 1]))
        n = len(self.person_ids)
        keep = np.sort(rng.choice(n, size=max(1, int(round(fraction * n))), replace=False))
        remap = np.full(n, -1, dtype=np.int64)
        remap[keep] = np.arange(len(keep))
        t = remap[self.tests.person] >= 0
        a = remap[self.adm_person] >= 0
        return SyntheticData(
            self.scenario,
            [self.person_ids[k] for k in keep],
            self.age[keep],
            self.county[keep],
            self.sex[keep],
            TestColumns(remap[self.tests.person[t]], self.tests.day[t], self.tests.result[t]),
            remap[self.adm_person[a]],
            self.adm_time[a],
            self.adm_discharge[a],
            [dx for dx, k in zip(self.adm_dx, a) if k],
            self.adm_infected[a],
            self.truth,
            None if self.test_infected is None else self.test_infected[t],
        )

    def persons(self) -> list[PersonRecord]:
        sexes = ("F", "M")
        names = self.county_names
        return [
            PersonRecord(pid, AGE_GROUPS[a], names[c], Sex(sexes[s]))
            for pid, a, c, s in zip(self.person_ids, self.age, self.county, self.sex)
        ]

    def admissions(self) -> list[AdmissionRecord]:
        parse = _DxParser()
        ids = self.person_ids
        epoch = dt.datetime(1970, 1, 1)
        return [
            AdmissionRecord(
                ids[p],
                epoch + dt.timedelta(seconds=int(t)),
                epoch + dt.timedelta(seconds=int(d)),
                parse(dx),
            )
            for p, t, d, dx in zip(self.adm_person, self.adm_time, self.adm_discharge, self.adm_dx)
        ]

    def to_store(self, seed: int | None = None):
        """Deduplicate and link in memory, equivalent to writing and reading the files."""
        index = PersonIndex()
        for pid in self.person_ids:
            index.code(pid)
        seed = self.scenario.seed if seed is None else seed
        adm = dedup_admissions(self.admissions(), seed)
        return build_store(self.persons(), self.tests, adm, index)

    def write(self, out_dir) -> dict[str, str]:
        os.makedirs(out_dir, exist_ok=True)
        paths = {
            name: os.path.join(out_dir, f"{name}.csv")
            for name in ("persons", "tests", "admissions", "truth")
        }
        names = self.county_names
        with open(paths["persons"], "w", newline="", encoding="utf-8") as fh:
            fh.write("person_id,age_group,sex,county\n")
            sexes = ("F", "M")
            fh.writelines(
                f"{pid},{AGE_GROUPS[a]},{sexes[s]},{names[c]}\n"
                for pid, a, s, c in zip(self.person_ids, self.age, self.sex, self.county)
            )
        result_names = {POSITIVE: "positive", NEGATIVE: "negative", INCONCLUSIVE: "inconclusive"}
        day_names: dict[int, str] = {}
        with open(paths["tests"], "w", newline="", encoding="utf-8") as fh:
            fh.write("person_id,specimen_date,result\n")
            ids = self.person_ids
            buf = []
            for p, d, r in zip(self.tests.person.tolist(), self.tests.day.tolist(), self.tests.result.tolist()):
                ds = day_names.get(d)
                if ds is None:
                    ds = day_names[d] = dt.date.fromordinal(d).isoformat()
                buf.append(f"{ids[p]},{ds},{result_names[r]}\n")
                if len(buf) >= 100_000:
                    fh.writelines(buf)
                    buf.clear()
            fh.writelines(buf)
        with open(paths["admissions"], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("person_id", "admit_time", "discharge_time", "dx_codes"))
            epoch = dt.datetime(1970, 1, 1)
            ids = self.person_ids
            for p, t, d, dx in zip(self.adm_person.tolist(), self.adm_time.tolist(), self.adm_discharge.tolist(), self.adm_dx):
                w.writerow(
                    (
                        ids[p],
                        (epoch + dt.timedelta(seconds=t)).isoformat(),
                        (epoch + dt.timedelta(seconds=d)).isoformat(),
                        dx,
                    )
                )
        with open(paths["truth"], "w", newline="", encoding="utf-8") as fh:
            fh.write("week_id,cohort,true_prevalence\n")
            for week, cohort, p, _ in self.truth.rows():
                fh.write(f"{week.isoformat()},{cohort},{p!r}\n")
        cfg_path = os.path.join(out_dir, "config.yaml")
        with open(cfg_path, "w", encoding="utf-8") as fh:
            fh.write(dump_config(self.run_config()))
        paths["config"] = cfg_path
        return paths


def _weekly_status(rng, prev, scenario, previous):
    n = scenario.population
    fresh = rng.random(n) < prev
    if previous is None or scenario.persistence == 0.0:
        return fresh
    keep = rng.random(n) < scenario.persistence
    return np.where(keep, previous, fresh)


def generate(scenario: ScenarioConfig) -> SyntheticData:
    """Draw a synthetic population; identical scenarios give identical data."""
    rng = np.random.default_rng(np.random.SeedSequence(scenario.seed))
    n = scenario.population
    width = max(7, len(str(n - 1)))
    person_ids = [f"p{k:0{width}d}" for k in range(n)]
    shares = np.array([DEFAULT_AGE_SHARES[g] for g in AGE_GROUPS])
    age = rng.choice(len(AGE_GROUPS), size=n, p=shares / shares.sum()).astype(np.int8)
    county = rng.integers(0, scenario.n_counties, size=n).astype(np.int32)
    sex = rng.integers(0, 2, size=n).astype(np.int8)

    t_person, t_day, t_result, t_inf = [], [], [], []
    a_person, a_time, a_disch, a_dx, a_inf, a_kind = [], [], [], [], [], []
    infected = np.zeros((len(scenario.prevalence), n), dtype=bool)
    start = scenario.start.toordinal()
    epoch_day = dt.date(1970, 1, 1).toordinal()
    status = None
    h_rho = scenario.h_rho

    def results(c, k):
        # positive iff infected and not a false negative; a share turn inconclusive
        pos = c & (rng.random(k) >= scenario.fn_rate)
        res = np.where(pos, POSITIVE, NEGATIVE).astype(np.int8)
        if scenario.inconclusive_rate:
            res[rng.random(k) < scenario.inconclusive_rate] = INCONCLUSIVE
        return res

    def add_tests(persons, days, c):
        res = results(c, len(persons))
        t_person.append(persons)
        t_day.append(days)
        t_result.append(res)
        t_inf.append(c)
        return res

    for w, prev in enumerate(scenario.prevalence):
        status = _weekly_status(rng, prev, scenario, status)
        infected[w] = status
        week0 = start + 7 * w

        # community testing
        p_test = np.where(status, scenario.rho * scenario.test_rate, scenario.test_rate)
        who = np.flatnonzero(rng.random(n) < p_test)
        days = week0 + rng.integers(0, 7, size=len(who))
        res = add_tests(who, days, status[who])
        if scenario.retest.rate:
            p_re = np.full(len(who), scenario.retest.rate)
            boost = status[who] & (res == NEGATIVE)
            p_re[boost] *= scenario.retest.negative_positive_multiplier
            again = (rng.random(len(who)) < p_re) & (days + 1 < week0 + 7)
            add_tests(who[again], days[again] + 1, status[who[again]])

        # non-ICLI admissions
        lo, hi = scenario.admission_probs(prev)
        adm = np.flatnonzero(rng.random(n) < np.where(status, hi, lo))
        # ICLI admissions
        icli = np.flatnonzero(
            rng.random(n) < np.where(status, scenario.icli_rate, scenario.icli_background)
        )
        for persons, kind in ((adm, 0), (icli, 1)):
            k = len(persons)
            if k == 0:
                continue
            aday = week0 + rng.integers(0, 7, size=k)
            secs = (aday - epoch_day) * 86400 + rng.integers(0, 86400, size=k)
            disch = secs + rng.integers(1, 10 * 86400, size=k)
            c = status[persons]
            if kind == 0:
                cause = rng.random(k) < scenario.clear_cause_share
                cause_pick = rng.integers(0, len(_CAUSE_CODES), size=k)
                generic = rng.integers(0, len(_GENERIC_CODES), size=(k, 2))
                causes = list(_CAUSE_CODES.values())
                dx = [
                    ";".join(
                        ([causes[cp]] if cz else [])
                        + [_GENERIC_CODES[g0], _GENERIC_CODES[g1]]
                    )
                    for cz, cp, (g0, g1) in zip(cause, cause_pick, generic)
                ]
                p_hosp_test = np.where(c, h_rho * scenario.hospital_test_rate, scenario.hospital_test_rate)
            else:
                pick = rng.integers(0, len(_ICLI_CODES), size=k)
                generic = rng.integers(0, len(_GENERIC_CODES), size=k)
                dx = [f"{_ICLI_CODES[a]};{_GENERIC_CODES[b]}" for a, b in zip(pick, generic)]
                p_hosp_test = np.full(k, scenario.icli_test_rate)
            a_person.append(persons)
            a_time.append(secs)
            a_disch.append(disch)
            a_dx.extend(dx)
            a_inf.append(c)
            a_kind.append(np.full(k, kind, dtype=np.int8))

            tested = rng.random(k) < p_hosp_test
            # test date inside the admission window, kept within the week so the
            # result reflects this week's status
            lo_d = np.maximum(aday - 5, week0)
            hi_d = np.minimum(aday + 1, week0 + 6)
            tdays = lo_d + (rng.random(k) * (hi_d - lo_d + 1)).astype(np.int64)
            add_tests(persons[tested], tdays[tested], c[tested])

    tests = TestColumns(
        np.concatenate(t_person).astype(np.int64) if t_person else np.zeros(0, np.int64),
        np.concatenate(t_day).astype(np.int64) if t_day else np.zeros(0, np.int64),
        np.concatenate(t_result).astype(np.int8) if t_result else np.zeros(0, np.int8),
    )
    test_inf = np.concatenate(t_inf) if t_inf else np.zeros(0, bool)
    order = np.lexsort((tests.result, tests.day, tests.person))
    tests = TestColumns(tests.person[order], tests.day[order], tests.result[order])
    test_inf = test_inf[order]

    cat = lambda xs, dtype: np.concatenate(xs).astype(dtype) if xs else np.zeros(0, dtype)
    ap, at, ad = cat(a_person, np.int64), cat(a_time, np.int64), cat(a_disch, np.int64)
    ainf, akind = cat(a_inf, bool), cat(a_kind, np.int8)

    if scenario.duplicate_rate and len(ap):
        dup = np.flatnonzero(rng.random(len(ap)) < scenario.duplicate_rate)
        tie = rng.random(len(dup)) < 0.5
        extra_dx = []
        for j, t in zip(dup, tie):
            codes = a_dx[j].split(";")
            if t:
                # same number of codes, last one swapped: a count tie
                alt = [g for g in _GENERIC_CODES if g not in codes][0]
                extra_dx.append(";".join(codes[:-1] + [alt]))
            else:
                extra_dx.append(";".join(codes[:-1]) if len(codes) > 1 else codes[0])
        ap = np.concatenate([ap, ap[dup]])
        at = np.concatenate([at, at[dup]])
        ad = np.concatenate([ad, ad[dup] + 3600])
        ainf = np.concatenate([ainf, ainf[dup]])
        akind = np.concatenate([akind, akind[dup]])
        a_dx = a_dx + extra_dx

    order = np.lexsort((np.arange(len(ap)), at, ap))
    ap, at, ad, ainf, akind = ap[order], at[order], ad[order], ainf[order], akind[order]
    a_dx = [a_dx[i] for i in order]

    weeks = [scenario.start + dt.timedelta(days=7 * w) for w in range(len(scenario.prevalence))]
    truth = GroundTruth(weeks, infected, _cohort_truth(scenario, weeks, ap, at, ainf, akind, a_dx))
    return SyntheticData(
        scenario, person_ids, age, county, sex, tests, ap, at, ad, a_dx, ainf, truth, test_inf
    )


def _cohort_truth(scenario, weeks, ap, at, ainf, akind, a_dx):
    """True prevalence among admissions of each generated cohort, per week.

    Duplicated rows are counted once (first occurrence of each key).
    """
    out = {}
    if not len(ap):
        return out
    first = np.ones(len(ap), dtype=bool)
    first[1:] = (ap[1:] != ap[:-1]) | (at[1:] != at[:-1])
    day = at // 86400 + dt.date(1970, 1, 1).toordinal()
    wk = (day - scenario.start.toordinal()) // 7
    has_cause = np.array([dx.split(";")[0] in _CAUSE_CODES.values() for dx in a_dx])
    masks = {
        "icli": akind == 1,
        "non-icli": akind == 0,
        "clear-cause": (akind == 0) & has_cause,
    }
    for name, m in masks.items():
        for w, week in enumerate(weeks):
            sel = m & first & (wk == w)
            if sel.any():
                out[(week, name)] = (float(ainf[sel].mean()), int(sel.sum()))
    return out


def retest_sample(
    n_events_target: int,
    prevalence: float,
    fn_rate: float,
    retest_rate: float = 0.5,
    negative_positive_multiplier: float = 1.0,
    seed: int = 0,
    start: dt.date = dt.date(2020, 6, 12),
):
    """Single-week test and retest records for the retest estimator.

    Persons are tested once on day 0..5 and retested the next day with
    ``retest_rate`` (times the multiplier for true positives whose first test
    was negative). Returns ``(store, true_fn, true_one_minus_npv)``, the last
    two computed from the realized events.
    """
    if retest_rate * max(1.0, negative_positive_multiplier) > 1:
        raise InvalidScenario("retest probability exceeds 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    expected_rate = retest_rate * (1 + prevalence * fn_rate * (negative_positive_multiplier - 1))
    n = int(math.ceil(n_events_target / expected_rate))
    c = rng.random(n) < prevalence
    day0 = start.toordinal() + rng.integers(0, 6, size=n)
    r1 = c & (rng.random(n) >= fn_rate)
    p_re = np.full(n, retest_rate)
    p_re[c & ~r1] *= negative_positive_multiplier
    again = rng.random(n) < p_re
    r2 = c & (rng.random(n) >= fn_rate)
    idx = np.flatnonzero(again)
    person = np.concatenate([np.arange(n), idx])
    day = np.concatenate([day0, day0[idx] + 1])
    res = np.concatenate([np.where(r1, POSITIVE, NEGATIVE), np.where(r2[idx], POSITIVE, NEGATIVE)])
    ids = [f"r{k:08d}" for k in range(n)]
    index = PersonIndex()
    for pid in ids:
        index.code(pid)
    store = build_store([], TestColumns(person, day, res.astype(np.int8)), [], index)
    ev_c, ev_r1 = c[idx], r1[idx]
    true_fn = float((~ev_r1 & ev_c).sum() / max(ev_c.sum(), 1))
    neg = ~ev_r1
    true_omn = float((ev_c & neg).sum() / max(neg.sum(), 1))
    return store, true_fn, true_omn


# --- brute-force enumeration -------------------------------------------------

MAX_UNITS = 12


@dataclass(frozen=True)
class Unit:
    """One person (or admission) with observed testing pattern."""

    tested: bool
    positive: bool = False
    hospital: bool = False

    def __post_init__(self):
        if self.positive and not self.tested:
            raise ValueError("untested unit cannot be positive")


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _hull(points):
    """Convex hull (counter-clockwise, no collinear points) of 2-D integer points."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def _clip(poly, a, b, c):
    """Keep the part of convex ``poly`` with ``a*x + b*y <= c`` (exact)."""
    if not poly:
        return []
    val = lambda p: a * p[0] + b * p[1] - c
    if len(poly) == 1:
        return poly if val(poly[0]) <= 0 else []
    out = []
    m = len(poly)
    for i in range(m):
        p, q = poly[i], poly[(i + 1) % m]
        vp, vq = val(p), val(q)
        if vp <= 0:
            out.append(p)
        if (vp < 0 < vq) or (vq < 0 < vp):
            t = Fraction(vp) / (vp - vq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    # drop repeats that arise from degenerate (segment/point) polygons
    uniq = []
    for p in out:
        if p not in uniq:
            uniq.append(p)
    return uniq


def _frac(x: float) -> Fraction:
    return Fraction(repr(float(x)))


def _group_interval(units: Sequence[Unit], monotone: bool, band, impl=None):
    """Exact [min, max] prevalence for one group of units, or None if infeasible."""
    n = len(units)
    if n == 0:
        raise EmptyPopulation("group has no units")
    n_t = sum(u.tested for u in units)
    pos = sum(u.positive for u in units)
    n_neg = n_t - pos
    n_u = n - n_t
    if monotone and n_t == 0:
        raise NoTests("no tested units; positivity undefined")
    unknown_neg = n_neg if band is not None else 0
    counts = kernels.assignment_counts([n_u, unknown_neg], impl=impl)
    points = {(int(x), int(y)) for x, y in np.unique(counts, axis=0)}
    poly = [(Fraction(x), Fraction(y)) for x, y in _hull(points)]
    if band is not None:
        # lambda_l * negatives <= infected negatives <= lambda_u * negatives
        poly = _clip(poly, 0, -1, -_frac(band.lambda_lower) * n_neg)
        poly = _clip(poly, 0, 1, _frac(band.lambda_upper) * n_neg)
    if monotone:
        # mean among untested <= mean among tested:
        # n_t * x_u <= n_u * (pos + x_neg)
        poly = _clip(poly, n_t, -n_u, n_u * pos)
    if not poly:
        return None
    prev = [(pos + x + y) / Fraction(n) for x, y in poly]
    return min(prev), max(prev)


def enumerate_bounds(units: Sequence[Unit], regime: AssumptionRegime, impl=None):
    """Exact (min, max) population prevalence compatible with ``units`` under ``regime``.

    Units flagged ``hospital`` form the hospital cohort; the rest form the
    population. Raises :class:`EmptyIdentifiedSet` when no assignment mixture
    satisfies the constraints.
    """
    units = list(units)
    if len(units) > MAX_UNITS:
        raise TooLarge(f"{len(units)} units; enumeration is limited to {MAX_UNITS}")
    band = regime.error_band
    kind = regime.regime
    pop = [u for u in units if not u.hospital]
    hosp = [u for u in units if u.hospital]
    if kind.needs_hospital and not hosp:
        raise MissingHospitalCell("hospital regimes need hospital units")

    ip = _group_interval(pop, kind is not Regime.WORST_CASE, band, impl)
    if not kind.needs_hospital:
        if ip is None:
            raise EmptyIdentifiedSet(math.nan, math.nan)
        return ip
    ih = _group_interval(hosp, True, band, impl)
    if ip is None or ih is None:
        raise EmptyIdentifiedSet(math.nan, math.nan)

    # joint (population, hospital) prevalence: a rectangle, then the link
    rect = [(ip[0], ih[0]), (ip[1], ih[0]), (ip[1], ih[1]), (ip[0], ih[1])]
    rect = _clip(rect, 1, -1, 0)  # population <= hospital
    if kind is Regime.HOSP_INDEPENDENT:
        rect = _clip(rect, -1, 1, 0)  # and hospital <= population
    if not rect:
        raise EmptyIdentifiedSet(float(ip[0]), float(min(ip[1], ih[1])))
    xs = [p for p, _ in rect]
    return min(xs), max(xs)


def units_to_cells(units: Sequence[Unit]):
    """Cell counts (population, hospital) for a list of units."""
    from .domain import CellCounts

    def cell(group):
        return CellCounts(len(group), sum(u.tested for u in group), sum(u.positive for u in group))

    pop = [u for u in units if not u.hospital]
    hosp = [u for u in units if u.hospital]
    return cell(pop), (cell(hosp) if hosp else None)


def random_units(rng: np.random.Generator, hospital: bool, max_units: int = MAX_UNITS) -> list[Unit]:
    """A random small instance; with ``hospital`` both groups are nonempty."""
    n = int(rng.integers(2 if hospital else 1, max_units + 1))
    n_h = int(rng.integers(1, n)) if hospital else 0
    out = []
    for k in range(n):
        tested = bool(rng.random() < 0.6)
        out.append(Unit(tested, tested and bool(rng.random() < 0.4), k < n_h))
    return out
