"""Reading person, test and admission files into a linked columnar store."""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import io
import logging
import os
from array import array
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

import numpy as np

from . import kernels
from .domain import (
    AGE_GROUPS,
    AdmissionRecord,
    DiagnosisEntry,
    DuplicateAdmission,
    PersonRecord,
    RowError,
    SchemaError,
    Sex,
    TestRecord,
    TestResult,
)

log = logging.getLogger(__name__)

TEST_COLUMNS = ("person_id", "specimen_date", "result")
ADMISSION_COLUMNS = ("person_id", "admit_time", "discharge_time", "dx_codes")
PERSON_COLUMNS = ("person_id", "age_group", "sex", "county")

RESULT_CODES = {"positive": 2, "negative": 1, "inconclusive": 0}
POSITIVE, NEGATIVE, INCONCLUSIVE = 2, 1, 0

_EPOCH = dt.datetime(1970, 1, 1)


def _open(source) -> IO[str]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8")
    return source


def _rows(source, columns) -> Iterator[tuple[int, list[str]]]:
    """Yield ``(line_number, fields)`` after checking the header for ``columns``."""
    fh = _open(source)
    try:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError("empty file: missing header") from None
        missing = [c for c in columns if c not in header]
        if missing:
            raise SchemaError(f"missing column(s): {', '.join(missing)}")
        if header[: len(columns)] == list(columns):
            positions = None
        else:
            positions = [header.index(c) for c in columns]
        width = len(header)
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise RowError(f"expected {width} fields, got {len(row)}", line)
            yield line, (row if positions is None else [row[i] for i in positions])
    finally:
        if fh is not source:
            fh.close()


class PersonIndex:
    """Interns opaque person identifiers to dense integer codes."""

    def __init__(self):
        self.codes: dict[str, int] = {}
        self.ids: list[str] = []

    def code(self, person_id: str) -> int:
        c = self.codes.get(person_id)
        if c is None:
            c = self.codes[person_id] = len(self.ids)
            self.ids.append(person_id)
        return c

    def __len__(self):
        return len(self.ids)


@dataclass
class TestColumns:
    """Raw test rows as parallel arrays; ``day`` is a proleptic ordinal."""

    __test__ = False
    person: np.ndarray
    day: np.ndarray
    result: np.ndarray

    def __len__(self):
        return len(self.person)


def _parse_date(text: str) -> dt.date:
    return dt.date.fromisoformat(text.strip())


def _parse_time(text: str) -> dt.datetime:
    t = dt.datetime.fromisoformat(text.strip())
    return t.replace(tzinfo=None) if t.tzinfo is None else t.astimezone(dt.timezone.utc).replace(tzinfo=None)


def parse_tests(stream) -> list[TestRecord]:
    """Parse a tests file into records; bad dates or results raise :class:`RowError`."""
    out = []
    for line, (pid, date_s, result_s) in _rows(stream, TEST_COLUMNS):
        try:
            day = _parse_date(date_s)
        except ValueError:
            raise RowError(f"bad specimen_date {date_s!r}", line) from None
        try:
            res = TestResult.parse(result_s)
        except ValueError:
            raise RowError(f"bad result {result_s!r}", line) from None
        out.append(TestRecord(pid.strip(), day, res))
    return out


def read_tests(source, index: PersonIndex) -> TestColumns:
    """Stream a tests file straight into columns, interning person ids into ``index``."""
    persons = array("q")
    days = array("q")
    results = array("b")
    code = index.code
    codes = RESULT_CODES
    ordinal_cache: dict[str, int] = {}
    for line, (pid, date_s, result_s) in _rows(source, TEST_COLUMNS):
        d = ordinal_cache.get(date_s)
        if d is None:
            try:
                d = _parse_date(date_s).toordinal()
            except ValueError:
                raise RowError(f"bad specimen_date {date_s!r}", line) from None
            ordinal_cache[date_s] = d
        r = codes.get(result_s)
        if r is None:
            r = codes.get(result_s.strip().lower())
            if r is None:
                raise RowError(f"bad result {result_s!r}", line)
        persons.append(code(pid))
        days.append(d)
        results.append(r)
    return TestColumns(
        np.frombuffer(persons, dtype=np.int64).copy(),
        np.frombuffer(days, dtype=np.int64).copy(),
        np.frombuffer(results, dtype=np.int8).copy(),
    )


def tests_to_columns(tests: Iterable[TestRecord], index: PersonIndex) -> TestColumns:
    rows = [(index.code(t.person_id), t.specimen_date.toordinal(), t.result.value) for t in tests]
    if not rows:
        empty = np.zeros(0, dtype=np.int64)
        return TestColumns(empty, empty.copy(), np.zeros(0, dtype=np.int8))
    p, d, r = zip(*rows)
    return TestColumns(np.array(p, np.int64), np.array(d, np.int64), np.array(r, np.int8))


class _DxParser:
    """Parses ``CODE[:A][:P];...`` lists, caching entries by (token, position)."""

    def __init__(self):
        self._cache: dict[tuple[str, int], DiagnosisEntry] = {}

    def __call__(self, text: str) -> tuple[DiagnosisEntry, ...]:
        text = text.strip()
        if not text:
            return ()
        out = []
        cache = self._cache
        for pos, token in enumerate(text.split(";")):
            key = (token, pos)
            e = cache.get(key)
            if e is None:
                parts = token.strip().split(":")
                flags = {f.strip().upper() for f in parts[1:]}
                if flags - {"A", "P"}:
                    raise ValueError(f"bad diagnosis flags in {token!r}")
                e = DiagnosisEntry(parts[0].strip().upper(), "A" in flags, "P" in flags, pos)
                cache[key] = e
            out.append(e)
        return tuple(out)


def parse_admissions(stream) -> list[AdmissionRecord]:
    """Parse an admissions file; ``dx_codes`` order is priority order."""
    dx = _DxParser()
    out = []
    for line, (pid, admit_s, disch_s, dx_s) in _rows(stream, ADMISSION_COLUMNS):
        try:
            admit = _parse_time(admit_s)
            disch = _parse_time(disch_s) if disch_s.strip() else None
        except ValueError:
            raise RowError(f"bad admit/discharge time {admit_s!r}/{disch_s!r}", line) from None
        try:
            out.append(AdmissionRecord(pid.strip(), admit, disch, dx(dx_s)))
        except ValueError as exc:
            raise RowError(str(exc), line) from None
    return out


def parse_persons(stream) -> list[PersonRecord]:
    out = []
    for line, (pid, age_s, sex_s, county_s) in _rows(stream, PERSON_COLUMNS):
        age = age_s.strip() or None
        if age is not None and age not in AGE_GROUPS:
            raise RowError(f"bad age_group {age_s!r}", line)
        sex = None
        if sex_s.strip():
            try:
                sex = Sex(sex_s.strip().upper()[:1])
            except ValueError:
                raise RowError(f"bad sex {sex_s!r}", line) from None
        out.append(PersonRecord(pid.strip(), age, county_s.strip() or None, sex))
    return out


def _tie_draw(seed: int, person_id: str, admit_time: dt.datetime) -> int:
    key = f"{seed}\x1f{person_id}\x1f{admit_time.isoformat()}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big")


def _canonical(rec: AdmissionRecord):
    return (
        tuple((e.code, e.is_admitting, e.is_primary_final) for e in rec.diagnoses),
        rec.discharge_time.isoformat() if rec.discharge_time else "",
    )


def dedup_admissions(raw: list[AdmissionRecord], seed: int) -> list[AdmissionRecord]:
    """One record per (person, admit time): the one with the most diagnosis codes.

    Ties on the code count are broken by a draw keyed on (seed, person, time)
    over the tied records in canonical order, so the survivor does not depend
    on input row order. Output is sorted by (person_id, admit_time).
    """
    groups: dict[tuple[str, dt.datetime], list[AdmissionRecord]] = {}
    for rec in raw:
        groups.setdefault((rec.person_id, rec.admit_time), []).append(rec)
    out = []
    n_ties = 0
    for key in sorted(groups):
        recs = groups[key]
        if len(recs) == 1:
            out.append(recs[0])
            continue
        best = max(len(r.diagnoses) for r in recs)
        tied = [r for r in recs if len(r.diagnoses) == best]
        if len(tied) > 1:
            n_ties += 1
            tied.sort(key=_canonical)
            out.append(tied[_tie_draw(seed, *key) % len(tied)])
        else:
            out.append(tied[0])
    if n_ties:
        log.info("dedup: %d admission keys had tied diagnosis counts", n_ties)
    return out


@dataclass(frozen=True)
class LinkedStore:
    """Immutable linked view of persons, tests and admissions.

    Tests are collapsed to one row per (person, day) keeping the most positive
    result (positive > negative > inconclusive) and sorted by (person, day).
    Admissions are sorted by (person, admit time).
    """

    person_ids: tuple[str, ...]
    person_codes: dict[str, int]
    age_group: np.ndarray  # index into AGE_GROUPS, -1 unknown
    county: np.ndarray  # index into counties, -1 unknown
    counties: tuple[str, ...]
    in_persons: np.ndarray
    t_person: np.ndarray
    t_day: np.ndarray
    t_result: np.ndarray
    admissions: tuple[AdmissionRecord, ...]
    a_person: np.ndarray
    a_day: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_persons(self) -> int:
        return int(self.in_persons.sum())

    @property
    def n_tests(self) -> int:
        return len(self.t_person)

    @property
    def n_admissions(self) -> int:
        return len(self.admissions)

    def tests_for(self, person_id: str) -> list[TestRecord]:
        c = self.person_codes.get(person_id)
        if c is None:
            return []
        lo, hi = np.searchsorted(self.t_person, [c, c + 1])
        return [
            TestRecord(person_id, dt.date.fromordinal(int(d)), TestResult(int(r)))
            for d, r in zip(self.t_day[lo:hi], self.t_result[lo:hi])
        ]


def build_store(
    persons: Iterable[PersonRecord],
    tests: Iterable[TestRecord] | TestColumns,
    admissions: Iterable[AdmissionRecord],
    index: PersonIndex | None = None,
) -> LinkedStore:
    """Link the three inputs on person id.

    Admissions must already be deduplicated: a repeated (person, admit time)
    raises :class:`DuplicateAdmission`. Tests and admissions for ids missing
    from ``persons`` are kept and counted in ``diagnostics``.
    """
    index = index or PersonIndex()
    persons = list(persons)
    for p in persons:
        index.code(p.person_id)
    if not isinstance(tests, TestColumns):
        tests = tests_to_columns(tests, index)
    adm = list(admissions)
    a_codes = [index.code(a.person_id) for a in adm]

    n = len(index)
    age = np.full(n, -1, dtype=np.int8)
    county = np.full(n, -1, dtype=np.int32)
    in_persons = np.zeros(n, dtype=bool)
    county_codes: dict[str, int] = {}
    for p in persons:
        c = index.codes[p.person_id]
        in_persons[c] = True
        if p.age_group is not None:
            age[c] = AGE_GROUPS.index(p.age_group)
        if p.county is not None:
            county[c] = county_codes.setdefault(p.county, len(county_codes))

    tp, td, tr = kernels.collapse_max(tests.person, tests.day, tests.result)

    order = sorted(range(len(adm)), key=lambda i: (a_codes[i], adm[i].admit_time))
    adm_sorted = tuple(adm[i] for i in order)
    a_person = np.array([a_codes[i] for i in order], dtype=np.int64)
    for i in range(1, len(adm_sorted)):
        if a_person[i] == a_person[i - 1] and adm_sorted[i].admit_time == adm_sorted[i - 1].admit_time:
            raise DuplicateAdmission(
                f"duplicate admission for {adm_sorted[i].person_id} at "
                f"{adm_sorted[i].admit_time.isoformat()}; deduplicate first"
            )
    a_day = np.array([a.admit_time.date().toordinal() for a in adm_sorted], dtype=np.int64)

    diagnostics = {
        "persons": int(in_persons.sum()),
        "test_rows": int(len(tests)),
        "test_person_days": int(len(tp)),
        "admissions": len(adm_sorted),
        "tests_unlinked_persons": int(len(np.unique(tp[~in_persons[tp]]))) if len(tp) else 0,
        "admissions_unlinked_persons": int(len(np.unique(a_person[~in_persons[a_person]])))
        if len(a_person)
        else 0,
    }
    if diagnostics["tests_unlinked_persons"] or diagnostics["admissions_unlinked_persons"]:
        log.info(
            "%d tested and %d admitted persons have no demographic record",
            diagnostics["tests_unlinked_persons"],
            diagnostics["admissions_unlinked_persons"],
        )
    return LinkedStore(
        person_ids=tuple(index.ids),
        person_codes=dict(index.codes),
        age_group=age,
        county=county,
        counties=tuple(county_codes),
        in_persons=in_persons,
        t_person=tp,
        t_day=td,
        t_result=tr,
        admissions=adm_sorted,
        a_person=a_person,
        a_day=a_day,
        diagnostics=diagnostics,
    )


def load_store(persons_path, tests_path, admissions_path, seed: int = 0) -> LinkedStore:
    """Read the three files, deduplicate admissions and link them."""
    for p in (persons_path, tests_path, admissions_path):
        if not os.path.exists(p):
            raise FileNotFoundError(p)
    index = PersonIndex()
    persons = parse_persons(persons_path)
    for p in persons:
        index.code(p.person_id)
    tests = read_tests(tests_path, index)
    raw = parse_admissions(admissions_path)
    adm = dedup_admissions(raw, seed)
    store = build_store(persons, tests, adm, index)
    store.diagnostics["admission_rows"] = len(raw)
    return store


def text_stream(text: str) -> io.StringIO:
    """Wrap literal CSV text as a stream (handy in tests and notebooks)."""
    return io.StringIO(text)
