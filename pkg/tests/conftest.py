import datetime as dt

import pytest

from prevbounds.config import load_config
from prevbounds.domain import AGE_GROUPS
from prevbounds.ingest import (
    build_store,
    dedup_admissions,
    parse_admissions,
    parse_persons,
    parse_tests,
    text_stream,
)


def make_store(persons="", tests="", admissions="", seed=0):
    """Build a LinkedStore from CSV bodies (headers are added here)."""
    p = parse_persons(text_stream("person_id,age_group,sex,county\n" + persons))
    t = parse_tests(text_stream("person_id,specimen_date,result\n" + tests))
    a = parse_admissions(text_stream("person_id,admit_time,discharge_time,dx_codes\n" + admissions))
    return build_store(p, t, dedup_admissions(a, seed))


@pytest.fixture
def cfg():
    base = load_config()
    return base.with_population(
        total=600,
        age_totals={g: 100 for g in AGE_GROUPS},
        county_totals={"north": 1000, "south": 1000},
    )


@pytest.fixture
def june_cfg(cfg):
    from dataclasses import replace

    return replace(
        cfg,
        study_start=dt.date(2020, 6, 5),
        study_end=dt.date(2020, 6, 25),
        week_anchor=dt.date(2020, 6, 5),
    )


_CRITERIA: list[str] = []


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for an acceptance criterion, then assert it."""

    def record(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        print(line)
        _CRITERIA.append(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
