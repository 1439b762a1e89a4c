"""Run configuration: code sets, study window, week anchor and denominators."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Mapping

import yaml

from .domain import AGE_GROUPS, ConfigError

CLEAR_CAUSES = (
    "labor_delivery",
    "ami",
    "stroke",
    "fractures",
    "crushes",
    "open_wounds",
    "appendicitis",
    "vehicle_accidents",
    "other_accidents",
    "cancer",
)


def normalize_code(code: str) -> str:
    return code.replace(".", "").strip().upper()


def expand_codes(entries) -> frozenset[str]:
    """Normalize code prefixes, expanding ``A01-A09`` style category ranges."""
    out = set()
    for raw in entries:
        raw = str(raw).strip()
        if "-" in raw:
            lo, hi = (normalize_code(x) for x in raw.split("-", 1))
            if len(lo) != 3 or len(hi) != 3 or lo[0] != hi[0]:
                raise ConfigError(f"range {raw!r} must join two categories with the same letter")
            a, b = int(lo[1:]), int(hi[1:])
            if a > b:
                raise ConfigError(f"empty range {raw!r}")
            out.update(f"{lo[0]}{k:02d}" for k in range(a, b + 1))
        elif raw:
            out.add(normalize_code(raw))
    return frozenset(out)


@dataclass(frozen=True)
class CodeSetConfig:
    icli_codes: frozenset[str]
    clear_cause_map: Mapping[str, frozenset[str]]
    cancer_restrict: bool = True
    chemo_codes: frozenset[str] = frozenset()

    def __post_init__(self):
        if set(self.clear_cause_map) != set(CLEAR_CAUSES):
            raise ConfigError(
                f"clear_cause labels must be exactly {sorted(CLEAR_CAUSES)}, "
                f"got {sorted(self.clear_cause_map)}"
            )


@dataclass(frozen=True)
class RunConfig:
    codes: CodeSetConfig
    study_start: dt.date
    study_end: dt.date
    week_anchor: dt.date
    inconclusive_as_tested: bool = True
    window_before: int = 5
    window_after: int = 1
    prior_start: int = 15
    prior_end: int = 9
    first_admission_after: dt.date = dt.date(2020, 3, 1)
    population_total: int | None = None
    age_totals: Mapping[str, int] = field(default_factory=dict)
    county_totals: Mapping[str, int] = field(default_factory=dict)

    def with_population(self, total=None, age_totals=None, county_totals=None) -> "RunConfig":
        return replace(
            self,
            population_total=self.population_total if total is None else total,
            age_totals=self.age_totals if age_totals is None else dict(age_totals),
            county_totals=self.county_totals if county_totals is None else dict(county_totals),
        )

    @property
    def total_population(self) -> int | None:
        if self.population_total is not None:
            return self.population_total
        if self.age_totals:
            return sum(self.age_totals.values())
        return None


def first_friday(day: dt.date) -> dt.date:
    return day + dt.timedelta(days=(4 - day.weekday()) % 7)


def _date(value, name) -> dt.date:
    if isinstance(value, dt.date):
        return value
    try:
        return dt.date.fromisoformat(str(value))
    except ValueError:
        raise ConfigError(f"{name}: not an ISO date: {value!r}") from None


def _totals(raw, name, allowed=None) -> dict[str, int]:
    raw = raw or {}
    if not isinstance(raw, Mapping):
        raise ConfigError(f"{name} must be a mapping")
    out = {}
    for k, v in raw.items():
        k = str(k)
        if allowed is not None and k not in allowed:
            raise ConfigError(f"{name}: unknown key {k!r}")
        if not isinstance(v, int) or v < 0:
            raise ConfigError(f"{name}.{k} must be a nonnegative integer")
        out[k] = v
    return out


def parse_config(doc: Mapping) -> RunConfig:
    try:
        study = doc.get("study", {}) or {}
        start = _date(study.get("start", "2020-03-01"), "study.start")
        end = _date(study.get("end", "2020-12-18"), "study.end")
        if end < start:
            raise ConfigError("study.end precedes study.start")
        anchor = doc.get("week_anchor")
        anchor = first_friday(start) if anchor is None else _date(anchor, "week_anchor")

        causes = doc.get("clear_cause") or {}
        cancer = doc.get("cancer_rule") or {}
        codes = CodeSetConfig(
            icli_codes=expand_codes((doc.get("icli") or {}).get("codes", [])),
            clear_cause_map={str(k): expand_codes(v or []) for k, v in causes.items()},
            cancer_restrict=bool(cancer.get("restrict", True)),
            chemo_codes=expand_codes(cancer.get("chemotherapy_codes", [])),
        )
        if not codes.icli_codes:
            raise ConfigError("icli.codes is empty")

        tests = doc.get("tests") or {}
        window = doc.get("hospital_window") or {}
        prior = doc.get("prior_testing") or {}
        pop = doc.get("population") or {}
        total = pop.get("total")
        if total is not None and (not isinstance(total, int) or total <= 0):
            raise ConfigError("population.total must be a positive integer")
        return RunConfig(
            codes=codes,
            study_start=start,
            study_end=end,
            week_anchor=anchor,
            inconclusive_as_tested=bool(tests.get("inconclusive_as_tested", True)),
            window_before=int(window.get("before", 5)),
            window_after=int(window.get("after", 1)),
            prior_start=int(prior.get("window_start", 15)),
            prior_end=int(prior.get("window_end", 9)),
            first_admission_after=_date(
                prior.get("first_admission_after", "2020-03-01"), "prior_testing.first_admission_after"
            ),
            population_total=total,
            age_totals=_totals(pop.get("age_totals"), "population.age_totals", AGE_GROUPS),
            county_totals=_totals(pop.get("county_totals"), "population.county_totals"),
        )
    except (TypeError, AttributeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed config: {exc}") from None


def load_config(path=None) -> RunConfig:
    """Load a YAML config; ``None`` loads the packaged defaults."""
    try:
        if path is None:
            text = resources.files("prevbounds").joinpath("data/default_codes.yaml").read_text()
        else:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        doc = yaml.safe_load(text) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    if not isinstance(doc, Mapping):
        raise ConfigError("config must be a mapping at top level")
    return parse_config(doc)


def dump_config(cfg: RunConfig) -> str:
    """Serialize ``cfg`` back to YAML (ranges are written expanded)."""
    doc = {
        "study": {"start": cfg.study_start.isoformat(), "end": cfg.study_end.isoformat()},
        "week_anchor": cfg.week_anchor.isoformat(),
        "tests": {"inconclusive_as_tested": cfg.inconclusive_as_tested},
        "hospital_window": {"before": cfg.window_before, "after": cfg.window_after},
        "prior_testing": {
            "window_start": cfg.prior_start,
            "window_end": cfg.prior_end,
            "first_admission_after": cfg.first_admission_after.isoformat(),
        },
        "icli": {"codes": sorted(cfg.codes.icli_codes)},
        "clear_cause": {k: sorted(cfg.codes.clear_cause_map[k]) for k in CLEAR_CAUSES},
        "cancer_rule": {
            "restrict": cfg.codes.cancer_restrict,
            "chemotherapy_codes": sorted(cfg.codes.chemo_codes),
        },
        "population": {
            "total": cfg.population_total,
            "age_totals": dict(cfg.age_totals),
            "county_totals": dict(sorted(cfg.county_totals.items())),
        },
    }
    return yaml.safe_dump(doc, sort_keys=False)
