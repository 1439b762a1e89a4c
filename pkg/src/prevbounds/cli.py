"""Command-line entry point: ``prevbounds {bounds,npv,simulate,validate}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import yaml

from . import cohort as co
from .config import load_config
from .domain import (
    AGE_GROUPS,
    AgeWeights,
    AssumptionRegime,
    ConfigError,
    DataError,
    ErrorBand,
    InvariantViolation,
    PrevBoundsError,
    Regime,
)
from .inference import SHARE_WEIGHTED_SE, WEIGHTED_MEAN_SE, StratifiedBounds, age_standardize, bounds_with_inference
from .ingest import PersonIndex, build_store, load_store, read_tests
from .retest import estimate_fn_bound, retest_summary, symmetry_diagnostic

log = logging.getLogger("prevbounds")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INVARIANT = 0, 2, 3, 4

BOUNDS_COLUMNS = (
    "week_id",
    "cohort",
    "regime",
    "lower",
    "upper",
    "se_lower",
    "se_upper",
    "ci_lower",
    "ci_upper",
    "n_pop",
    "n_tested",
    "n_positive",
)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _require(path, what):
    if not os.path.exists(path):
        raise ConfigError(f"{what} file not found: {path}")


def parse_regimes(text: str) -> list[Regime]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            r = Regime(part)
        except ValueError:
            raise ConfigError(
                f"unknown regime {part!r}; choose from {', '.join(r.value for r in Regime)}"
            ) from None
        if r not in out:
            out.append(r)
    if not out:
        raise ConfigError("regime list is empty")
    return out


def parse_cohorts(text: str) -> list[co.CohortLabel]:
    try:
        labels = [co.CohortLabel.parse(p.strip()) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if any(c == co.POPULATION for c in labels):
        raise ConfigError("the population is always reported; list hospital cohorts only")
    return labels


def _band(args) -> ErrorBand | None:
    if args.lambda_l is None and args.lambda_u is None:
        return None
    try:
        return ErrorBand(args.lambda_l or 0.0, args.lambda_u or 0.0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# --- bounds -----------------------------------------------------------------


def _result_row(week, cohort, regime, res, cell):
    return (
        week.isoformat(),
        str(cohort),
        regime.regime.value,
        res.lower,
        res.upper,
        res.se_lower,
        res.se_upper,
        res.ci_lower,
        res.ci_upper,
        cell.n_pop,
        cell.n_tested,
        cell.n_positive,
    )


def _rows_for(week, cohort, regimes, pop_cells, hosp_cells, weights, se_formula, skipped):
    """Output rows for one (week, cohort); ``pop_cells``/``hosp_cells`` map age group
    (None for all ages) to cells. Unidentified cells are skipped and recorded."""
    is_pop = cohort == co.POPULATION
    own = pop_cells if is_pop else hosp_cells
    rows = []
    for regime in regimes:
        if regime.regime.needs_hospital and is_pop:
            continue
        try:
            if weights is None:
                if regime.regime.needs_hospital:
                    res = bounds_with_inference(pop_cells[None], hosp_cells[None], regime)
                else:
                    res = bounds_with_inference(own[None], None, regime)
            else:
                strata = {}
                for g in AGE_GROUPS:
                    try:
                        if regime.regime.needs_hospital:
                            strata[g] = bounds_with_inference(pop_cells[g], hosp_cells[g], regime)
                        else:
                            strata[g] = bounds_with_inference(own[g], None, regime)
                    except DataError:
                        strata[g] = None
                res = age_standardize(StratifiedBounds(strata, weights), se_formula)
        except DataError as exc:
            skipped.append(
                {
                    "week_id": week.isoformat(),
                    "cohort": str(cohort),
                    "regime": regime.regime.value,
                    "reason": f"{type(exc).__name__}: {exc}",
                }
            )
            continue
        rows.append(_result_row(week, cohort, regime, res, own[None]))
    return rows


def cmd_bounds(args) -> int:
    for path, what in ((args.persons, "persons"), (args.tests, "tests"), (args.admissions, "admissions")):
        _require(path, what)
    cfg = load_config(args.codes)
    regimes_kind = parse_regimes(args.regimes)
    band = _band(args)
    regimes = [AssumptionRegime(r, band) for r in regimes_kind]
    cohorts = parse_cohorts(args.cohorts)
    store = load_store(args.persons, args.tests, args.admissions, seed=args.seed)

    by_age = args.age_weights
    weights = None
    if by_age:
        if set(cfg.age_totals) != set(AGE_GROUPS):
            raise ConfigError("--age-weights needs population.age_totals for all six age groups")
        weights = AgeWeights.from_totals(cfg.age_totals)
    pop = co.population_cells(store, cfg, by_age=by_age)
    hosp = co.hospital_cells(store, cfg, cohorts, by_age=by_age)

    ages = AGE_GROUPS + (None,) if by_age else (None,)
    rows, skipped = [], []
    for week in co.study_weeks(cfg):
        pop_cells = {g: pop[(week, g)] for g in ages}
        if pop_cells[None].n_tested > 0 or not args.skip_untested_weeks:
            rows += _rows_for(week, co.POPULATION, regimes, pop_cells, None, weights, args.se_formula, skipped)
        for c in cohorts:
            hosp_cells = {g: hosp[(week, c, g)] for g in ages}
            if hosp_cells[None].n_pop == 0:
                continue
            rows += _rows_for(week, c, regimes, pop_cells, hosp_cells, weights, args.se_formula, skipped)

    os.makedirs(args.out, exist_ok=True)
    _write_csv(os.path.join(args.out, "bounds.csv"), BOUNDS_COLUMNS, rows)
    if args.json:
        _write_json(
            os.path.join(args.out, "bounds.json"),
            {"columns": list(BOUNDS_COLUMNS), "rows": [dict(zip(BOUNDS_COLUMNS, r)) for r in rows]},
        )
    diag = {
        "ingest": {k: v for k, v in sorted(store.diagnostics.items())},
        "rows": len(rows),
        "skipped": skipped,
        "age_standardized": by_age,
        "error_band": None if band is None else [band.lambda_lower, band.lambda_upper],
        "seed": args.seed,
    }
    _write_json(os.path.join(args.out, "diagnostics.json"), diag)
    if skipped:
        log.warning("%d (week, cohort, regime) rows not identified; see diagnostics.json", len(skipped))
    print(f"wrote {len(rows)} rows to {os.path.join(args.out, 'bounds.csv')}")
    return EXIT_OK


# --- npv --------------------------------------------------------------------


def cmd_npv(args) -> int:
    _require(args.tests, "tests")
    index = PersonIndex()
    cols = read_tests(args.tests, index)
    store = build_store([], cols, [], index)
    summary = retest_summary(store, inconclusive_as_tested=not args.exclude_inconclusive)
    doc = {
        "retest_summary": {
            "n_events": summary.n_events,
            "p11": summary.p11,
            "p10": summary.p10,
            "p01": summary.p01,
            "p00": summary.p00,
        }
    }
    try:
        est = estimate_fn_bound(summary)
        doc["estimate"] = {
            "fn_rate": est.fn_rate,
            "one_minus_npv": est.one_minus_npv,
            "npv": est.npv,
            "prevalence_retested": est.prevalence_retested,
        }
    except DataError as exc:
        doc["estimate"] = {"error": f"{type(exc).__name__}: {exc}"}
    try:
        sym = symmetry_diagnostic(summary, alpha=args.alpha)
        doc["symmetry"] = {
            "share_negative_then_positive": sym.statistic,
            "p_value": sym.p_value,
            "verdict": sym.verdict.value,
            "direction": sym.direction,
            "n_discordant": sym.n_discordant,
            "alpha": args.alpha,
        }
    except DataError as exc:
        doc["symmetry"] = {"error": f"{type(exc).__name__}: {exc}"}
    os.makedirs(args.out, exist_ok=True)
    text = yaml.safe_dump(doc, sort_keys=False)
    with open(os.path.join(args.out, "npv.yaml"), "w", encoding="utf-8") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


# --- simulate ---------------------------------------------------------------


def cmd_simulate(args) -> int:
    from .simulate import ScenarioConfig, generate

    _require(args.scenario, "scenario")
    scenario = ScenarioConfig.load(args.scenario)
    if args.seed is not None:
        scenario = ScenarioConfig.from_dict({**scenario.to_dict(), "seed": args.seed})
    data = generate(scenario)
    paths = data.write(args.out)
    for name in sorted(paths):
        print(f"{name}: {paths[name]}")
    return EXIT_OK


# --- validate ---------------------------------------------------------------


def cmd_validate(args) -> int:
    for path, what in ((args.persons, "persons"), (args.tests, "tests"), (args.admissions, "admissions")):
        _require(path, what)
    cfg = load_config(args.codes)
    cohorts = [co.POPULATION] + parse_cohorts(args.cohorts)
    store = load_store(args.persons, args.tests, args.admissions, seed=args.seed)
    table = co.admission_table(store, cfg)
    rows = []
    for c in cohorts:
        series = co.prior_test_series(store, cfg, c, table=table)
        for week in sorted(series):
            rate, n = series[week]
            rows.append((week.isoformat(), str(c), rate, n))
    os.makedirs(args.out, exist_ok=True)
    _write_csv(os.path.join(args.out, "prior_test_rates.csv"), ("week_id", "cohort", "rate", "n"), rows)

    community = co.community_rate_table(store, cfg, [c for c in cohorts if c != co.POPULATION])
    _write_csv(
        os.path.join(args.out, "community_rates.csv"),
        ("group", "mean_county_test_rate", "n"),
        [(k, v[0], v[1]) for k, v in community.items()],
    )
    print(f"wrote {len(rows)} prior-test rows and {len(community)} community rows to {args.out}")
    return EXIT_OK


# --- wiring -----------------------------------------------------------------


def _linked_inputs(p):
    p.add_argument("--persons", required=True)
    p.add_argument("--tests", required=True)
    p.add_argument("--admissions", required=True)
    p.add_argument("--codes", default=None, help="YAML code-set/run config (default: packaged)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0, help="seed for admission dedup ties")
    p.add_argument("--cohorts", default="icli,non-icli,clear-cause", help="hospital cohorts")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prevbounds", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bounds", help="weekly prevalence bounds per cohort and regime")
    _linked_inputs(b)
    b.add_argument("--regimes", default=",".join(r.value for r in Regime))
    b.add_argument("--lambda-l", type=float, default=None)
    b.add_argument("--lambda-u", type=float, default=None)
    b.add_argument("--age-weights", action="store_true", help="age-standardize with population.age_totals")
    b.add_argument("--se-formula", choices=(SHARE_WEIGHTED_SE, WEIGHTED_MEAN_SE), default=SHARE_WEIGHTED_SE)
    b.add_argument("--json", action="store_true", help="also write bounds.json")
    b.add_argument(
        "--skip-untested-weeks",
        action="store_true",
        help="omit population rows for weeks without any test",
    )
    b.set_defaults(func=cmd_bounds)

    n = sub.add_parser("npv", help="test-retest false-negative and NPV estimate")
    n.add_argument("--tests", required=True)
    n.add_argument("--out", required=True)
    n.add_argument("--alpha", type=float, default=0.05)
    n.add_argument("--exclude-inconclusive", action="store_true")
    n.set_defaults(func=cmd_npv)

    s = sub.add_parser("simulate", help="write a synthetic population with ground truth")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("validate", help="prior-test and community-test-rate proxies")
    _linked_inputs(v)
    v.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except PrevBoundsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
