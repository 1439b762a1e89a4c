import filecmp
import math
from fractions import Fraction as F

import numpy as np
import pytest

from prevbounds import cohort as co
from prevbounds.bounds import bound_ladder
from prevbounds.domain import (
    AssumptionRegime,
    EmptyIdentifiedSet,
    ErrorBand,
    InvalidScenario,
    NoTests,
    Regime,
    TooLarge,
)
from prevbounds.simulate import (
    RetestPolicy,
    ScenarioConfig,
    Unit,
    enumerate_bounds,
    generate,
    random_units,
    units_to_cells,
)

WC = AssumptionRegime(Regime.WORST_CASE)
TM = AssumptionRegime(Regime.TEST_MONOTONE)


def units(n_untested, n_neg, n_pos, hospital=False):
    return (
        [Unit(False, hospital=hospital)] * n_untested
        + [Unit(True, False, hospital)] * n_neg
        + [Unit(True, True, hospital)] * n_pos
    )


def test_enumerate_worst_case_example():
    assert enumerate_bounds(units(3, 0, 1), WC) == (F(1, 4), F(1))


def test_enumerate_all_tested():
    assert enumerate_bounds(units(0, 3, 2), TM) == (F(2, 5), F(2, 5))


def test_enumerate_monotone_example():
    lo, hi = enumerate_bounds(units(2, 1, 1), TM)
    assert hi == F(1, 2) == bound_ladder(units_to_cells(units(2, 1, 1))[0], None, TM, exact=True)[1]


def test_enumerate_too_large():
    with pytest.raises(TooLarge):
        enumerate_bounds(units(13, 0, 0), WC)


def test_enumerate_no_tests():
    with pytest.raises(NoTests):
        enumerate_bounds(units(3, 0, 0), TM)


def test_enumerate_empty_set():
    pop = units(5, 0, 1)
    hosp = units(0, 3, 0, hospital=True)
    # population lower 1/6 exceeds the hospital upper 0
    with pytest.raises(EmptyIdentifiedSet):
        enumerate_bounds(pop + hosp, AssumptionRegime(Regime.HOSP_INDEPENDENT))


def test_enumerate_matches_closed_form_sample():
    rng = np.random.default_rng(5)
    for _ in range(150):
        for r in Regime:
            u = random_units(rng, r.needs_hospital)
            for band in (None, ErrorBand(0.1, 0.4)):
                reg = AssumptionRegime(r, band)
                pop, hosp = units_to_cells(u)
                try:
                    exp = bound_ladder(pop, hosp, reg, exact=True)
                except (NoTests, EmptyIdentifiedSet) as e:
                    with pytest.raises(type(e)):
                        enumerate_bounds(u, reg)
                    continue
                assert enumerate_bounds(u, reg) == exp


def test_scenario_validation():
    with pytest.raises(InvalidScenario):
        ScenarioConfig(test_rate=1.5)
    with pytest.raises(InvalidScenario):
        ScenarioConfig(rho=0)
    with pytest.raises(InvalidScenario):
        ScenarioConfig(rho=5, test_rate=0.3)
    with pytest.raises(InvalidScenario):
        ScenarioConfig(hospital_corr=-0.5)
    with pytest.raises(InvalidScenario):
        ScenarioConfig.from_dict({"no_such_field": 1})


def test_scenario_round_trip():
    sc = ScenarioConfig(prevalence=(0.01, 0.02), retest=RetestPolicy(0.2, 2.0), seed=4)
    assert ScenarioConfig.from_dict(sc.to_dict()) == sc


def test_truth_is_mean_of_indicators():
    d = generate(ScenarioConfig(population=5000, prevalence=(0.05, 0.1), seed=2))
    for w, (week, cohort, p, n) in enumerate(d.truth.rows()[:2]):
        assert p == d.truth.infected[w].sum() / 5000


def test_same_seed_same_bytes(tmp_path):
    sc = ScenarioConfig(population=3000, prevalence=(0.03, 0.02), duplicate_rate=0.1, retest=RetestPolicy(0.1), seed=9)
    generate(sc).write(tmp_path / "a")
    generate(sc).write(tmp_path / "b")
    for name in ("persons", "tests", "admissions", "truth", "config"):
        ext = "yaml" if name == "config" else "csv"
        assert filecmp.cmp(tmp_path / "a" / f"{name}.{ext}", tmp_path / "b" / f"{name}.{ext}", shallow=False)
    generate(ScenarioConfig(**{**sc.__dict__, "seed": 10})).write(tmp_path / "c")
    assert not filecmp.cmp(tmp_path / "a" / "tests.csv", tmp_path / "c" / "tests.csv", shallow=False)


def test_truth_file_header(tmp_path):
    paths = generate(ScenarioConfig(population=500, seed=1)).write(tmp_path)
    with open(paths["truth"]) as fh:
        assert fh.readline() == "week_id,cohort,true_prevalence\n"


def test_testing_propensity_ratio_converges():
    d = generate(ScenarioConfig(population=400_000, prevalence=(0.1,), rho=3.0, test_rate=0.05, hospital_rate=0.001, seed=3))
    c = d.truth.infected[0]
    tested = np.zeros(len(c), dtype=bool)
    tested[d.tests.person] = True
    ratio = tested[c].mean() / tested[~c].mean()
    # in-hospital tests add a little extra testing on top of community tests
    assert ratio == pytest.approx(3.0, rel=0.05)


def test_hospital_correlation_converges():
    sc = ScenarioConfig(population=400_000, prevalence=(0.1,), hospital_rate=0.05, hospital_corr=0.1, icli_rate=0, icli_background=0, seed=4)
    d = generate(sc)
    c = d.truth.infected[0].astype(float)
    h = np.zeros(len(c))
    h[d.adm_person] = 1.0
    assert np.corrcoef(c, h)[0, 1] == pytest.approx(0.1, abs=0.01)


def test_monotone_bounds_contain_truth_when_assumptions_hold():
    sc = ScenarioConfig(population=50_000, prevalence=(0.02, 0.03), rho=5, test_rate=0.01, seed=6)
    d = generate(sc)
    store, cfg = d.to_store(), d.run_config()
    cells = co.population_cells(store, cfg, by_age=False)
    for w, week in enumerate(d.truth.weeks):
        lo, hi = bound_ladder(cells[(week, None)], None, TM)
        assert lo <= d.truth.prevalence[w] <= hi


def test_false_negatives_need_error_band():
    # positivity is pulled down by missed infections; rho near 1 keeps the unadjusted
    # monotone upper bound close to the truth so the miss is visible
    sc = ScenarioConfig(population=200_000, prevalence=(0.05,), rho=1.0, test_rate=0.2, fn_rate=0.3, hospital_rate=0.001, seed=8)
    d = generate(sc)
    cell = co.population_cells(d.to_store(), d.run_config(), by_age=False)[(d.truth.weeks[0], None)]
    truth = d.truth.prevalence[0]
    assert bound_ladder(cell, None, TM)[1] < truth
    # 1 - NPV implied by the scenario: pi*fn / (pi*fn + 1 - pi)
    lam = 0.05 * 0.3 / (0.05 * 0.3 + 0.95)
    lo, hi = bound_ladder(cell, None, AssumptionRegime(Regime.TEST_MONOTONE, ErrorBand(0, 1.2 * lam)))
    assert lo <= truth <= hi


def test_subsample_keeps_linkage():
    d = generate(ScenarioConfig(population=10_000, seed=1))
    s = d.subsample(0.3, seed=2)
    assert len(s.person_ids) == 3000
    assert set(np.unique(s.tests.person)) <= set(range(3000))
    assert s.run_config().total_population == 3000
