import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prevbounds import kernels

BACKENDS = kernels.backends()


def _random_tests(rng, n_persons, n):
    person = rng.integers(0, n_persons, n)
    day = rng.integers(737000, 737060, n)
    result = rng.integers(0, 3, n).astype(np.int8)
    return person, day, result


def test_backend_selected():
    assert kernels.BACKEND in ("compiled", "python")
    assert "python" in BACKENDS


def test_collapse_keeps_maximum():
    p, d, v = kernels.collapse_max([1, 0, 1, 1], [5, 5, 5, 6], [1, 0, 2, 0])
    assert p.tolist() == [0, 1, 1]
    assert d.tolist() == [5, 5, 6]
    assert v.tolist() == [0, 2, 0]


def test_window_flags_closed_interval():
    tp = np.array([0, 0, 1])
    td = np.array([10, 16, 20])
    pos = np.array([False, True, False])
    tested, positive = kernels.window_flags(tp, td, pos, np.array([0, 0, 1, 2]), np.array([5, 11, 20, 0]), np.array([10, 16, 20, 99]))
    assert tested.tolist() == [True, True, True, False]
    assert positive.tolist() == [False, True, False, False]


def test_retest_starts_pattern():
    # person 0: days 9, 10, 11 -> start at 9 only; person 1: 10, 11 -> start at 10
    person = np.array([0, 0, 0, 1, 1, 2])
    day = np.array([9, 10, 11, 10, 11, 10])
    assert kernels.retest_starts(person, day).tolist() == [0, 3]


def test_assignment_counts_shape():
    c = kernels.assignment_counts([2, 1])
    assert c.shape == (8, 2)
    assert sorted(map(tuple, c.tolist())).count((1, 0)) == 2


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend not built")
@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_backends_agree(seed):
    rng = np.random.default_rng(seed)
    person, day, result = _random_tests(rng, 30, int(rng.integers(0, 300)))
    q_person = rng.integers(0, 35, 40)
    q_lo = rng.integers(736990, 737070, 40)
    q_hi = q_lo + 6
    outs = {}
    for name, impl in BACKENDS.items():
        p, d, v = kernels.collapse_max(person, day, result, impl=impl)
        tested, positive = kernels.window_flags(p, d, v == 2, q_person, q_lo, q_hi, impl=impl)
        starts = kernels.retest_starts(p, d, impl=impl)
        outs[name] = (p.tolist(), d.tolist(), v.tolist(), tested.tolist(), positive.tolist(), starts.tolist())
    first, *rest = outs.values()
    for other in rest:
        assert other == first


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend not built")
def test_assignment_counts_agree():
    a, b = (kernels.assignment_counts([3, 4, 2], impl=i) for i in BACKENDS.values())
    assert np.array_equal(a, b)


def test_pure_switch_selects_python_backend():
    import os
    import subprocess
    import sys

    env = {**os.environ, "PREVBOUNDS_PURE": "1"}
    out = subprocess.run(
        [sys.executable, "-c", "import prevbounds.kernels as k; print(k.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
