import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import suites
from spaql.stats import ci95, t_critical, welch_test


def test_welch_against_oracles():
    suites.check_welch_examples()


def test_ci_against_oracles():
    suites.check_ci_examples()


def test_solved_boundary():
    suites.check_solved()


def test_welch_conventions():
    assert welch_test([1.0], [2.0, 3.0]).p == 1
    r = welch_test([2.0, 2.0, 2.0], [2.0, 2.0])
    assert r.t == 0 and r.p == 1
    r = welch_test([3.0, 3.0], [2.0, 2.0])
    assert r.t == np.inf and r.p == 0
    assert welch_test([3.0, 3.0], [2.0, 2.0], sided="one").p == 0
    assert welch_test([2.0, 2.0], [3.0, 3.0], sided="one").p == 1
    with pytest.raises(ValueError):
        welch_test([1, 2], [1, 2], sided="left")


def test_ci_needs_two_samples():
    with pytest.raises(ValueError):
        ci95([1.0])


def test_t_critical_large_dof_tends_to_normal():
    assert t_critical(0.975, 1e7) == pytest.approx(1.959964, abs=1e-5)


samples = st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=25)


@given(samples, samples)
def test_welch_properties(a, b):
    r = welch_test(a, b)
    assert 0 <= r.p <= 1
    s = welch_test(b, a)
    assert s.p == pytest.approx(r.p, abs=1e-12)
    if np.isfinite(r.t) and r.t != 0:
        assert s.t == pytest.approx(-r.t)
        assert min(len(a), len(b)) - 1 - 1e-9 <= r.dof <= len(a) + len(b) - 2 + 1e-9


@given(samples)
def test_ci_contains_mean(x):
    lo, hi = ci95(x)
    m = float(np.mean(x))
    assert lo <= m + 1e-9 and m - 1e-9 <= hi
