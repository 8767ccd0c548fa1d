import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from markovarb.model import stable_ar
from markovarb.strategy import (Constant, FullInvest, PositiveDriftIndicator, TableStrategy, WealthState,
                                allocate, log_increment, wealth_step)


def test_positive_drift_indicator_is_strict(ar):
    s = PositiveDriftIndicator()
    assert allocate(s, ar, -1.0) == 1.0
    assert allocate(s, ar, 0.0) == 0.0
    assert allocate(s, ar, 2.0) == 0.0


def test_table_strategy_intervals(ar):
    s = TableStrategy((-1.0, 1.0), (0.2, 0.5, 0.9))
    assert [allocate(s, ar, x) for x in (-5.0, -1.0, 0.0, 1.0, 7.0)] == [0.2, 0.5, 0.5, 0.9, 0.9]
    with pytest.raises(ValueError):
        TableStrategy((1.0, 0.0), (0.1, 0.2, 0.3))
    with pytest.raises(ValueError):
        Constant(1.5)


def test_log_increment_examples():
    assert log_increment(0.0, 3.0, -2.0) == 0.0
    assert log_increment(1.0, -1.0, 0.5) == 1.5
    assert log_increment(0.5, 0.0, math.log(3.0)) == pytest.approx(math.log(2.0), rel=1e-15)
    # the large-jump branch stays finite
    assert log_increment(0.5, 0.0, 800.0) == pytest.approx(800.0 + math.log(0.5), rel=1e-15)
    with pytest.raises(ValueError):
        log_increment(1.2, 0.0, 0.0)


@given(st.floats(0, 1), st.floats(-20, 20), st.floats(-20, 20))
def test_log_increment_matches_direct_formula(pi, x, y):
    direct = math.log((1.0 - pi) + pi * math.exp(y - x))
    assert log_increment(pi, x, y) == pytest.approx(direct, rel=1e-12, abs=1e-12)


@given(st.floats(0, 1), st.floats(-30, 30), st.floats(-30, 30))
def test_log_increment_lower_bound(pi, x, y):
    # log((1 - pi) + pi e^d) >= min(0, d) >= log(1/2) - |x| - |y|
    assert log_increment(pi, x, y) >= min(0.0, y - x) - 1e-12


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(-2, 2)), min_size=1, max_size=60),
       st.floats(0.01, 100))
def test_wealth_recursion_equals_log_sum(steps, v0):
    state = WealthState(v0)
    x = 0.0
    for pi, dx in steps:
        state = wealth_step(state, pi, x, x + dx)
        x += dx
    assert not state.log_only
    assert math.log(state.v) == pytest.approx(state.log_wealth, rel=1e-9, abs=1e-9)


def test_wealth_overflow_switches_to_log_space():
    st_ = WealthState(1.0)
    for k in range(5):
        st_ = wealth_step(st_, 1.0, 400.0 * k, 400.0 * (k + 1))
    assert st_.log_only
    assert st_.log_sum == 2000.0
    assert math.isfinite(st_.v)


def test_full_invest_and_constant_compile_alike():
    assert np.array_equal(FullInvest().compiled(), Constant(1.0).compiled())
    m = stable_ar(0.5)
    assert allocate(FullInvest(), m, 3.0) == 1.0
