import math

import numpy as np
import pytest

from markovarb.ergodic import (NonErgodicInput, empirical_invariant_histogram, estimate_nu_f,
                               estimate_sigma2_f, run_ergodic)
from markovarb.model import stable_ar
from markovarb.strategy import Constant, FullInvest, PositiveDriftIndicator

# E[(alpha - 1) X 1{X < 0}] for X ~ N(0, 1 / (1 - alpha^2)), alpha = 0.5
NU_AR_PI_PLUS = 0.5 * math.sqrt(4.0 / 3.0) / math.sqrt(2.0 * math.pi)


def test_oracle_constant():
    assert NU_AR_PI_PLUS == pytest.approx(0.2303294, abs=1e-7)


def test_stable_ar_nu_f(ar):
    nu, se = estimate_nu_f(ar, PositiveDriftIndicator(), 2_000_000, seed=1)
    assert abs(nu - NU_AR_PI_PLUS) < 4 * se
    assert se < 5e-4


def test_drifted_walk_nu_and_sigma2(walk):
    rep = run_ergodic(walk, FullInvest(), 1_000_000, seed=3)
    assert abs(rep.nu_f_hat - 0.25) < 0.003
    assert rep.sigma2_f_hat == pytest.approx(1.0, rel=0.05)


def test_zero_strategy_has_constant_f(ar):
    rep = run_ergodic(ar, Constant(0.0), 100_000)
    assert rep.nu_f_hat == 0.0 and rep.nu_f_stderr == 0.0
    assert rep.constant_f_flag and rep.sigma2_f_hat == 0.0


def test_sigma2_preconditions(ar):
    with pytest.raises(ValueError):
        estimate_sigma2_f(ar, FullInvest(), 100_000, 1000, 50)
    with pytest.raises(ValueError):
        estimate_sigma2_f(ar, FullInvest(), 100_000, 1000, 10_000)
    with pytest.raises(ValueError):
        run_ergodic(ar, FullInvest(), 5000, burn_in=1000)


def test_full_invest_ar_sigma2_closed_form():
    # f = X_t - X_{t-1}: partial sums telescope, so sigma2 = 0 asymptotically
    rep = run_ergodic(stable_ar(0.5), FullInvest(), 1_000_000, seed=2)
    assert abs(rep.nu_f_hat) < 5e-3
    assert rep.sigma2_f_hat < 0.05


def test_nonergodic_walk_is_flagged(walk):
    with pytest.raises(NonErgodicInput):
        run_ergodic(walk, FullInvest(), 2_000_000, max_abs_state=100.0)


def test_histogram_marginal_matches_stationary_law(ar):
    edges = np.linspace(-4, 4, 17)
    h = empirical_invariant_histogram(ar, 1_000_000, None, edges, seed=0)
    assert h.mass.sum() == pytest.approx(1.0)
    from scipy import stats
    sd = math.sqrt(4.0 / 3.0)
    want = np.diff(stats.norm.cdf(edges, scale=sd))
    want /= want.sum()
    assert np.max(np.abs(h.x_marginal() - want)) < 0.01
    assert h.outside_fraction < 0.01


def test_report_csv(tmp_path, ar):
    rep = run_ergodic(ar, PositiveDriftIndicator(), 50_000)
    rep.to_csv(tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[1] == "name,estimate,stderr,config"
    assert lines[2].startswith("nu_f,")
