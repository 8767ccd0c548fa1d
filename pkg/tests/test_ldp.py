import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from markovarb import ldp
from markovarb.engine import SimulationPlan, simulate
from markovarb.ergodic import run_ergodic
from markovarb.model import drifted_walk, stable_ar
from markovarb.strategy import Constant, FullInvest, PositiveDriftIndicator, log_increment


def walk_scgf(theta):
    return theta / 4 + theta**2 / 2


@pytest.fixture(scope="module")
def walk_ensemble():
    plan = SimulationPlan(drifted_walk(0.25), FullInvest(), 200, 100_000, 21, ldp.default_checkpoints(200))
    return simulate(plan)


@pytest.fixture(scope="module")
def ar_ensemble():
    plan = SimulationPlan(stable_ar(0.5), PositiveDriftIndicator(), 200, 100_000, 22,
                          ldp.default_checkpoints(200))
    return simulate(plan)


@pytest.fixture(scope="module")
def exact_rate():
    grid = np.round(np.arange(-200, 201) * 0.01, 10)
    return ldp.legendre(ldp.exact_curve(walk_scgf, grid), np.round(np.arange(-50, 101) * 0.01, 10))


def test_zero_point_is_exact(walk_ensemble, ar_ensemble):
    for ens in (walk_ensemble, ar_ensemble):
        c = ldp.estimate_scgf(ens, [-1.0, 0.0, 1.0])
        assert c.at(0.0) == 0.0
        assert ldp.estimate_scgf_adaptive(ens, [0.0]).lambda_hat[0] == 0.0


def test_grid_must_contain_zero(walk_ensemble):
    with pytest.raises(ValueError):
        ldp.estimate_scgf(walk_ensemble, [-1.0, 1.0])


def test_fixed_horizon_matches_closed_form_where_valid(walk_ensemble):
    grid = ldp.default_theta_grid()
    c = ldp.estimate_scgf(walk_ensemble, grid, checkpoint=20)
    ok = c.valid
    assert ok.sum() >= 9
    assert np.all(np.abs(c.lambda_hat[ok] - walk_scgf(grid[ok])) < 0.02)
    # weights collapse for large |theta| at t = 200: such points are flagged, not reported as valid
    late = ldp.estimate_scgf(walk_ensemble, grid)
    assert not late.valid[np.isclose(grid, 2.0)][0]
    assert late.ess[np.isclose(grid, 2.0)][0] < 2.0


@pytest.mark.parametrize("theta,want", [(-1.0, 0.25), (0.5, 0.25)])
def test_adaptive_horizon_examples(walk_ensemble, theta, want):
    lam, se, ess, t = ldp.adaptive_point(walk_ensemble, theta)
    assert abs(lam - want) < 0.02
    assert ess >= ldp.ESS_MIN and t >= ldp.T_MIN


def test_adaptive_curve_tracks_closed_form(walk_ensemble):
    grid = ldp.default_theta_grid()
    c = ldp.estimate_scgf_adaptive(walk_ensemble, grid)
    ok = c.valid
    assert ok.sum() >= 20
    err = np.abs(c.lambda_hat[ok] - walk_scgf(grid[ok]))
    assert np.all(err < 4 * c.stderr[ok] + 0.01)


def test_jackknife_stderr_is_calibrated():
    vals, ses = [], []
    for seed in range(12):
        ens = simulate(SimulationPlan(drifted_walk(0.25), FullInvest(), 20, 5000, seed))
        lam, se, _ = ldp.scgf_point(ens.sums(), 20, 0.3)
        vals.append(lam)
        ses.append(se)
    assert np.std(vals, ddof=1) == pytest.approx(np.mean(ses), rel=0.5)


def test_quadrature_shortcut():
    m = drifted_walk(0.25)
    for th in (-1.5, -0.5, 0.3, 1.0):
        assert ldp.iid_scgf_quadrature(m, FullInvest(), th) == pytest.approx(walk_scgf(th), abs=1e-10)
    # constant fraction: log E (1 - c + c e^X)^theta, checked against brute-force quadrature
    from scipy import integrate, stats
    c, th = 0.4, -0.7
    want = math.log(integrate.quad(lambda e: (1 - c + c * math.exp(0.25 + e)) ** th * stats.norm.pdf(e),
                                   -40, 40, limit=200)[0])
    assert ldp.iid_scgf_quadrature(m, Constant(c), th) == pytest.approx(want, rel=1e-9)
    with pytest.raises(ValueError):
        ldp.iid_scgf_quadrature(stable_ar(0.5), FullInvest(), 0.5)


def test_legendre_examples(exact_rate):
    r = exact_rate
    at = dict(zip(np.round(r.x_grid, 10), r.lambda_star))
    assert at[0.25] <= 1e-12
    assert at[0.2] == pytest.approx(0.00125, abs=1e-10)
    assert at[0.0] == pytest.approx(0.03125, abs=1e-10)
    assert r.argmin_x == 0.25


def test_rate_function_shape(exact_rate):
    r = exact_rate
    fin = ~r.boundary
    assert np.all(r.lambda_star[fin] >= 0)
    assert np.min(r.lambda_star) <= 1e-8
    i = int(np.argmin(r.lambda_star))
    assert np.all(np.diff(r.lambda_star[:i + 1]) <= 1e-15)
    assert np.all(np.diff(r.lambda_star[i:][fin[i:]]) >= -1e-15)
    assert np.all(r.lambda_star[np.abs(r.x_grid - 0.25) > 0.05] > 0)


def test_boundary_sentinel():
    grid = np.linspace(-1, 1, 21)
    r = ldp.legendre(ldp.exact_curve(walk_scgf, grid), [-5.0, 0.0, 5.0])
    assert r.boundary.tolist() == [True, False, True]
    assert math.isinf(r.lambda_star[0]) and math.isinf(r.lambda_star[2])


def test_legendre_needs_five_points():
    c = ldp.exact_curve(walk_scgf, [-0.2, -0.1, 0.0, 0.1])
    with pytest.raises(ValueError):
        ldp.legendre(c, [0.0])


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=40, unique=True), st.data())
def test_lower_envelope_is_convex_minorant(xs, data):
    ys = data.draw(st.lists(st.floats(-10, 10), min_size=len(xs), max_size=len(xs)))
    vx, vy = ldp.lower_convex_envelope(xs, ys)
    slopes = np.diff(vy) / np.diff(vx)
    assert np.all(np.diff(slopes) >= -1e-9 * (1 + np.abs(slopes[1:])))
    env = np.interp(xs, vx, vy)
    assert np.all(np.asarray(ys) >= env - 1e-9 * (1 + np.abs(env)))


def test_envelope_convexifies_noisy_curve(ar_ensemble):
    c = ldp.estimate_scgf_adaptive(ar_ensemble, ldp.default_theta_grid())
    r = ldp.legendre(c, np.linspace(-0.5, 1.0, 151))
    second = np.diff(r.env_lambda, 2)
    assert np.all(np.diff(np.diff(r.env_lambda) / np.diff(r.env_theta)) >= -1e-12)
    assert second.size > 0


def test_slope_at_zero_matches_ergodic_mean(ar_ensemble):
    c = ldp.estimate_scgf_adaptive(ar_ensemble, np.round(np.arange(-5, 6) * 0.02, 10))
    slope, se, _ = ldp.finite_difference_moments(c)
    erg = run_ergodic(stable_ar(0.5), PositiveDriftIndicator(), 2_000_000, seed=5)
    assert abs(slope - erg.nu_f_hat) < 3 * math.hypot(se, erg.nu_f_stderr) + 2e-3


def test_curvature_at_zero_matches_sigma2(walk_ensemble):
    c = ldp.estimate_scgf(walk_ensemble, ldp.default_theta_grid())
    _, _, curv = ldp.finite_difference_moments(c)
    erg = run_ergodic(drifted_walk(0.25), FullInvest(), 1_000_000, seed=6)
    assert curv == pytest.approx(erg.sigma2_f_hat, rel=0.3)


def test_rate_vanishes_only_near_mean(ar_ensemble):
    c = ldp.estimate_scgf_adaptive(ar_ensemble, ldp.default_theta_grid())
    pitch = 0.005
    xs = np.round(np.arange(0, 101) * pitch, 10)
    r = ldp.legendre(c, xs)
    nu = run_ergodic(stable_ar(0.5), PositiveDriftIndicator(), 1_000_000, seed=7).nu_f_hat
    assert r.lambda_star[np.argmin(r.lambda_star)] <= 1e-8
    far = (np.abs(xs - nu) > 5 * pitch) & ~r.boundary
    assert np.all(r.lambda_star[far] > 0)


def test_start_state_independence():
    vals = []
    for x0 in (0.0, 2.0):
        plan = SimulationPlan(stable_ar(0.5, x0=x0), PositiveDriftIndicator(), 200, 50_000, 1,
                              ldp.default_checkpoints(200))
        vals.append(ldp.adaptive_point(simulate(plan), 0.3))
    (a, sa, _, _), (b, sb, _, _) = vals
    assert abs(a - b) < 3 * math.hypot(sa, sb)


def test_alpha0_drifted_walk(walk_ensemble):
    res = ldp.find_alpha0(drifted_walk(0.25), FullInvest(), (-2.0, 0.0), ensemble=walk_ensemble)
    assert abs(res.alpha0 + 0.5) < 0.05


def test_alpha0_exact_curve_and_error_path():
    assert ldp.alpha0_root(walk_scgf).alpha0 == pytest.approx(-0.5, abs=1e-4)
    with pytest.raises(ldp.NoRootInRange) as exc:
        ldp.alpha0_root(lambda th: th**2 / 2)
    assert exc.value.curve is not None
    with pytest.raises(ldp.NoRootInRange):
        ldp.alpha0_root(walk_scgf, (-0.3, 0.0))


def test_alpha0_stable_ar(ar_ensemble):
    res = ldp.find_alpha0(stable_ar(0.5), PositiveDriftIndicator(), (-2.0, 0.0), ensemble=ar_ensemble)
    assert res.alpha0 < 0
    lam, se, _, _ = ldp.adaptive_point(ar_ensemble, res.alpha0 / 2)
    assert lam < 0


def test_growth_bound_examples():
    assert ldp.check_growth_bound([(0.0, 0.0, 0.0)])
    assert ldp.check_growth_bound([(-1.0, 0.5, 1.5)])
    assert not ldp.check_growth_bound([(0.0, 0.0, 2.0)])


@given(st.floats(0, 1), st.floats(-50, 50), st.floats(-50, 50))
def test_growth_bound_holds_for_every_increment(pi, x, y):
    assert ldp.check_growth_bound([(x, y, log_increment(pi, x, y))])


def test_csv_exports(tmp_path, exact_rate):
    c = ldp.exact_curve(walk_scgf, np.linspace(-1, 1, 21))
    c.to_csv(tmp_path / "c.csv")
    exact_rate.to_csv(tmp_path / "r.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[1] == "theta,lambda_hat,stderr,ess,valid,t_used"
    assert (tmp_path / "r.csv").read_text().splitlines()[1] == "x,lambda_star,boundary_flag"
