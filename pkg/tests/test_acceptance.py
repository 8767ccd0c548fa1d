import math
import time

import numpy as np
import pytest

from markovarb import ldp
from markovarb.arbitrage import certify_gdpf, fit_decay_rate, gaussian_p_fail, hybrid_p_fail
from markovarb.cli import run
from markovarb.engine import SimulationPlan, simulate, trace_path
from markovarb.ergodic import estimate_nu_f
from markovarb.model import clamped_cir, drifted_walk, stable_ar
from markovarb.strategy import FullInvest, PositiveDriftIndicator
from markovarb.utility import UtilitySpec, converse_gdpf, expected_utility_curve
from markovarb.verify import certificate_for, search_drift_certificate

NU_AR = 0.5 * math.sqrt(4.0 / 3.0) / math.sqrt(2.0 * math.pi)
SUITE_FILES = ("paper_suite.csv", "suite_stable_ar_pi_plus_gdpf.csv", "suite_clamped_cir_pi_plus_gdpf.csv",
               "suite_stable_ar_pi_zero_gdpf.csv", "suite_drifted_walk_alpha_-1_utility.csv")


@pytest.fixture(scope="module")
def walk_ensemble():
    ts = tuple(range(1, 11)) + tuple(range(20, 101, 10)) + tuple(ldp.default_checkpoints(200))
    plan = SimulationPlan(drifted_walk(0.25), FullInvest(), 256, 100_000, 0,
                          tuple(sorted(set(ts) | {16, 64, 144, 256})))
    return simulate(plan)


@pytest.fixture(scope="module")
def suite_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("suite")
    codes = {name: run("paper-suite", None, [f"out={base / name}", f"threads={n}"])
             for name, n in (("a", 1), ("b", 1), ("c", 4))}
    return base, codes


def _suite_rows(path):
    lines = path.read_text().splitlines()
    head = lines[1].split(",")
    return {r.split(",")[0]: dict(zip(head, r.split(","))) for r in lines[2:]}


@pytest.mark.criterion(1)
def test_scgf_oracle():
    start = time.perf_counter()
    plan = SimulationPlan(drifted_walk(0.25), FullInvest(), 200, 100_000, 0, ldp.default_checkpoints(200))
    ens = simulate(plan)
    grid = np.round(np.linspace(-1, 1, 21), 10)
    for curve in (ldp.estimate_scgf(ens, grid), ldp.estimate_scgf_adaptive(ens, grid)):
        ok = curve.valid
        assert ok.any()
        assert np.all(np.abs(curve.lambda_hat[ok] - (grid[ok] / 4 + grid[ok] ** 2 / 2)) <= 0.02)
        assert curve.at(0.0) == 0.0
    assert ldp.estimate_scgf_adaptive(ens, grid).valid.all()
    assert time.perf_counter() - start < 60


@pytest.mark.criterion(2)
def test_rate_function_oracle():
    theta = np.round(np.arange(-300, 301) * 0.01, 10)
    xs = np.round(np.arange(-100, 101) * 0.01, 10)
    r = ldp.legendre(ldp.exact_curve(lambda th: th / 4 + th**2 / 2, theta), xs)
    assert abs(r(0.2) - 0.00125) <= 1e-4
    assert r(0.25) <= 1e-8


@pytest.mark.criterion(3)
def test_ergodic_mean():
    start = time.perf_counter()
    nu, se = estimate_nu_f(stable_ar(0.5), PositiveDriftIndicator(), 10_000_000, seed=0)
    assert abs(nu - NU_AR) <= 0.005
    assert nu > 4 * se
    assert time.perf_counter() - start < 60


@pytest.mark.criterion(4)
def test_drift_certificate():
    cert = certificate_for(stable_ar(0.5), 0.1, 0.1)
    assert cert.feasible
    assert 1.7 <= cert.K <= 2.1
    assert 0.19 <= cert.b <= 0.24
    assert not search_drift_certificate(drifted_walk(0.25)).feasible


@pytest.mark.criterion(5)
def test_gdpf_drifted_walk(walk_ensemble):
    ts = (16, 64, 144, 256)
    rep = certify_gdpf(drifted_walk(0.25), FullInvest(), 0.05, ts, nu_f=0.25, ensemble=walk_ensemble)
    exact = gaussian_p_fail(0.25, 1.0, 0.05, ts)
    binom = np.sqrt(exact * (1 - exact) / rep.m_paths)
    assert rep.m_paths == 100_000
    assert np.all(np.abs(rep.p_fail_hat - exact) <= 3 * binom)
    long_t = np.arange(16, 2001, 16)
    c, _ = fit_decay_rate(long_t, gaussian_p_fail(0.25, 1.0, 0.05, long_t))
    assert abs(c - 0.02) <= 0.25 * 0.02
    mixed = hybrid_p_fail(rep, lambda t: gaussian_p_fail(0.25, 1.0, 0.05, t))
    assert np.all(np.diff(np.log(mixed)) < 0)


@pytest.mark.criterion(5)
def test_gdpf_stable_ar():
    start = time.perf_counter()
    rep = certify_gdpf(stable_ar(0.5), PositiveDriftIndicator(), "auto", M=100_000, seed=0,
                       ergodic_length=2_000_000)
    upper = rep.t_grid >= np.median(rep.t_grid)
    assert np.all(np.diff(rep.p_fail_hat[upper]) <= 0)
    assert rep.c_hat > 0
    assert rep.c_predicted / 3 <= rep.c_hat <= 3 * rep.c_predicted
    assert rep.verdict == "GDPF_supported"
    assert time.perf_counter() - start < 300


@pytest.mark.criterion(6)
def test_utility_regimes(walk_ensemble):
    div = expected_utility_curve(None, None, UtilitySpec(-1.0), range(1, 9), ensemble=walk_ensemble)
    assert div.regime == "diverges"
    assert abs(div.lambda_f_alpha - 0.25) <= 0.03
    dec = expected_utility_curve(None, None, UtilitySpec(-0.25), range(10, 101, 10), ensemble=walk_ensemble)
    assert dec.regime == "decays_to_zero"
    assert abs(dec.fitted_rate - 0.03125) <= 0.3 * 0.03125
    res = ldp.find_alpha0(drifted_walk(0.25), FullInvest(), (-2.0, 0.0), ensemble=walk_ensemble)
    assert abs(res.alpha0 + 0.5) <= 0.05
    assert converse_gdpf(0.03125, 1.0, -0.25, 0.1).c_prime == 0.00625


@pytest.mark.criterion(7)
def test_wealth_recursion_equivalence():
    for model, strategy in ((stable_ar(0.5), PositiveDriftIndicator()),
                            (clamped_cir(0.5, 1.0, 0.5, 2.0), PositiveDriftIndicator()),
                            (drifted_walk(0.25), FullInvest())):
        for path in range(334):
            tr = trace_path(model, strategy, 11, path, 50)
            v = 1.0
            for x, y, pi in zip(tr.x[:-1], tr.x[1:], tr.pi):
                v *= (1.0 - pi) + pi * math.exp(y - x)
            s = float(np.sum(tr.f))
            assert abs(v - math.exp(s)) <= 1e-9 * max(v, math.exp(s))


@pytest.mark.criterion(7)
def test_growth_bound_on_sampled_pairs():
    for model, strategy in ((stable_ar(0.5), PositiveDriftIndicator()), (drifted_walk(0.25), FullInvest())):
        for path in range(200):
            tr = trace_path(model, strategy, 12, path, 100)
            assert ldp.check_growth_bound(zip(tr.x[:-1], tr.x[1:], tr.f))


@pytest.mark.criterion(7)
def test_paper_suite_bitwise_deterministic(suite_runs):
    base, codes = suite_runs
    assert codes == {"a": 0, "b": 0, "c": 0}
    for name in SUITE_FILES:
        a = (base / "a" / name).read_bytes()
        assert a == (base / "b" / name).read_bytes()
        assert a == (base / "c" / name).read_bytes()


@pytest.mark.criterion(8)
def test_paper_suite_verdicts(suite_runs):
    base, _ = suite_runs
    rows = _suite_rows(base / "a" / "paper_suite.csv")
    for case in ("stable_ar_pi_plus", "clamped_cir_pi_plus"):
        r = rows[case]
        assert r["verdict"] == "GDPF_supported"
        assert float(r["nu_f_hat"]) > 4 * float(r["nu_f_stderr"])
    assert rows["stable_ar_pi_zero"]["verdict"] == "refuted"
