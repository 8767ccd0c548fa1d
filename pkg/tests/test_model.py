import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from markovarb.model import (AffineMap, ClampedSqrtMap, GaussianNoise, MarketModel, ModelBlowUp,
                             OutOfSupport, PriceUnderflowWarning, TableMap, TabulatedNoise, clamped_cir,
                             drifted_walk, price, stable_ar, step, transition_density)


def test_step_examples(ar, cir):
    assert step(ar, 2.0, 0.0) == 1.0
    assert step(cir, 9.0, 1.0) == 6.5
    assert step(cir, 0.04, 1.0) == pytest.approx(0.52, abs=1e-15)


@given(st.floats(-1e6, 1e6), st.floats(-50, 50), st.floats(-0.99, 0.99).filter(lambda a: abs(a) > 1e-3))
def test_stable_ar_step_is_alpha_x_plus_eps(x, e, a):
    m = stable_ar(a)
    assert step(m, x, e) == x + (a - 1.0) * x + e
    assert step(m, x, e) == pytest.approx(a * x + e, rel=1e-12, abs=1e-9)


@given(st.floats(-100, 100))
def test_step_is_deterministic(x):
    m = clamped_cir(0.3, 0.7, 0.2, 3.0)
    assert step(m, x, 0.123) == step(m, x, 0.123)


def test_blow_up_signalled():
    m = MarketModel(AffineMap(0.0, 1e308), AffineMap(1.0, 0.0))
    with pytest.raises(ModelBlowUp) as exc:
        step(m, 10.0, 0.0)
    assert exc.value.x == 10.0


def test_price():
    assert price(0.0) == 1.0
    assert price(1.0) == pytest.approx(2.718281828459045, rel=1e-15)
    with pytest.warns(PriceUnderflowWarning):
        assert price(-800.0) == 0.0
    with pytest.raises(OverflowError):
        price(1000.0)


def test_transition_density_examples(ar):
    assert transition_density(ar, 0.0, 0.0) == pytest.approx(0.3989422804014327, rel=1e-12)
    m = clamped_cir(0.5, 2.0, 0.5, 2.0)
    x = 1.7
    y = x + float(m.mu(x))
    assert transition_density(m, x, y) == pytest.approx(0.3989422804014327 / float(m.sigma(x)), rel=1e-12)
    xs = np.linspace(-3, 3, 61)
    assert min(transition_density(m, a, b) for a in xs for b in xs) > 0


@pytest.mark.parametrize("x", [-2.0, 0.0, 0.3, 5.0])
def test_transition_density_integrates_to_one(x):
    m = clamped_cir(0.5, 1.0, 0.5, 2.0)
    val, _ = integrate.quad(lambda y: transition_density(m, x, y), -60, 60, points=[x], limit=200)
    assert abs(val - 1.0) < 1e-6


def test_builtin_expansions():
    m = clamped_cir(0.5, 1.5, 0.5, 2.0)
    xs = np.array([-9.0, -1.0, 0.04, 0.0, 2.0, 9.0])
    assert np.allclose(m.mu(xs), -0.5 * xs)
    assert np.allclose(m.sigma(xs), 1.5 * np.clip(np.sqrt(np.abs(xs)), 0.5, 2.0))
    assert m.vol_bound == 3.0
    w = drifted_walk(0.25)
    assert float(w.mu(123.0)) == 0.25 and float(w.sigma(-4.0)) == 1.0
    with pytest.raises(ValueError):
        stable_ar(1.0)
    with pytest.raises(ValueError):
        stable_ar(0.0)


def test_gaussian_noise_centering_moves_mean_into_drift():
    m = MarketModel(AffineMap(0.1, -0.5), AffineMap(2.0, 0.0), GaussianNoise(1.0, mean=0.25))
    assert m.centering_shift == 0.25
    assert float(m.mu(1.0)) == pytest.approx(0.1 - 0.5 + 2.0 * 0.25)
    assert m.centered_noise.mean == 0.0


def test_tabulated_noise_is_centered_by_sampler_mean():
    pts = np.linspace(-3, 5, 161)
    dens = np.exp(-0.5 * (pts - 1.0) ** 2) + 0.01
    noise = TabulatedNoise(tuple(pts), tuple(dens))
    m = MarketModel(AffineMap(0.0, -0.5), AffineMap(1.0, 0.0), noise)
    u = (np.arange(1_000_000) + 0.5) / 1_000_000
    e = np.array([m.noise_from_uniform(v) for v in u[::1]])
    assert abs(e.mean()) < 4 * e.std() / 1000
    assert m.centering_shift == pytest.approx(noise.mean)
    with pytest.raises(OutOfSupport):
        m.centered_noise.pdf(100.0)


def test_tabulated_density_rejects_zero():
    with pytest.raises(ValueError):
        TabulatedNoise((0.0, 1.0, 2.0), (1.0, 0.0, 1.0))


def test_table_map_interpolates_and_extrapolates():
    t = TableMap((0.0, 1.0, 2.0), (0.0, 2.0, 3.0), extrapolate_left=True, extrapolate_right=False)
    assert t(0.5) == 1.0
    assert t(-1.0) == -2.0
    assert t(5.0) == 3.0
    assert math.isinf(t.upper_bound())
    assert np.array_equal(t(np.array([0.5, 1.5])), np.array([1.0, 2.5]))


def test_clamped_sqrt_validation():
    with pytest.raises(ValueError):
        ClampedSqrtMap(1.0, 2.0, 1.0)


def test_models_are_immutable(ar):
    with pytest.raises(Exception):
        ar.x0 = 3.0
    assert ar.with_x0(3.0).x0 == 3.0 and ar.x0 == 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert float(ar.mu(2.0)) == -1.0
