"""Scaled cumulant generating function, its convex conjugate, and the
critical risk-aversion root.

The plug-in estimator is ``(1/t) log mean_m exp(theta * S_t^(m))`` in
log-sum-exp form. Exponential tilting concentrates the weights on few paths
as ``|theta| * sqrt(t)`` grows; the effective sample size of the tilted
weights is reported with every point and points below ``ess_min`` are kept
out of the conjugate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .engine import PathEnsemble, SimulationPlan, simulate
from .io import write_csv
from .model import AffineMap, MarketModel
from .strategy import Constant, FullInvest, PositiveDriftIndicator, Strategy

ESS_MIN = 100.0
ESS_TARGET = 1000.0
T_MIN = 4


class NoRootInRange(RuntimeError):
    def __init__(self, message: str, curve=None):
        super().__init__(message)
        self.curve = curve


def default_theta_grid(n: int = 41, lo: float = -2.0, hi: float = 2.0) -> np.ndarray:
    g = np.linspace(lo, hi, n)
    if lo <= 0.0 <= hi:
        g[np.argmin(np.abs(g))] = 0.0
    return g


def default_checkpoints(horizon: int) -> tuple:
    """Roughly geometric checkpoint ladder ending at ``horizon``."""
    ts = {1, 2, 3, 4, 5, 6, 8, 10, 12, 15}
    t = 20
    while t < horizon:
        ts.add(t)
        t = int(round(t * 1.25))
    return tuple(sorted(s for s in ts if s < horizon)) + (int(horizon),)


@dataclass
class ScgfCurve:
    """Estimated ``Lambda_f(theta)`` on a grid.

    ``t_used`` holds the horizon each point was read at; it is constant for
    the fixed-horizon estimator and varies for the adaptive one.
    """

    theta_grid: np.ndarray
    lambda_hat: np.ndarray
    stderr: np.ndarray
    ess: np.ndarray
    t_used: np.ndarray
    m_used: int
    ess_min: float = ESS_MIN
    t_min: int = 1

    @property
    def valid(self) -> np.ndarray:
        return (self.ess >= self.ess_min) & np.isfinite(self.lambda_hat) & (self.t_used >= self.t_min)

    def at(self, theta: float) -> float:
        i = int(np.argmin(np.abs(self.theta_grid - theta)))
        if not math.isclose(self.theta_grid[i], theta, abs_tol=1e-12):
            raise KeyError(f"theta={theta} not on the grid")
        return float(self.lambda_hat[i])

    def to_csv(self, path, comment: str | None = None) -> None:
        rows = [[float(th), float(lam), float(se), float(e), bool(v), int(t)]
                for th, lam, se, e, v, t in zip(self.theta_grid, self.lambda_hat, self.stderr,
                                                self.ess, self.valid, self.t_used)]
        write_csv(path, ["theta", "lambda_hat", "stderr", "ess", "valid", "t_used"], rows, comment)


def _tilted_log_mean(s: np.ndarray, theta: float):
    """``log mean exp(theta s)``, its leave-one-out values and the ESS of the weights."""
    m = s.size
    a = theta * s
    amax = a.max()
    w = np.exp(a - amax)
    wsum = w.sum()
    full = amax + math.log(wsum) - math.log(m)
    ess = wsum * wsum / float(np.dot(w, w))
    if m > 1:
        rest = np.maximum(wsum - w, np.finfo(float).tiny)
        loo = amax + np.log(rest) - math.log(m - 1)
    else:
        loo = None
    return full, loo, ess


def _jackknife_se(loo) -> float:
    if loo is None:
        return math.inf
    m = loo.size
    return math.sqrt((m - 1) / m * float(np.sum((loo - loo.mean()) ** 2)))


def scgf_point(s: np.ndarray, t: int, theta: float) -> tuple[float, float, float]:
    """``(Lambda_hat, jackknife stderr, ESS)`` from the sums ``s`` of one horizon ``t``."""
    if theta == 0.0:
        return 0.0, 0.0, float(s.size)
    full, loo, ess = _tilted_log_mean(s, theta)
    return full / t, _jackknife_se(None if loo is None else loo / t), ess


def estimate_scgf(ensemble: PathEnsemble, theta_grid, checkpoint: int | None = None,
                  ess_min: float = ESS_MIN) -> ScgfCurve:
    """Fixed-horizon plug-in SCGF at ``checkpoint`` (last one by default)."""
    theta = np.asarray(theta_grid, dtype=float)
    if not np.any(theta == 0.0):
        raise ValueError("theta grid must contain 0")
    t = ensemble.checkpoints[-1] if checkpoint is None else int(checkpoint)
    s = ensemble.sums(t)
    pts = np.array([scgf_point(s, t, th) for th in theta]).reshape(-1, 3)
    return ScgfCurve(theta, pts[:, 0], pts[:, 1], pts[:, 2], np.full(theta.size, t), s.size, ess_min)


def adaptive_point(ensemble: PathEnsemble, theta: float, ess_target: float = ESS_TARGET,
                   ess_min: float = ESS_MIN) -> tuple[float, float, float, int]:
    """Difference estimator ``(L(t) - L(t1)) / (t - t1)`` on an adaptive horizon.

    ``L(t) = log mean exp(theta S_t)``. ``t`` is the longest checkpoint whose
    tilted ESS reaches ``ess_target`` (else the longest reaching ``ess_min``,
    else the first checkpoint) and ``t1`` the longest checkpoint ``<= t // 2``
    (``L(0) = 0``). The difference cancels the start-state constant in
    ``L(t)``; for i.i.d. increments both forms agree in expectation.
    Returns ``(Lambda_hat, stderr, ESS at t, t)``.
    """
    ck = ensemble.checkpoints
    if theta == 0.0:
        return 0.0, 0.0, float(ensemble.n_valid), ck[-1]
    chosen = fallback = None
    for t in reversed(ck):
        full, loo, ess = _tilted_log_mean(ensemble.sums(t), theta)
        if ess >= ess_target:
            chosen = (t, full, loo, ess)
            break
        if fallback is None and ess >= ess_min:
            fallback = (t, full, loo, ess)
    if chosen is None:
        chosen = fallback or (t, full, loo, ess)
    t, full, loo, ess = chosen
    t1 = max((c for c in ck if c <= t // 2), default=0)
    if t1:
        full1, loo1, _ = _tilted_log_mean(ensemble.sums(t1), theta)
        full, loo = full - full1, (None if loo is None else loo - loo1)
    span = t - t1
    return full / span, _jackknife_se(None if loo is None else loo / span), ess, t


def estimate_scgf_adaptive(ensemble: PathEnsemble, theta_grid, ess_target: float = ESS_TARGET,
                           ess_min: float = ESS_MIN, t_min: int = T_MIN) -> ScgfCurve:
    """Per-point adaptive horizons; points read at ``t < t_min`` are unreliable."""
    theta = np.asarray(theta_grid, dtype=float)
    if not np.any(theta == 0.0):
        raise ValueError("theta grid must contain 0")
    pts = [adaptive_point(ensemble, th, ess_target, ess_min) for th in theta]
    lam, se, ess, t = (np.array(c) for c in zip(*pts))
    return ScgfCurve(theta, lam.astype(float), se.astype(float), ess.astype(float),
                     t.astype(int), ensemble.n_valid, ess_min, t_min)


# --------------------------------------------------------------------------
# convex conjugate
# --------------------------------------------------------------------------


def lower_convex_envelope(x, y) -> tuple[np.ndarray, np.ndarray]:
    """Vertices of the lower convex hull of the points ``(x, y)`` (x sorted)."""
    order = np.argsort(x, kind="stable")
    hull: list[tuple[float, float]] = []
    for px, py in zip(np.asarray(x, float)[order], np.asarray(y, float)[order]):
        while len(hull) >= 2:
            (ax, ay), (bx, by) = hull[-2], hull[-1]
            # drop b unless it lies strictly below the chord a -> p
            if (bx - ax) * (py - ay) - (px - ax) * (by - ay) <= 0.0:
                hull.pop()
            else:
                break
        hull.append((px, py))
    vx, vy = zip(*hull)
    return np.array(vx), np.array(vy)


@dataclass
class RateFunction:
    x_grid: np.ndarray
    lambda_star: np.ndarray
    boundary: np.ndarray
    argmin_x: float
    env_theta: np.ndarray
    env_lambda: np.ndarray
    source: ScgfCurve | None = field(default=None, repr=False)

    @property
    def slope_range(self) -> tuple[float, float]:
        s = np.diff(self.env_lambda) / np.diff(self.env_theta)
        return float(s[0]), float(s[-1])

    def __call__(self, x: float) -> float:
        lo, hi = self.slope_range
        if not lo <= x <= hi:
            return math.inf
        return float(np.max(self.env_theta * x - self.env_lambda))

    def to_csv(self, path, comment: str | None = None) -> None:
        rows = [[float(x), float(v), bool(b)]
                for x, v, b in zip(self.x_grid, self.lambda_star, self.boundary)]
        write_csv(path, ["x", "lambda_star", "boundary_flag"], rows, comment)


def legendre(curve: ScgfCurve, x_grid, min_valid: int = 5) -> RateFunction:
    """Conjugate of the lower convex envelope of the valid curve points.

    Points of ``x_grid`` outside the envelope's slope range get ``inf`` and a
    boundary flag.
    """
    ok = curve.valid
    if ok.sum() < min_valid:
        raise ValueError(f"need at least {min_valid} valid SCGF points, have {int(ok.sum())}")
    vt, vl = lower_convex_envelope(curve.theta_grid[ok], curve.lambda_hat[ok])
    x = np.asarray(x_grid, dtype=float)
    slopes = np.diff(vl) / np.diff(vt)
    lo, hi = slopes[0], slopes[-1]
    star = np.max(np.outer(x, vt) - vl[None, :], axis=1)
    boundary = (x < lo) | (x > hi)
    star = np.where(boundary, math.inf, star)
    finite = np.where(boundary, math.inf, star)
    argmin = math.nan
    if np.any(~boundary):
        # a piecewise-linear envelope makes the conjugate flat at its minimum; report the midpoint
        flat = np.flatnonzero(finite <= np.min(finite) + 1e-12)
        argmin = float(0.5 * (x[flat[0]] + x[flat[-1]]))
    return RateFunction(x, star, boundary, argmin, vt, vl, curve)


def exact_curve(fn: Callable[[float], float], theta_grid, ess: float = math.inf) -> ScgfCurve:
    """Wrap a closed-form SCGF as a curve (zero stderr, unlimited ESS)."""
    theta = np.asarray(theta_grid, dtype=float)
    lam = np.array([0.0 if th == 0.0 else fn(th) for th in theta])
    return ScgfCurve(theta, lam, np.zeros_like(theta), np.full(theta.size, ess),
                     np.zeros(theta.size, dtype=int), 0, t_min=0)


# --------------------------------------------------------------------------
# critical risk aversion
# --------------------------------------------------------------------------


@dataclass
class Alpha0Result:
    alpha0: float
    scan_theta: np.ndarray
    scan_lambda: np.ndarray


def alpha0_root(lam: Callable[[float], float], search_range=(-2.0, 0.0), scan_step: float = 0.05,
                tol: float = 1e-4) -> Alpha0Result:
    """Negative root of ``lam`` nearest 0, bracketed by scanning down from 0.

    Raises ``NoRootInRange`` when ``lam`` is not negative just left of 0 or
    never turns nonnegative inside the range.
    """
    lo, hi = map(float, search_range)
    if not lo < hi <= 0.0:
        raise ValueError("search range must satisfy lo < hi <= 0")
    ths, vals = [], []
    prev = None
    th = min(hi, 0.0) - scan_step if hi == 0.0 else hi
    while th >= lo - 1e-12:
        v = float(lam(th))
        ths.append(th)
        vals.append(v)
        if not math.isfinite(v):
            break
        if v >= 0.0:
            if prev is None:
                break
            a, b = th, prev  # lam(a) >= 0 > lam(b)
            while b - a > tol:
                mid = 0.5 * (a + b)
                if float(lam(mid)) >= 0.0:
                    a = mid
                else:
                    b = mid
            return Alpha0Result(0.5 * (a + b), np.array(ths), np.array(vals))
        prev = th
        th -= scan_step
    curve = (np.array(ths), np.array(vals))
    if prev is None:
        raise NoRootInRange("SCGF is not negative just left of 0; no window (alpha0, 0)", curve)
    raise NoRootInRange(f"no sign change of the SCGF in [{lo}, {hi}]", curve)


def ensemble_scgf(ensemble: PathEnsemble, ess_target: float = ESS_TARGET,
                  ess_min: float = ESS_MIN) -> Callable[[float], float]:
    """``theta -> Lambda_hat(theta)`` on the adaptive horizon; NaN when invalid."""

    def lam(theta: float) -> float:
        v, _, ess, t = adaptive_point(ensemble, theta, ess_target, ess_min)
        return v if ess >= ess_min and t >= T_MIN else math.nan

    return lam


def find_alpha0(model: MarketModel, strategy: Strategy, search_range=(-2.0, 0.0), *,
                horizon: int = 200, paths: int = 100_000, seed: int = 0, workers: int = 1,
                ensemble: PathEnsemble | None = None) -> Alpha0Result:
    """Locate ``alpha0 < 0`` with ``Lambda_f < 0`` on ``(alpha0, 0)``."""
    if ensemble is None:
        plan = SimulationPlan(model, strategy, horizon, paths, seed, default_checkpoints(horizon))
        ensemble = simulate(plan, workers)
    return alpha0_root(ensemble_scgf(ensemble), search_range)


# --------------------------------------------------------------------------
# auxiliary checks
# --------------------------------------------------------------------------


def check_growth_bound(samples) -> bool:
    """``log(1/2) - |x| - |y| <= f <= 1 + |x| + |y|`` for every row ``(x, y, f)``."""
    if not isinstance(samples, np.ndarray):
        samples = list(samples)
    a = np.atleast_2d(np.asarray(samples, dtype=float))
    x, y, f = a[:, 0], a[:, 1], a[:, 2]
    r = np.abs(x) + np.abs(y)
    return bool(np.all((f >= math.log(0.5) - r) & (f <= 1.0 + r)))


def finite_difference_moments(curve: ScgfCurve) -> tuple[float, float, float]:
    """Central-difference slope, its stderr, and curvature of the curve at 0."""
    th = curve.theta_grid
    i0 = int(np.flatnonzero(th == 0.0)[0])
    if i0 == 0 or i0 == th.size - 1:
        raise ValueError("need grid points on both sides of 0")
    hp, hm = th[i0 + 1], -th[i0 - 1]
    lp, lm = curve.lambda_hat[i0 + 1], curve.lambda_hat[i0 - 1]
    slope = (lp - lm) / (hp + hm)
    se = math.hypot(curve.stderr[i0 + 1], curve.stderr[i0 - 1]) / (hp + hm)
    curv = 2.0 * (hm * lp + hp * lm) / (hp * hm * (hp + hm))
    return float(slope), float(se), float(curv)


def iid_scgf_quadrature(model: MarketModel, strategy: Strategy, theta: float) -> float:
    """SCGF of an i.i.d.-increment model by one-dimensional quadrature.

    Valid only when drift and volatility are constant and the allocation does
    not depend on the state; then ``Lambda(theta) = log E exp(theta f)`` for a
    single increment.
    """
    if not (isinstance(model.drift, AffineMap) and model.drift.slope == 0.0
            and isinstance(model.vol, AffineMap) and model.vol.slope == 0.0):
        raise ValueError("quadrature shortcut needs constant drift and volatility")
    mu, sig = float(model.mu(0.0)), float(model.sigma(0.0))
    if isinstance(strategy, PositiveDriftIndicator):
        c = 1.0 if mu > 0 else 0.0
    elif isinstance(strategy, (Constant, FullInvest)):
        c = 1.0 if isinstance(strategy, FullInvest) else strategy.fraction
    else:
        raise ValueError("quadrature shortcut needs a state-independent allocation")
    if theta == 0.0 or c == 0.0:
        return 0.0
    noise = model.centered_noise

    def f(e):
        d = mu + sig * e
        return d if c == 1.0 else math.log1p(c * math.expm1(d))

    lo, hi = noise.support
    grid = np.linspace(max(lo, -40.0 * noise.sd), min(hi, 40.0 * noise.sd), 2001)
    expo = np.array([theta * f(e) for e in grid]) + noise.logpdf(grid)
    shift = float(np.max(expo))

    def integrand(e):
        return math.exp(theta * f(e) + float(noise.logpdf(e)) - shift)

    val, _ = integrate.quad(integrand, grid[0], grid[-1], points=[float(grid[np.argmax(expo)])],
                            limit=400, epsabs=0.0, epsrel=1e-12)
    return math.log(val) + shift
