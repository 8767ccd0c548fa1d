"""Expected power utility of the wealth process and its exponential regimes.

For ``U(x) = -x^alpha`` with ``alpha < 0`` (or ``x^alpha`` with
``0 < alpha < 1``), ``E U(V_t) = +-V_0^alpha E exp(alpha S_t)``, so the growth
or decay rate of ``|E U(V_t)|`` is the SCGF of the log-wealth increments at
``theta = alpha``. Expectations are always formed from tilted log-sum-exp
weights, never by averaging ``V_t^alpha`` directly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from decimal import Decimal

import numpy as np

from . import ldp
from .arbitrage import GdpfReport, fit_decay_rate
from .engine import PathEnsemble, SimulationPlan, simulate
from .io import write_csv
from .model import MarketModel
from .strategy import Strategy

DECAYS, DIVERGES, INDETERMINATE = "decays_to_zero", "diverges", "indeterminate"


class HeavyTailWarning(RuntimeWarning):
    """Too few paths carry the tilted weight at the longest horizon."""


@dataclass(frozen=True)
class UtilitySpec:
    alpha: float

    def __post_init__(self):
        if not (self.alpha < 1.0 and self.alpha != 0.0):
            raise ValueError(f"need alpha < 1 and alpha != 0, got {self.alpha}")

    @property
    def sign(self) -> float:
        return -1.0 if self.alpha < 0 else 1.0

    def __call__(self, v):
        return self.sign * np.power(v, self.alpha)


@dataclass
class UtilityReport:
    alpha: float
    t_grid: np.ndarray
    eu_hat: np.ndarray
    eu_stderr: np.ndarray
    ess: np.ndarray
    censored: np.ndarray
    lambda_f_alpha: float
    lambda_stderr: float
    regime: str
    fitted_rate: float
    d_alpha_hat: float
    alpha0_ref: float
    v0: float = 1.0
    notes: list = field(default_factory=list)

    def summary_row(self) -> list:
        return [self.alpha, self.lambda_f_alpha, self.regime, self.fitted_rate, self.d_alpha_hat]

    def to_csv(self, path, comment: str | None = None) -> None:
        rows = [[int(t), float(e), float(se), bool(c)]
                for t, e, se, c in zip(self.t_grid, self.eu_hat, self.eu_stderr, self.censored)]
        write_csv(path, ["t", "eu_hat", "stderr", "censored"], rows, comment)

    def summary_to_csv(self, path, comment: str | None = None) -> None:
        write_csv(path, ["alpha", "lambda_f_alpha", "regime", "fitted_rate", "d_alpha_hat"],
                  [self.summary_row()], comment)


def classify(lam: float, se: float) -> str:
    if lam < -2.0 * se:
        return DECAYS
    if lam > 2.0 * se:
        return DIVERGES
    return INDETERMINATE


def log_expected_power(s: np.ndarray, alpha: float) -> tuple[float, float, float]:
    """``log E exp(alpha S)``, its jackknife stderr and the ESS of the tilted weights."""
    if alpha == 0.0:
        return 0.0, 0.0, float(s.size)
    full, loo, ess = ldp._tilted_log_mean(s, alpha)
    return full, ldp._jackknife_se(loo), ess


def expected_utility_curve(model: MarketModel, strategy: Strategy, spec: UtilitySpec, t_grid,
                           M: int = 100_000, seed: int = 0, *, v0: float = 1.0, workers: int = 1,
                           ensemble: PathEnsemble | None = None, ess_min: float = ldp.ESS_MIN,
                           alpha0_ref: float = math.nan) -> UtilityReport:
    """Monte Carlo ``E U(V_t)`` on ``t_grid`` with the regime of ``Lambda_f(alpha)``.

    ``fitted_rate`` is the decay rate ``-d/dt log|E U(V_t)|`` fitted over the
    uncensored grid points, so it is positive when utility decays to 0.
    """
    t_grid = np.array(sorted(int(t) for t in t_grid))
    if v0 <= 0:
        raise ValueError("v0 must be positive")
    alpha = spec.alpha
    if ensemble is None:
        ck = sorted(set(t_grid.tolist()) | set(ldp.default_checkpoints(int(t_grid[-1]))))
        ensemble = simulate(SimulationPlan(model, strategy, int(t_grid[-1]), M, seed, tuple(ck)), workers)
    notes = []
    log_scale = alpha * math.log(v0)
    logs, log_se, ess = (np.array(c) for c in zip(*(log_expected_power(ensemble.sums(t), alpha)
                                                     for t in t_grid)))
    eu = spec.sign * np.exp(log_scale + logs)
    eu_se = np.abs(eu) * log_se
    censored = ess < ess_min
    if censored[-1]:
        warnings.warn(f"tilted ESS {ess[-1]:.1f} < {ess_min:g} at t={t_grid[-1]}; "
                      "those points are censored", HeavyTailWarning, stacklevel=2)
        notes.append("heavy tail: largest horizons censored")

    lam, lam_se, _, t_used = ldp.adaptive_point(ensemble, alpha, ldp.ESS_TARGET, ess_min)
    if t_used < ldp.T_MIN:
        notes.append(f"Lambda_f(alpha) read at short horizon t={t_used}")
    regime = classify(lam, lam_se)

    keep = ~censored
    fitted = math.nan
    if keep.sum() >= 2:
        y = logs[keep]
        if np.ptp(y) == 0.0:
            fitted = 0.0
        else:
            fitted, _ = fit_decay_rate(t_grid[keep], np.exp(y))
    upper = keep & (t_grid >= np.median(t_grid))
    d_alpha = math.nan
    if upper.any():
        d_alpha = float(np.mean(spec.sign * np.exp(logs[upper] - t_grid[upper] * lam)))
    return UtilityReport(alpha, t_grid, eu, eu_se, ess, censored, float(lam), float(lam_se), regime,
                         float(fitted), d_alpha, alpha0_ref, v0, notes)


@dataclass(frozen=True)
class UtilityLowerBound:
    b_used: float
    t_check: tuple
    holds: bool


def aea_utility_lower_bound(report: GdpfReport, alpha: float) -> UtilityLowerBound:
    """Check ``E U(V_t) >= (1/2) e^{alpha b t}`` at grid points past ``t_{1/2}``.

    ``t_{1/2}`` is the first grid time with failure frequency at most 1/2. For
    relative thresholds the comparison wealth is ``V_0 e^{bt}``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if report.ensemble is None:
        raise ValueError("report carries no ensemble")
    b = report.growth_threshold
    past = np.flatnonzero(report.p_fail_hat <= 0.5)
    if past.size == 0:
        return UtilityLowerBound(b, (), False)
    ts = tuple(int(t) for t in report.t_grid[past[0]:])
    v0_term = alpha * math.log(report.v0)
    base = v0_term if report.threshold_relative else 0.0
    holds = True
    for t in ts:
        log_eu = v0_term + log_expected_power(report.ensemble.sums(t), alpha)[0]
        if log_eu < math.log(0.5) + base + alpha * b * t:
            holds = False
    return UtilityLowerBound(b, ts, holds)


@dataclass(frozen=True)
class ConverseResult:
    """Failure-probability rate ``c_prime`` at threshold ``b`` implied by a
    utility decay bound ``|E U(V_t)| <= K e^{-ct}``.

    ``time_shift = log(K) / c`` is the origin shift that turns ``K`` into 1.
    """

    b: float
    c_prime: float
    time_shift: float


def converse_gdpf(c: float, K: float, alpha: float, b: float) -> ConverseResult:
    """``c' = c + alpha b``, computed in decimal so short decimal inputs give exact results."""
    if not c > 0 or not K > 0:
        raise ValueError("need c > 0 and K > 0")
    if not alpha < 0:
        raise ValueError("alpha must be negative")
    cp = Decimal(repr(float(c))) + Decimal(repr(float(alpha))) * Decimal(repr(float(b)))
    if cp <= 0:
        max_b = float(Decimal(repr(float(c))) / -Decimal(repr(float(alpha))))
        raise ValueError(f"c + alpha b = {cp} <= 0; b must be below {max_b!r}")
    return ConverseResult(float(b), float(cp), math.log(K) / c)


def markov_inequality_check(ensemble: PathEnsemble, alpha: float, b: float, t_grid=None,
                            v0: float = 1.0) -> tuple[bool, np.ndarray, np.ndarray]:
    """Empirical ``P(V_t < e^{bt}) <= E|U(V_t)| / |U(e^{bt})|`` on every grid time.

    Returns ``(holds, p_fail, bound)``; the inequality holds path by path, so
    it holds for the empirical measure exactly.
    """
    if not alpha < 0:
        raise ValueError("alpha must be negative")
    ts = ensemble.checkpoints if t_grid is None else t_grid
    lv0 = math.log(v0)
    p, bound = [], []
    for t in ts:
        s = ensemble.sums(t) + lv0
        p.append(float(np.mean(s < b * t)))
        bound.append(math.exp(log_expected_power(s, alpha)[0] - alpha * b * t))
    p, bound = np.array(p), np.array(bound)
    return bool(np.all(p <= bound * (1.0 + 1e-12))), p, bound
