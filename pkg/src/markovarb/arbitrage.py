"""Empirical failure probabilities ``P(V_t < e^{bt})`` and their decay rate.

A strategy earns the label ``GDPF_supported`` when its failure frequency
decays geometrically across the upper half of the time grid. The fitted rate
is set against the large-deviations prediction ``Lambda*(b)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import ldp
from .engine import PathEnsemble, SimulationPlan, simulate
from .ergodic import run_ergodic
from .io import write_csv, write_plot_data
from .model import MarketModel
from .strategy import Strategy

MIN_COUNT = 10
MIN_FIT_POINTS = 4
REFUTE_SIGMAS = 5.0
C_LADDER = tuple(float(c) for c in np.geomspace(1e-4, 1.0, 41))

SUPPORTED, INCONCLUSIVE, REFUTED = "GDPF_supported", "inconclusive", "refuted"


@dataclass
class GdpfReport:
    """Failure frequencies on ``t_grid`` for the growth threshold ``b``.

    With ``threshold_relative`` a path fails at ``t`` when ``V_t < V_0 e^{bt}``;
    otherwise when ``V_t < e^{bt}``.
    """

    growth_threshold: float
    threshold_relative: bool
    t_grid: np.ndarray
    n_fail: np.ndarray
    m_paths: int
    p_fail_hat: np.ndarray
    p_stderr: np.ndarray
    censored: np.ndarray
    c_hat: float
    fit_r2: float
    c_lower_bound: float
    c_predicted: float
    nu_f_used: float
    verdict: str
    c_certified: float
    v0: float = 1.0
    notes: list = field(default_factory=list)
    ensemble: PathEnsemble | None = field(default=None, repr=False)

    @property
    def b(self) -> float:
        return self.growth_threshold

    def summary(self) -> str:
        return (f"b={self.growth_threshold!r} c_hat={self.c_hat!r} c_predicted={self.c_predicted!r} "
                f"nu_f={self.nu_f_used!r} verdict={self.verdict}")

    def to_csv(self, path, comment: str | None = None) -> None:
        rows = [[int(t), float(p), float(se), bool(c)]
                for t, p, se, c in zip(self.t_grid, self.p_fail_hat, self.p_stderr, self.censored)]
        write_csv(path, ["t", "p_fail_hat", "stderr", "censored"], rows, comment)

    def write_plot_data(self, path, comment: str | None = None) -> None:
        """``t`` against ``log p_fail_hat`` (zero frequencies dropped)."""
        keep = self.p_fail_hat > 0
        write_plot_data(path, self.t_grid[keep], np.log(self.p_fail_hat[keep]), comment)


def fit_decay_rate(t, p) -> tuple[float, float]:
    """Least-squares ``log p = a - c t``; returns ``(c, r^2)``."""
    t = np.asarray(t, dtype=float)
    y = np.log(np.asarray(p, dtype=float))
    slope, intercept, r, _, _ = stats.linregress(t, y)
    return float(-slope), float(r * r)


def gaussian_p_fail(m: float, sd: float, b: float, t) -> np.ndarray:
    """``P(S_t < bt)`` for i.i.d. ``N(m, sd^2)`` increments: ``Phi((b - m) sqrt(t) / sd)``."""
    t = np.asarray(t, dtype=float)
    return stats.norm.cdf((b - m) * np.sqrt(t) / sd)


def hybrid_p_fail(report: GdpfReport, exact) -> np.ndarray:
    """Monte Carlo frequencies with exact values substituted where ``p < 10/M``."""
    exact_vals = np.asarray(exact(report.t_grid), dtype=float)
    low = report.p_fail_hat < MIN_COUNT / report.m_paths
    return np.where(low, exact_vals, report.p_fail_hat)


def _verdict(t, p, se, c_hat, all_zero) -> tuple[str, float, list]:
    notes = []
    upper = t >= np.median(t)
    tu, pu, su = t[upper], p[upper], se[upper]
    if all(np.any(pu > np.exp(-c * tu) + REFUTE_SIGMAS * su) for c in C_LADDER):
        notes.append(f"failure frequency exceeds exp(-c t) + {REFUTE_SIGMAS:g} se for every c on the ladder")
        return REFUTED, 0.0, notes
    ok = [c for c in C_LADDER if np.all(pu <= np.exp(-c * tu) + REFUTE_SIGMAS * su)]
    c_cert = max(ok) if ok else 0.0
    if all_zero:
        notes.append("no failures at any t; rate is censored, not fitted")
        return SUPPORTED, c_cert, notes
    rises = np.diff(pu) > 2.0 * np.hypot(su[1:], su[:-1])
    if rises.any():
        notes.append("failure frequency increases on the upper half of the t grid")
        return INCONCLUSIVE, c_cert, notes
    if not (math.isfinite(c_hat) and c_hat > 0):
        notes.append("decay rate not estimable or not positive")
        return INCONCLUSIVE, c_cert, notes
    return SUPPORTED, c_cert, notes


def failure_counts(ensemble: PathEnsemble, t_grid, b: float, offset: float = 0.0) -> np.ndarray:
    """Number of valid paths with ``S_t + offset < b t`` at every ``t`` of ``t_grid``."""
    return np.array([int(np.count_nonzero(ensemble.sums(t) + offset < b * t)) for t in t_grid])


def certify_gdpf(model: MarketModel, strategy: Strategy, b="auto", t_grid=(20, 40, 60, 80, 100, 120, 140,
                 160, 180, 200, 220, 240), M: int = 100_000, seed: int = 0, *, v0: float = 1.0,
                 nu_f: float | None = None, ergodic_length: int = 1_000_000, workers: int = 1,
                 theta_grid=None, ensemble: PathEnsemble | None = None) -> GdpfReport:
    """Failure frequencies, fitted decay rate and the verdict for one strategy.

    ``b="auto"`` uses ``nu_f / 2`` with the threshold measured relative to
    ``V_0``. A numeric ``b`` is an absolute threshold ``e^{bt}``.
    """
    t_grid = np.array(sorted(int(t) for t in t_grid))
    if v0 <= 0:
        raise ValueError("v0 must be positive")
    notes = []
    if nu_f is None:
        erg = run_ergodic(model, strategy, ergodic_length, seed=seed)
        nu_f = erg.nu_f_hat
    relative = isinstance(b, str)
    if relative:
        if b != "auto":
            raise ValueError(f"b must be a number or 'auto', got {b!r}")
        if not nu_f > 0:
            raise ValueError(f"automatic threshold needs a positive growth rate, got nu_f={nu_f!r}")
        b = nu_f / 2.0
    b = float(b)
    if ensemble is None:
        ck = sorted(set(t_grid.tolist()) | set(ldp.default_checkpoints(int(t_grid[-1]))))
        plan = SimulationPlan(model, strategy, int(t_grid[-1]), M, seed, tuple(ck))
        ensemble = simulate(plan, workers)
    m_paths = ensemble.n_valid
    offset = 0.0 if relative else math.log(v0)
    counts = failure_counts(ensemble, t_grid, b, offset)
    p = counts / m_paths
    se = np.sqrt(p * (1.0 - p) / m_paths)
    estimable = (counts >= MIN_COUNT) & (m_paths - counts >= MIN_COUNT)
    censored = ~estimable
    c_hat, r2 = math.nan, math.nan
    if estimable.sum() >= MIN_FIT_POINTS:
        c_hat, r2 = fit_decay_rate(t_grid[estimable], p[estimable])
    else:
        notes.append(f"only {int(estimable.sum())} estimable points; no fit")
    all_zero = bool(np.all(counts == 0))
    c_lb = math.log(m_paths) / float(t_grid[-1]) if all_zero else math.nan

    theta = ldp.default_theta_grid() if theta_grid is None else theta_grid
    try:
        curve = ldp.estimate_scgf_adaptive(ensemble, theta)
        c_pred = ldp.legendre(curve, [b])(b)
        if not math.isfinite(c_pred):
            notes.append("threshold outside the estimated slope range of the SCGF")
            c_pred = math.nan
    except ValueError as exc:
        notes.append(f"no rate prediction: {exc}")
        c_pred = math.nan

    verdict, c_cert, vnotes = _verdict(t_grid, p, se, c_hat, all_zero)
    return GdpfReport(b, relative, t_grid, counts, m_paths, p, se, censored, c_hat, r2, c_lb, c_pred,
                      float(nu_f), verdict, c_cert, v0, notes + vnotes, ensemble)


def aea_check(report: GdpfReport, epsilon: float):
    """First grid ``t`` from which ``p_fail_hat + 2 se <= epsilon`` at every later grid point.

    Returns ``None`` when there is no such ``t``.
    """
    ok = report.p_fail_hat + 2.0 * report.p_stderr <= epsilon
    first = None
    for i in range(len(ok) - 1, -1, -1):
        if not ok[i]:
            break
        first = int(report.t_grid[i])
    return first
