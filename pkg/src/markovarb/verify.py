"""Grid audits of the model hypotheses and a Foster-Lyapunov drift certificate
for ``V(x) = W(x) = 1 + q x^2``.

Every check here is a finite proxy: limits at infinity are read off an outer
annulus and "every compact" becomes the audited window ``[-x_max, x_max]``.
Reports state the ranges they looked at.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .io import write_csv
from .model import GAUSSIAN, MarketModel

DV3_II_NOTE = ("(ii) of the drift condition is structural and not certified numerically; "
               "it holds for bounded noise densities and bounded volatility")


def _quad(h, lo, hi, points):
    # roundoff warnings come from the far Gaussian tails, where the integrand is ~0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(h, lo, hi, points=points, limit=400, epsabs=0.0, epsrel=1e-10)
    return val


class IntegrabilityError(ArithmeticError):
    """``E exp(q (m + s eps)^2)`` is infinite for the requested ``q``."""


@dataclass(frozen=True)
class GridConfig:
    x_max: float = 50.0
    n: int = 2001
    annulus_lo: float = 10.0
    eta: float = 0.01
    kappa_steps: int = 8

    def grid(self) -> np.ndarray:
        g = np.linspace(-self.x_max, self.x_max, self.n)
        g[np.argmin(np.abs(g))] = 0.0
        return g


@dataclass
class AssumptionReport:
    a1_ok: bool
    a2_ok: bool
    a3_ok: bool
    a4_ok: bool
    rc_plus_ok: bool
    a3_ratio_sup: float
    rc_plus_fraction: float
    r_plus_intervals: list
    kappa_used: float
    I_value: float
    kappa_ladder: list = field(default_factory=list)
    grid: GridConfig = field(default_factory=GridConfig)
    notes: list = field(default_factory=list)


# --------------------------------------------------------------------------
# (A1)-(A4) and the positive-drift region
# --------------------------------------------------------------------------


def _exp_square_moment(noise, kappa: float) -> float:
    """``E exp(kappa eps^2)`` by quadrature; ``inf`` when the tails do not decay."""
    lo, hi = noise.support
    if noise.kind == GAUSSIAN:
        if 2.0 * kappa * noise.sd**2 >= 1.0:
            return math.inf
        half = 60.0 * noise.sd
        lo, hi = -half, half
    xs = np.linspace(lo, hi, 4001)
    expo = kappa * xs**2 + noise.logpdf(xs)
    if math.isinf(noise.support[1]) and max(expo[0], expo[-1]) > float(np.max(expo)) - 35.0:
        return math.inf
    shift = float(np.max(expo))

    def h(e):
        return math.exp(kappa * e * e + float(noise.logpdf(e)) - shift)

    return _quad(h, lo, hi, [0.0] if lo < 0 < hi else None) * math.exp(shift)


def _sign_runs(xs: np.ndarray, pos: np.ndarray, mu) -> list[tuple[float, float]]:
    runs = []
    i, n = 0, xs.size
    while i < n:
        if not pos[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and pos[j + 1]:
            j += 1
        left = -math.inf if i == 0 else optimize.brentq(mu, xs[i - 1], xs[i], xtol=1e-12) \
            if mu(xs[i - 1]) * mu(xs[i]) < 0 else float(xs[i - 1])
        right = math.inf if j == n - 1 else optimize.brentq(mu, xs[j], xs[j + 1], xtol=1e-12) \
            if mu(xs[j]) * mu(xs[j + 1]) < 0 else float(xs[j + 1])
        runs.append((float(left), float(right)))
        i = j + 1
    return runs


def positive_drift_region(model: MarketModel, grid: GridConfig = GridConfig()):
    """Fraction of grid points with ``mu > 0`` and the open intervals of that set.

    Interval ends touching the grid boundary are reported as infinite.
    """
    xs = grid.grid()
    mu_vals = np.asarray(model.mu(xs), dtype=float)
    pos = mu_vals > 0.0

    def mu(x):
        return float(model.mu(x))

    return float(pos.mean()), _sign_runs(xs, pos, mu)


def check_assumptions(model: MarketModel, grid: GridConfig = GridConfig()) -> AssumptionReport:
    xs = grid.grid()
    notes = [f"audited window [-{grid.x_max:g}, {grid.x_max:g}] with {grid.n} points",
             f"(A3) limsup read on |x| in [{grid.annulus_lo:g}, {grid.x_max:g}]"]
    noise = model.centered_noise

    with np.errstate(divide="ignore"):
        logd = np.asarray(noise.logpdf(xs), dtype=float)
    a1 = bool(np.all(np.isfinite(logd)))
    if not a1:
        notes.append("(A1) noise density vanishes inside the audited window")

    vol = np.asarray(model.sigma(xs), dtype=float)
    drift = np.asarray(model.mu(xs), dtype=float)
    a2 = bool(np.all(np.isfinite(vol)) and np.all(vol > 0) and np.all(np.isfinite(drift))
              and math.isfinite(model.vol_bound))
    if not math.isfinite(model.vol_bound):
        notes.append("(A2) volatility map has no finite global bound")

    outer = np.abs(xs) >= grid.annulus_lo
    ratio = np.abs(xs[outer] + drift[outer]) / np.abs(xs[outer])
    ratio_sup = float(np.max(ratio))
    a3 = ratio_sup < 1.0 - grid.eta

    ladder = []
    kappa = float(noise.kappa)
    kappa_used, I_value = math.nan, math.inf
    for _ in range(grid.kappa_steps):
        val = _exp_square_moment(noise, kappa)
        ladder.append((kappa, val))
        if math.isfinite(val):
            kappa_used, I_value = kappa, val
            break
        kappa *= 0.5
    a4 = math.isfinite(I_value)
    if not a4:
        notes.append("(A4) quadrature diverged for every kappa on the ladder")

    frac, intervals = positive_drift_region(model, grid)
    notes.append(DV3_II_NOTE)
    return AssumptionReport(a1, a2, a3, a4, frac > 0.0, ratio_sup, frac, intervals,
                            kappa_used, I_value, ladder, grid, notes)


def subgaussian_constant(model: MarketModel, a_grid=None) -> tuple[float, np.ndarray]:
    """Smallest ``c`` with ``E exp(a |eps|) <= exp(c a^2)`` on an ``a >= 1`` grid.

    Returns ``c_hat`` and the per-``a`` ratios ``log E exp(a|eps|) / a^2``.
    """
    a_grid = np.linspace(1.0, 10.0, 19) if a_grid is None else np.asarray(a_grid, dtype=float)
    noise = model.centered_noise
    lo, hi = noise.support
    if math.isinf(lo):
        lo, hi = -60.0 * noise.sd, 60.0 * noise.sd
    out = []
    for a in a_grid:
        xs = np.linspace(lo, hi, 4001)
        shift = float(np.max(a * np.abs(xs) + noise.logpdf(xs)))

        def h(e, a=a):
            return math.exp(a * abs(e) + float(noise.logpdf(e)) - shift)

        val = _quad(h, lo, hi, [0.0] if lo < 0 < hi else None)
        out.append((math.log(val) + shift) / (a * a))
    ratios = np.array(out)
    return float(ratios.max()), ratios


# --------------------------------------------------------------------------
# drift inequality
# --------------------------------------------------------------------------


def log_pev(model: MarketModel, x: float, q: float, method: str = "auto") -> float:
    """``log E exp(1 + q (x + mu(x) + sigma(x) eps)^2)``.

    ``method`` is ``"closed"`` (Gaussian noise only), ``"quad"`` or ``"auto"``.
    """
    if q < 0:
        raise ValueError("q must be nonnegative")
    m = float(x + model.mu(x))
    s = float(model.sigma(x))
    noise = model.centered_noise
    gaussian = noise.kind == GAUSSIAN
    if method == "closed" or (method == "auto" and gaussian):
        if not gaussian:
            raise ValueError("closed form needs Gaussian noise")
        v = s * s * noise.sd**2
        r = 1.0 - 2.0 * q * v
        if r <= 0.0:
            raise IntegrabilityError(f"1 - 2 q sigma^2 = {r:g} <= 0 at x={x!r}, q={q!r}")
        return 1.0 + q * m * m / r - 0.5 * math.log(r)
    if method not in ("quad", "auto"):
        raise ValueError(f"unknown method {method!r}")
    lo, hi = noise.support
    if math.isinf(lo):
        if 2.0 * q * s * s * noise.sd**2 >= 1.0:
            raise IntegrabilityError(f"E exp(q (m + s eps)^2) diverges at x={x!r}, q={q!r}")
        w = 40.0 * noise.sd
        lo, hi = -w, w
    # the integrand peaks where d/de [q (m + s e)^2 + log gamma(e)] = 0
    xs = np.linspace(lo, hi, 4001)
    expo = q * (m + s * xs) ** 2 + noise.logpdf(xs)
    k = int(np.argmax(expo))
    shift = float(expo[k])
    if math.isinf(noise.support[0]):
        # near the integrability edge the tilted tail is wide; widen until it is negligible
        edge = lambda e: q * (m + s * e) ** 2 + float(noise.logpdf(e)) - shift  # noqa: E731
        while edge(lo) > -60.0 or edge(hi) > -60.0:
            lo, hi = 2.0 * lo, 2.0 * hi

    def h(e):
        return math.exp(q * (m + s * e) ** 2 + float(noise.logpdf(e)) - shift)

    val = _quad(h, lo, hi, [float(xs[k])])
    return 1.0 + math.log(val) + shift


def pev(model: MarketModel, x: float, q: float, method: str = "auto") -> float:
    """``P e^V (x)`` for ``V = 1 + q x^2``."""
    return math.exp(log_pev(model, x, q, method))


@dataclass
class DriftCertificate:
    """Drift inequality ``log Pe^V <= V - delta W + b 1_C`` with ``C = [-K, K]``.

    ``margin`` is the slack ``(1 - delta)(1 + q x^2) + b 1_C(x) - log Pe^V(x)``
    on ``x_grid``.
    """

    q: float
    delta: float
    K: float
    b: float
    x_grid: np.ndarray
    log_pev: np.ndarray
    margin: np.ndarray
    feasible: bool
    x_max: float

    @property
    def lyapunov_offset(self) -> float:
        """Alias of ``b``, distinct from the growth threshold of a failure-probability report."""
        return self.b

    @property
    def outer_slack(self) -> float:
        """Worst slack of the unaugmented inequality on the outer half of the grid."""
        outer = np.abs(self.x_grid) >= 0.5 * self.x_max
        gap = self.log_pev - (1.0 - self.delta) * (1.0 + self.q * self.x_grid**2)
        return float(np.min(-gap[outer]))

    @property
    def bound(self) -> np.ndarray:
        return self.log_pev + self.margin

    @property
    def min_margin(self) -> float:
        return float(np.min(self.margin))

    def to_csv(self, path, comment: str | None = None) -> None:
        rows = [[float(x), float(lp), float(bd), float(mg)]
                for x, lp, bd, mg in zip(self.x_grid, self.log_pev, self.bound, self.margin)]
        write_csv(path, ["x", "log_pev", "bound", "margin"], rows, comment)


def certificate_for(model: MarketModel, q: float, delta: float, x_max: float = 50.0,
                    n: int = 2001) -> DriftCertificate:
    """Smallest grid ``K`` and matching ``b`` for one ``(q, delta)`` pair.

    Raises ``IntegrabilityError`` when ``Pe^V`` is infinite somewhere on the grid.
    """
    xs = GridConfig(x_max=x_max, n=n).grid()
    lp = np.array([log_pev(model, x, q) for x in xs])
    gap = lp - (1.0 - delta) * (1.0 + q * xs**2)
    bad = gap > 0.0
    pitch = float(xs[1] - xs[0])
    K = float(np.max(np.abs(xs[bad]))) if bad.any() else pitch
    inside = np.abs(xs) <= K
    b = max(0.0, float(np.max(gap[inside])))
    margin = (1.0 - delta) * (1.0 + q * xs**2) + b * inside - lp
    feasible = K < x_max
    return DriftCertificate(float(q), float(delta), K, b, xs, lp, margin, bool(feasible), float(x_max))


DEFAULT_Q_GRID = (0.01, 0.02, 0.05, 0.1, 0.15, 0.2)
DEFAULT_DELTA_GRID = (0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5)


def search_drift_certificate(model: MarketModel, q_grid=DEFAULT_Q_GRID, delta_grid=DEFAULT_DELTA_GRID,
                             x_max: float = 50.0, n: int = 2001) -> DriftCertificate:
    """First feasible ``(q, delta)`` in lexicographic order (small ``q`` first).

    When none is feasible the returned certificate is the one with the largest
    ``outer_slack``, with ``feasible=False``.
    """
    best, best_score = None, -math.inf
    for q in sorted(q_grid):
        for delta in sorted(delta_grid):
            try:
                cert = certificate_for(model, q, delta, x_max, n)
            except IntegrabilityError:
                continue
            if cert.feasible:
                return cert
            score = cert.outer_slack
            if score > best_score:
                best, best_score = cert, score
    if best is None:
        raise IntegrabilityError("Pe^V is infinite for every q on the grid")
    return best


def replay_certificate(model: MarketModel, cert: DriftCertificate) -> bool:
    """Recompute the slack from scratch; true iff it is nonnegative on the whole grid."""
    xs = cert.x_grid
    lp = np.array([log_pev(model, x, cert.q) for x in xs])
    slack = (1.0 - cert.delta) * (1.0 + cert.q * xs**2) + cert.b * (np.abs(xs) <= cert.K) - lp
    return bool(np.all(slack >= 0.0))


def format_report(report: AssumptionReport, cert: DriftCertificate | None = None) -> str:
    def yn(b):
        return "ok" if b else "FAIL"

    iv = ", ".join(f"({a:g}, {b:g})" for a, b in report.r_plus_intervals) or "none"
    lines = [
        f"A1 density positive on window: {yn(report.a1_ok)}",
        f"A2 volatility positive and bounded: {yn(report.a2_ok)}",
        f"A3 ratio sup {report.a3_ratio_sup:.6g} (< {1 - report.grid.eta:g}): {yn(report.a3_ok)}",
        f"A4 kappa {report.kappa_used:.6g}, E exp(kappa eps^2) = {report.I_value:.10g}: "
        f"{yn(report.a4_ok)}",
        f"RC+ fraction {report.rc_plus_fraction:.6g}, intervals {iv}: {yn(report.rc_plus_ok)}",
        "kappa ladder: " + ", ".join(f"{k:g} -> {v:.6g}" for k, v in report.kappa_ladder),
    ]
    if cert is not None:
        lines.append(f"drift certificate q={cert.q:g} delta={cert.delta:g} K={cert.K:.6g} "
                     f"b={cert.b:.6g} x_max={cert.x_max:g}: "
                     f"{'feasible' if cert.feasible else 'infeasible'} "
                     f"(min margin {cert.min_margin:.6g}, outer slack {cert.outer_slack:.6g})")
    lines += [f"note: {n}" for n in report.notes]
    return "\n".join(lines) + "\n"
