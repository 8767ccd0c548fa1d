"""Long-run averages along one path of the pair chain.

Estimates the invariant mean of the log-wealth increment, the asymptotic
variance of its partial sums (non-overlapping batch means), and the occupation
histogram of consecutive states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .io import write_csv
from .model import MarketModel, noise_from_uniform, step_kernel
from .rng import as_seed, path_keys, raw_draw, to_uniform
from .strategy import Strategy, allocate_kernel, log_increment_kernel

MIN_BATCHES = 20
MIN_BATCH_LENGTH = 100
CONSTANT_F_TOL = 1e-12
MAX_ABS_STATE = 1e6


class NonErgodicInput(RuntimeError):
    """The path wandered past the state cap, which mean-reverting chains should not do."""

    def __init__(self, step: int, x: float, cap: float):
        self.step, self.x, self.cap = step, x, cap
        super().__init__(f"|X| exceeded {cap:g} at step {step} (x={x!r}); "
                         "the chain does not look ergodic")


@dataclass
class ErgodicReport:
    nu_f_hat: float
    nu_f_stderr: float
    sigma2_f_hat: float | None
    burn_in: int
    batch_length: int
    n_batches: int
    constant_f_flag: bool
    f_sample_var: float
    length: int
    seed: int
    notes: list = field(default_factory=list)

    def rows(self) -> list[list]:
        return [
            ["nu_f", self.nu_f_hat, self.nu_f_stderr],
            ["sigma2_f", self.sigma2_f_hat, None],
            ["f_sample_var", self.f_sample_var, None],
            ["constant_f_flag", self.constant_f_flag, None],
        ]

    def to_csv(self, path, config_echo: str = "", comment: str | None = None) -> None:
        echo = config_echo or (f"length={self.length} burn_in={self.burn_in} "
                               f"batch_length={self.batch_length} n_batches={self.n_batches}")
        write_csv(path, ["name", "estimate", "stderr", "config"],
                  [r + [echo] for r in self.rows()], comment)


@njit(cache=True, nogil=True)
def _ergodic_kernel(mp, sp, x0, seed, path, length, burn_in, batch_length, n_batches, cap, batch_sums):
    """Returns (status_step, x_at_failure, f_mean, f_m2, n_used)."""
    ka, kb = path_keys(seed, np.uint64(path))
    x = x0
    mean = 0.0
    m2 = 0.0
    n = 0
    used_end = burn_in + batch_length * n_batches
    for k in range(length):
        eps = noise_from_uniform(mp, to_uniform(raw_draw(ka, kb, np.uint64(k))))
        pi = allocate_kernel(sp, mp, x)
        y = step_kernel(mp, x, eps)
        if not (abs(y) <= cap):
            return k + 1, x, mean, m2, n
        if k >= burn_in:
            f = log_increment_kernel(pi, x, y)
            n += 1
            delta = f - mean
            mean += delta / n
            m2 += delta * (f - mean)
            if k < used_end:
                batch_sums[(k - burn_in) // batch_length] += f
        x = y
    return 0, x, mean, m2, n


def default_burn_in(length: int) -> int:
    return max(1000, length // 100)


def run_ergodic(model: MarketModel, strategy: Strategy, length: int, burn_in: int | None = None,
                batch_length: int | None = None, seed: int = 0, *, path_index: int = 0,
                max_abs_state: float = MAX_ABS_STATE) -> ErgodicReport:
    """Time averages of ``f(Phi_n)`` over ``n in (burn_in, length]``.

    ``batch_length`` defaults to ``floor(sqrt(n))`` of the post-burn-in length
    (at least 100).
    """
    burn_in = default_burn_in(length) if burn_in is None else int(burn_in)
    if length < 10 * burn_in:
        raise ValueError(f"length={length} must be at least 10 * burn_in={burn_in}")
    n_post = length - burn_in
    if batch_length is None:
        batch_length = max(MIN_BATCH_LENGTH, int(math.isqrt(n_post)))
    n_batches = n_post // batch_length
    if n_batches < 2:
        raise ValueError("need at least two batches")
    sums = np.zeros(n_batches)
    status, x_fail, mean, m2, n = _ergodic_kernel(
        model.compiled, strategy.compiled(), float(model.x0), as_seed(seed), path_index,
        length, burn_in, batch_length, n_batches, float(max_abs_state), sums)
    if status:
        raise NonErgodicInput(int(status), float(x_fail), max_abs_state)
    bm = sums / batch_length
    # nu_f_hat is the full post-burn-in time average; batch means give the stderr
    nu = float(mean)
    bvar = float(np.var(bm, ddof=1))
    stderr = math.sqrt(bvar / n_batches)
    f_var = float(m2 / (n - 1)) if n > 1 else 0.0
    constant = f_var < CONSTANT_F_TOL
    notes = [f"burn-in {burn_in} is an engineering default, not derived from a mixing rate"]
    sigma2 = None
    if n_batches >= MIN_BATCHES and batch_length >= MIN_BATCH_LENGTH:
        sigma2 = 0.0 if constant else max(batch_length * bvar, 0.0)
    else:
        notes.append(f"sigma2 not reported: {n_batches} batches of length {batch_length}")
    if constant:
        stderr = 0.0
    return ErgodicReport(nu, stderr, sigma2, burn_in, batch_length, n_batches, constant, f_var,
                         length, seed, notes)


def estimate_nu_f(model: MarketModel, strategy: Strategy, length: int, burn_in: int | None = None,
                  seed: int = 0) -> tuple[float, float]:
    """Invariant mean of the log-wealth increment and its batch-means stderr."""
    rep = run_ergodic(model, strategy, length, burn_in, seed=seed)
    return rep.nu_f_hat, rep.nu_f_stderr


def estimate_sigma2_f(model: MarketModel, strategy: Strategy, length: int, burn_in: int | None,
                      batch_length: int, seed: int = 0) -> float:
    """Batch-means estimate of the asymptotic variance of the increment partial sums."""
    burn_in = default_burn_in(length) if burn_in is None else burn_in
    if batch_length < MIN_BATCH_LENGTH:
        raise ValueError(f"batch_length must be >= {MIN_BATCH_LENGTH}")
    if (length - burn_in) // batch_length < MIN_BATCHES:
        raise ValueError(f"fewer than {MIN_BATCHES} batches; increase length or shorten batches")
    return run_ergodic(model, strategy, length, burn_in, batch_length, seed).sigma2_f_hat


# --------------------------------------------------------------------------
# occupation histogram of (X_{t-1}, X_t)
# --------------------------------------------------------------------------


@dataclass
class InvariantHistogram:
    x_edges: np.ndarray
    y_edges: np.ndarray
    mass: np.ndarray  # (nx, ny), sums to 1 over in-grid samples
    outside_fraction: float
    n_samples: int

    def x_marginal(self) -> np.ndarray:
        return self.mass.sum(axis=1)

    def to_csv(self, path, comment: str | None = None) -> None:
        rows = []
        for i in range(self.mass.shape[0]):
            for j in range(self.mass.shape[1]):
                rows.append([float(self.x_edges[i]), float(self.x_edges[i + 1]),
                             float(self.y_edges[j]), float(self.y_edges[j + 1]),
                             float(self.mass[i, j])])
        write_csv(path, ["x_lo", "x_hi", "y_lo", "y_hi", "mass"], rows, comment)


@njit(cache=True, nogil=True)
def _bin(edges, v):
    n = edges.shape[0] - 1
    if v < edges[0] or v >= edges[n]:
        return -1
    lo, hi = 0, n
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if edges[mid] <= v:
            lo = mid
        else:
            hi = mid
    return lo


@njit(cache=True, nogil=True)
def _histogram_kernel(mp, x0, seed, path, length, burn_in, xe, ye, counts):
    ka, kb = path_keys(seed, np.uint64(path))
    x = x0
    outside = 0
    for k in range(length):
        eps = noise_from_uniform(mp, to_uniform(raw_draw(ka, kb, np.uint64(k))))
        y = step_kernel(mp, x, eps)
        if k >= burn_in:
            i = _bin(xe, x)
            j = _bin(ye, y)
            if i < 0 or j < 0:
                outside += 1
            else:
                counts[i, j] += 1
        x = y
    return outside


def empirical_invariant_histogram(model: MarketModel, length: int, burn_in: int | None,
                                  grid, seed: int = 0) -> InvariantHistogram:
    """Normalized occupancy of consecutive-state cells along one long path.

    ``grid`` is either one edge array used on both axes or a pair of them.
    """
    if isinstance(grid, tuple) and len(grid) == 2:
        xe, ye = (np.asarray(g, dtype=float) for g in grid)
    else:
        xe = ye = np.asarray(grid, dtype=float)
    burn_in = default_burn_in(length) if burn_in is None else burn_in
    counts = np.zeros((xe.size - 1, ye.size - 1), dtype=np.int64)
    outside = _histogram_kernel(model.compiled, float(model.x0), as_seed(seed), 0, length, burn_in,
                                xe, ye, counts)
    total = counts.sum()
    n = length - burn_in
    mass = counts / total if total else counts.astype(float)
    return InvariantHistogram(xe, ye, mass, outside / n, n)
