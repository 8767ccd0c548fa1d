"""Parallel Monte Carlo of the pair chain and its log-wealth additive functional.

Each path owns a counter-based stream, so a path's trajectory does not depend
on how paths are split across workers. Paths are partitioned into contiguous
blocks; every worker writes its own columns of the output matrices, and no
floating-point reduction crosses block boundaries.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .io import write_csv
from .model import MarketModel, noise_from_uniform, step_kernel
from .rng import as_seed, path_keys, raw_draw, stream_for_path, to_uniform
from .strategy import Strategy, allocate, allocate_kernel, log_increment, log_increment_kernel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimulationPlan:
    model: MarketModel
    strategy: Strategy
    horizon: int
    paths: int
    seed: int = 0
    checkpoints: tuple = ()
    record_states: bool = False

    def __post_init__(self):
        if self.horizon < 1 or self.paths < 1:
            raise ValueError("horizon and paths must be >= 1")
        ck = tuple(int(t) for t in self.checkpoints) or (int(self.horizon),)
        if any(b <= a for a, b in zip(ck, ck[1:])):
            raise ValueError("checkpoints must be strictly increasing")
        if ck[0] < 1 or ck[-1] > self.horizon:
            raise ValueError(f"checkpoints must lie in [1, {self.horizon}]")
        object.__setattr__(self, "checkpoints", ck)
        as_seed(self.seed)


@dataclass(frozen=True)
class PathFailure:
    path: int
    step: int
    x: float


@dataclass
class PathEnsemble:
    """Log-wealth sums ``S_t`` at checkpoint times, one column per path.

    Rows of ``S`` follow ``plan.checkpoints``. Paths that blew up keep NaN
    entries from the failure time on, are marked in ``valid`` and listed in
    ``failures``; statistics use valid paths only.
    """

    plan: SimulationPlan
    S: np.ndarray
    X: np.ndarray | None
    valid: np.ndarray
    failures: list = field(default_factory=list)

    @property
    def checkpoints(self) -> tuple:
        return self.plan.checkpoints

    @property
    def stream_ids(self) -> np.ndarray:
        return np.arange(self.plan.paths)

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    def row(self, t: int) -> int:
        try:
            return self.checkpoints.index(int(t))
        except ValueError:
            raise KeyError(f"no checkpoint at t={t}") from None

    def sums(self, t: int | None = None) -> np.ndarray:
        """``S_t`` over valid paths (final checkpoint by default)."""
        r = len(self.checkpoints) - 1 if t is None else self.row(t)
        return self.S[r, self.valid]

    def to_csv(self, path, comment: str | None = None) -> None:
        header = ["checkpoint_t", "path_index", "S"] + (["x_state"] if self.X is not None else [])
        rows = []
        for r, t in enumerate(self.checkpoints):
            for i in range(self.plan.paths):
                row = [t, i, float(self.S[r, i])]
                if self.X is not None:
                    row.append(float(self.X[r, i]))
                rows.append(row)
        write_csv(path, header, rows, comment)


@njit(cache=True, nogil=True)
def _simulate_block(mp, sp, x0, seed, start, stop, horizon, ck, S, X, record, fail_step, fail_x):
    nck = ck.shape[0]
    for i in range(start, stop):
        ka, kb = path_keys(seed, np.uint64(i))
        x = x0
        s = 0.0
        c = 0
        for k in range(horizon):
            eps = noise_from_uniform(mp, to_uniform(raw_draw(ka, kb, np.uint64(k))))
            pi = allocate_kernel(sp, mp, x)
            y = step_kernel(mp, x, eps)
            if not np.isfinite(y):
                fail_step[i] = k + 1
                fail_x[i] = x
                break
            s += log_increment_kernel(pi, x, y)
            x = y
            if c < nck and ck[c] == k + 1:
                S[c, i] = s
                if record:
                    X[c, i] = x
                c += 1


@njit(cache=True, nogil=True)
def _trace_kernel(mp, sp, x0, seed, path, horizon, xs, pis, fs):
    ka, kb = path_keys(seed, np.uint64(path))
    xs[0] = x0
    for k in range(horizon):
        x = xs[k]
        eps = noise_from_uniform(mp, to_uniform(raw_draw(ka, kb, np.uint64(k))))
        pis[k] = allocate_kernel(sp, mp, x)
        y = step_kernel(mp, x, eps)
        xs[k + 1] = y
        fs[k] = log_increment_kernel(pis[k], x, y)


def _blocks(n: int, workers: int) -> list[tuple[int, int]]:
    workers = max(1, min(workers, n))
    edges = np.linspace(0, n, workers + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def simulate(plan: SimulationPlan, workers: int = 1) -> PathEnsemble:
    """Run every path of ``plan``; bitwise identical for any ``workers``."""
    m, t_max = plan.paths, plan.horizon
    ck = np.asarray(plan.checkpoints, dtype=np.int64)
    S = np.full((ck.size, m), np.nan)
    X = np.full((ck.size, m), np.nan) if plan.record_states else np.zeros((1, 1))
    fail_step = np.zeros(m, dtype=np.int64)
    fail_x = np.zeros(m)
    mp, sp = plan.model.compiled, plan.strategy.compiled()
    seed = as_seed(plan.seed)
    x0 = float(plan.model.x0)

    def run(block):
        _simulate_block(mp, sp, x0, seed, block[0], block[1], t_max, ck, S, X,
                        plan.record_states, fail_step, fail_x)

    blocks = _blocks(m, workers)
    if len(blocks) == 1:
        run(blocks[0])
    else:
        with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
            list(pool.map(run, blocks))

    bad = np.flatnonzero(fail_step)
    failures = [PathFailure(int(i), int(fail_step[i]), float(fail_x[i])) for i in bad]
    if failures:
        logger.warning("%d of %d paths blew up and are excluded (first: path %d at step %d, x=%r)",
                       len(failures), m, failures[0].path, failures[0].step, failures[0].x)
    return PathEnsemble(plan, S, X if plan.record_states else None, fail_step == 0, failures)


@dataclass(frozen=True)
class PathTrace:
    x: np.ndarray  # X_0 .. X_T
    pi: np.ndarray  # pi(X_{t-1}), t = 1..T
    f: np.ndarray  # f(X_{t-1}, X_t), t = 1..T


def trace_path(model: MarketModel, strategy: Strategy, seed: int, path_index: int,
               horizon: int) -> PathTrace:
    """Full trajectory of one path, drawn from the same stream as ``simulate``."""
    xs = np.empty(horizon + 1)
    pis = np.empty(horizon)
    fs = np.empty(horizon)
    _trace_kernel(model.compiled, strategy.compiled(), float(model.x0), as_seed(seed),
                  path_index, horizon, xs, pis, fs)
    return PathTrace(xs, pis, fs)


def simulate_reference(plan: SimulationPlan) -> np.ndarray:
    """Serial pure-Python replay of ``plan`` returning the ``S`` matrix.

    Slow; meant for cross-checking the compiled engine on small plans.
    """
    model, strategy = plan.model, plan.strategy
    ck = set(plan.checkpoints)
    S = np.full((len(plan.checkpoints), plan.paths), np.nan)
    for i in range(plan.paths):
        u = stream_for_path(plan.seed, i).uniforms(0, plan.horizon)
        x, s, r = float(model.x0), 0.0, 0
        for k in range(plan.horizon):
            pi = allocate(strategy, model, x)
            y = x + float(model.mu(x)) + float(model.sigma(x)) * model.noise_from_uniform(u[k])
            if not math.isfinite(y):
                break
            s += log_increment(pi, x, y)
            x = y
            if k + 1 in ck:
                S[r, i] = s
                r += 1
    return S
