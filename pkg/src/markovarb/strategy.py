"""Stationary Markovian allocation maps and the wealth recursion.

A strategy maps the previous log-price to the fraction of wealth held in the
stock, in [0, 1]. Wealth evolves by ``V_t / V_{t-1} = (1 - pi) + pi * S_t / S_{t-1}``
and is tracked primarily in log space as the running sum of
``f(x, y) = log((1 - pi(x)) + pi(x) * exp(y - x))``.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, replace
from typing import Union

import numpy as np
from numba import njit

from .model import MarketModel, drift_at

POSITIVE_DRIFT, CONSTANT, TABLE = 0, 1, 2

# A strategy compiles to a flat array ``sp = [kind, fraction, n_edges, edges..., fractions...]``.


@njit(cache=True, nogil=True, inline="always")
def allocate_kernel(sp, mp, x):
    kind = sp[0]
    if kind == POSITIVE_DRIFT:
        return 1.0 if drift_at(mp, x) > 0.0 else 0.0
    if kind == CONSTANT:
        return sp[1]
    n = int(sp[2])
    j = 0
    while j < n and sp[3 + j] <= x:
        j += 1
    return sp[3 + n + j]


@njit(cache=True, nogil=True, inline="always")
def log_increment_kernel(pi_x, x, y):
    d = y - x
    if pi_x == 1.0:
        return d
    if pi_x == 0.0:
        return 0.0
    if d > 30.0:
        return d + math.log(pi_x + (1.0 - pi_x) * math.exp(-d))
    return math.log1p(pi_x * math.expm1(d))


@dataclass(frozen=True)
class PositiveDriftIndicator:
    """``pi+(x) = 1`` exactly when the model drift is strictly positive."""

    def compiled(self):
        return np.array([POSITIVE_DRIFT, 0.0, 0.0])

    def to_config(self) -> dict:
        return {"kind": "positive_drift"}


@dataclass(frozen=True)
class Constant:
    fraction: float

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"fraction must lie in [0, 1], got {self.fraction}")

    def compiled(self):
        return np.array([CONSTANT, float(self.fraction), 0.0])

    def to_config(self) -> dict:
        return {"kind": "constant", "fraction": self.fraction}


@dataclass(frozen=True)
class FullInvest:
    def compiled(self):
        return np.array([CONSTANT, 1.0, 0.0])

    def to_config(self) -> dict:
        return {"kind": "full_invest"}


@dataclass(frozen=True)
class TableStrategy:
    """Piecewise-constant allocation.

    ``fractions[0]`` applies on ``(-inf, edges[0])``, ``fractions[i]`` on
    ``[edges[i-1], edges[i])`` and ``fractions[-1]`` on ``[edges[-1], inf)``.
    """

    edges: tuple
    fractions: tuple

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        f = np.asarray(self.fractions, dtype=float)
        if e.ndim != 1 or f.shape != (e.size + 1,):
            raise ValueError("need len(fractions) == len(edges) + 1")
        if np.any(np.diff(e) <= 0):
            raise ValueError("edges must be strictly increasing")
        if np.any((f < 0) | (f > 1)):
            raise ValueError("fractions must lie in [0, 1]")
        object.__setattr__(self, "edges", tuple(float(a) for a in e))
        object.__setattr__(self, "fractions", tuple(float(a) for a in f))

    def compiled(self):
        return np.concatenate([[TABLE, 0.0, len(self.edges)], self.edges, self.fractions])

    def to_config(self) -> dict:
        return {"kind": "table", "edges": list(self.edges), "fractions": list(self.fractions)}


Strategy = Union[PositiveDriftIndicator, Constant, FullInvest, TableStrategy]


def allocate(strategy: Strategy, model: MarketModel, x: float) -> float:
    return float(allocate_kernel(strategy.compiled(), model.compiled, float(x)))


def log_increment(pi_x: float, x: float, y: float) -> float:
    """Per-step log-wealth increment ``log((1 - pi) + pi * exp(y - x))``."""
    if not 0.0 <= pi_x <= 1.0:
        raise ValueError(f"allocation must lie in [0, 1], got {pi_x}")
    return float(log_increment_kernel(float(pi_x), float(x), float(y)))


@dataclass(frozen=True)
class WealthState:
    """Wealth ``v`` together with its log-space twin ``log_sum = log(v / v0)``.

    ``log_only`` is raised once ``v`` left the representable range; from then
    on ``v`` is clamped and ``log_sum`` is authoritative.
    """

    v: float
    log_sum: float = 0.0
    v0: float | None = None
    log_only: bool = False

    def __post_init__(self):
        if self.v0 is None:
            object.__setattr__(self, "v0", self.v)
        if not (self.v > 0 and self.v0 > 0):
            raise ValueError("wealth must be positive")

    @property
    def log_wealth(self) -> float:
        return math.log(self.v0) + self.log_sum


def wealth_step(state: WealthState, pi_x: float, x: float, y: float) -> WealthState:
    inc = log_increment(pi_x, x, y)
    log_sum = state.log_sum + inc
    log_only = state.log_only
    if not log_only:
        with np.errstate(over="ignore"):
            factor = (1.0 - pi_x) + pi_x * math.exp(min(y - x, 709.0))
        v = state.v * factor
        if not (math.isfinite(v) and v >= sys.float_info.min) or y - x > 709.0:
            log_only = True
    if log_only:
        lw = state.log_wealth - state.log_sum + log_sum
        v = math.exp(min(max(lw, math.log(sys.float_info.min)), math.log(sys.float_info.max)))
    return replace(state, v=v, log_sum=log_sum, log_only=log_only)
