"""Log-price Markov chain ``X_t - X_{t-1} = mu(X_{t-1}) + sigma(X_{t-1}) eps_t``.

Drift and volatility maps are small declarative objects (affine, clamped
square root, piecewise-linear table) so that models serialize to config and
compile to plain arrays for the numba kernels. The scalar kernels defined here
are the single implementation used both from Python and inside the simulation
loops.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from numba import njit
from scipy import stats

from .rng import ndtri

AFFINE, CLAMPED_SQRT, TABLE = 0, 1, 2
GAUSSIAN, TABULATED = 0, 1
QUANTILE_TABLE_SIZE = 4096
UNDERFLOW_FLOOR = -700.0


class ModelBlowUp(FloatingPointError):
    """A step produced a non-finite state."""

    def __init__(self, x: float, message: str = ""):
        self.x = x
        super().__init__(message or f"non-finite state reached from x={x!r}")


class OutOfSupport(ValueError):
    pass


class PriceUnderflowWarning(RuntimeWarning):
    pass


# --------------------------------------------------------------------------
# scalar kernels
#
# A model compiles to one flat float64 array ``mp``:
#   mp[0:6]   drift map block  [kind, p0, p1, p2, data_offset, n]
#   mp[6:12]  vol map block
#   mp[12]    noise kind, mp[13] noise sd, mp[14] centering shift
#   mp[15]    quantile table offset, mp[16] table length
#   mp[HEADER:] table data (grid then values for each map, quantile table)
# --------------------------------------------------------------------------

DRIFT, VOL = 0, 6
HEADER = 17


@njit(cache=True, nogil=True, inline="always")
def eval_map(mp, base, x):
    kind = mp[base]
    if kind == AFFINE:
        return mp[base + 1] + mp[base + 2] * x
    if kind == CLAMPED_SQRT:
        r = math.sqrt(abs(x))
        if r < mp[base + 2]:
            r = mp[base + 2]
        elif r > mp[base + 3]:
            r = mp[base + 3]
        return mp[base + 1] * r
    off = int(mp[base + 4])
    n = int(mp[base + 5])
    ys = off + n
    if n == 1:
        return mp[ys]
    if x <= mp[off]:
        if mp[base + 1] > 0.0:
            return mp[ys] + (mp[ys + 1] - mp[ys]) / (mp[off + 1] - mp[off]) * (x - mp[off])
        return mp[ys]
    last = n - 1
    if x >= mp[off + last]:
        if mp[base + 2] > 0.0:
            slope = (mp[ys + last] - mp[ys + last - 1]) / (mp[off + last] - mp[off + last - 1])
            return mp[ys + last] + slope * (x - mp[off + last])
        return mp[ys + last]
    lo, hi = 0, last
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if mp[off + mid] < x:
            lo = mid
        else:
            hi = mid
    w = (x - mp[off + lo]) / (mp[off + hi] - mp[off + lo])
    return mp[ys + lo] + w * (mp[ys + hi] - mp[ys + lo])


@njit(cache=True, nogil=True)
def _eval_map_array(mp, x, out):
    for i in range(x.shape[0]):
        out[i] = eval_map(mp, 0, x[i])


@njit(cache=True, nogil=True, inline="always")
def vol_at(mp, x):
    return eval_map(mp, VOL, x)


@njit(cache=True, nogil=True, inline="always")
def drift_at(mp, x):
    # centering: mu'(x) = mu(x) + sigma(x) * m
    d = eval_map(mp, DRIFT, x)
    if mp[14] != 0.0:
        d += mp[14] * eval_map(mp, VOL, x)
    return d


@njit(cache=True, nogil=True, inline="always")
def noise_from_uniform(mp, u):
    if mp[12] == GAUSSIAN:
        return mp[13] * ndtri(u)
    off = int(mp[15])
    pos = u * (mp[16] - 1.0)
    j = int(pos)
    w = pos - j
    return mp[off + j] + w * (mp[off + j + 1] - mp[off + j])


@njit(cache=True, nogil=True, inline="always")
def step_kernel(mp, x, eps):
    return x + drift_at(mp, x) + vol_at(mp, x) * eps


# --------------------------------------------------------------------------
# drift / volatility maps
# --------------------------------------------------------------------------

class _MapBase:
    kind: int

    def _params(self) -> tuple:
        raise NotImplementedError

    def _data(self) -> np.ndarray:
        return np.zeros(0)

    def block(self, offset: int) -> np.ndarray:
        """Six-slot header for a map whose table data starts at ``offset``."""
        p0, p1, p2 = self._params()
        data = self._data()
        return np.array([self.kind, p0, p1, p2, offset, data.size // 2])

    @property
    def packed(self) -> np.ndarray:
        mp = self.__dict__.get("_packed")
        if mp is None:
            mp = np.concatenate([self.block(6), self._data()])
            object.__setattr__(self, "_packed", mp)
        return mp

    def __call__(self, x):
        mp = self.packed
        if np.ndim(x) == 0:
            return eval_map(mp, 0, float(x))
        xa = np.ascontiguousarray(x, dtype=float).ravel()
        out = np.empty_like(xa)
        _eval_map_array(mp, xa, out)
        return out.reshape(np.shape(x))


@dataclass(frozen=True)
class AffineMap(_MapBase):
    intercept: float = 0.0
    slope: float = 0.0
    kind = AFFINE

    def _params(self):
        return self.intercept, self.slope, 0.0

    def upper_bound(self) -> float:
        return abs(self.intercept) if self.slope == 0.0 else math.inf

    def to_config(self) -> dict:
        return {"kind": "affine", "intercept": self.intercept, "slope": self.slope}


@dataclass(frozen=True)
class ClampedSqrtMap(_MapBase):
    """``scale * clamp(sqrt|x|, lo, hi)``."""

    scale: float
    lo: float
    hi: float
    kind = CLAMPED_SQRT

    def __post_init__(self):
        if not 0.0 < self.lo < self.hi:
            raise ValueError(f"need 0 < lo < hi, got lo={self.lo}, hi={self.hi}")

    def _params(self):
        return self.scale, self.lo, self.hi

    def upper_bound(self) -> float:
        return abs(self.scale) * self.hi

    def to_config(self) -> dict:
        return {"kind": "clamped_sqrt", "scale": self.scale, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class TableMap(_MapBase):
    """Piecewise-linear interpolation of ``values`` over ``grid``.

    Outside the grid the map is extended either linearly (using the end
    segment) or as a constant, per side.
    """

    grid: tuple
    values: tuple
    extrapolate_left: bool = False
    extrapolate_right: bool = False
    kind = TABLE

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or g.shape != v.shape or g.size < 1:
            raise ValueError("grid and values must be 1-d of equal nonzero length")
        if np.any(np.diff(g) <= 0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("table values must be finite")
        object.__setattr__(self, "grid", tuple(float(a) for a in g))
        object.__setattr__(self, "values", tuple(float(a) for a in v))

    def _params(self):
        return float(self.extrapolate_left), float(self.extrapolate_right), 0.0

    def _data(self):
        return np.concatenate([self.grid, self.values])

    def upper_bound(self) -> float:
        v = np.abs(self.values)
        left_flat = not self.extrapolate_left or len(v) == 1 or self.values[0] == self.values[1]
        right_flat = not self.extrapolate_right or len(v) == 1 or self.values[-1] == self.values[-2]
        return float(v.max()) if (left_flat and right_flat) else math.inf

    def to_config(self) -> dict:
        return {
            "kind": "table",
            "grid": list(self.grid),
            "values": list(self.values),
            "extrapolate_left": self.extrapolate_left,
            "extrapolate_right": self.extrapolate_right,
        }


Map = Union[AffineMap, ClampedSqrtMap, TableMap]


# --------------------------------------------------------------------------
# noise laws
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianNoise:
    sd: float = 1.0
    mean: float = 0.0
    kappa: float | None = None
    I_bound: float | None = None
    kind = GAUSSIAN

    def __post_init__(self):
        if not self.sd > 0:
            raise ValueError(f"sd must be positive, got {self.sd}")
        if self.kappa is None:
            object.__setattr__(self, "kappa", 1.0 / (4.0 * self.sd**2))
        elif not self.kappa > 0:
            raise ValueError("kappa must be positive")

    def centered(self) -> "GaussianNoise":
        return GaussianNoise(self.sd, 0.0, self.kappa, self.I_bound)

    def pdf(self, e):
        return stats.norm.pdf(e, loc=self.mean, scale=self.sd)

    def logpdf(self, e):
        return stats.norm.logpdf(e, loc=self.mean, scale=self.sd)

    @property
    def support(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    def to_config(self) -> dict:
        cfg = {"kind": "gaussian", "sd": self.sd, "mean": self.mean, "kappa": self.kappa}
        if self.I_bound is not None:
            cfg["I_bound"] = self.I_bound
        return cfg


@dataclass(frozen=True)
class TabulatedNoise:
    """Noise law given by density values on a grid.

    Sampling goes through a 4096-point inverse-CDF table with linear
    interpolation; ``mean`` is the exact mean of that sampler.
    """

    points: tuple
    density: tuple
    kappa: float = 0.25
    I_bound: float | None = None
    kind = TABULATED
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        x = np.asarray(self.points, dtype=float)
        d = np.asarray(self.density, dtype=float)
        if x.ndim != 1 or x.shape != d.shape or x.size < 3:
            raise ValueError("points and density must be 1-d of equal length >= 3")
        if np.any(np.diff(x) <= 0):
            raise ValueError("points must be strictly increasing")
        if not np.all(np.isfinite(d)) or np.any(d <= 0):
            raise ValueError("tabulated density must be finite and strictly positive")
        object.__setattr__(self, "points", tuple(float(a) for a in x))
        object.__setattr__(self, "density", tuple(float(a) for a in d))
        mass = np.trapezoid(d, x)
        dn = d / mass
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dn[1:] + dn[:-1]) * np.diff(x))])
        cdf /= cdf[-1]
        u = np.linspace(0.0, 1.0, QUANTILE_TABLE_SIZE)
        q = np.interp(u, cdf, x)
        n = QUANTILE_TABLE_SIZE - 1
        self._cache.update(x=x, dn=dn, q=q, mean=float((q.sum() - 0.5 * (q[0] + q[-1])) / n))

    @property
    def mean(self) -> float:
        return self._cache["mean"]

    @property
    def sd(self) -> float:
        q = self._cache["q"]
        mid = 0.5 * (q[1:] + q[:-1])
        # second moment of the piecewise-uniform sampler
        m2 = np.mean(mid**2 + (np.diff(q) ** 2) / 12.0)
        return float(math.sqrt(max(m2 - self.mean**2, 0.0)))

    @property
    def support(self) -> tuple[float, float]:
        return (self.points[0], self.points[-1])

    def centered(self) -> "TabulatedNoise":
        m = self.mean
        return TabulatedNoise(tuple(p - m for p in self.points), self.density, self.kappa, self.I_bound)

    def pdf(self, e):
        x, dn = self._cache["x"], self._cache["dn"]
        e = np.asarray(e, dtype=float)
        if np.any((e < x[0]) | (e > x[-1])):
            raise OutOfSupport(f"noise argument outside tabulated grid [{x[0]}, {x[-1]}]")
        out = np.interp(e, x, dn)
        return float(out) if out.ndim == 0 else out

    def logpdf(self, e):
        x = self._cache["x"]
        e = np.asarray(e, dtype=float)
        inside = (e >= x[0]) & (e <= x[-1])
        out = np.full(e.shape, -np.inf)
        out[inside] = np.log(np.interp(e[inside], x, self._cache["dn"]))
        return float(out) if out.ndim == 0 else out

    def table(self) -> np.ndarray:
        return self._cache["q"]

    def to_config(self) -> dict:
        cfg = {"kind": "tabulated", "points": list(self.points), "density": list(self.density),
               "kappa": self.kappa}
        if self.I_bound is not None:
            cfg["I_bound"] = self.I_bound
        return cfg


NoiseSpec = Union[GaussianNoise, TabulatedNoise]


# --------------------------------------------------------------------------
# model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MarketModel:
    """Log-price chain with drift map, volatility map, noise law and start value.

    A noise law with nonzero mean ``m`` is re-centered at construction: the
    sampler uses ``eps - m`` and the drift becomes ``mu(x) + sigma(x) * m``.
    The applied shift is kept in ``centering_shift``.
    """

    drift: Map
    vol: Map
    noise: NoiseSpec = field(default_factory=GaussianNoise)
    x0: float = 0.0
    name: str = "custom"
    builtin: tuple = ()

    def __post_init__(self):
        if not math.isfinite(self.x0):
            raise ValueError("x0 must be finite")
        m = float(self.noise.mean)
        object.__setattr__(self, "centering_shift", m)
        object.__setattr__(self, "centered_noise", self.noise.centered() if m != 0.0 else self.noise)
        nz = self.centered_noise
        d_data, v_data = self.drift._data(), self.vol._data()
        table = np.asarray(nz.table(), dtype=float) if nz.kind == TABULATED else np.zeros(0)
        off_v = HEADER + d_data.size
        off_n = off_v + v_data.size
        head = np.concatenate([
            self.drift.block(HEADER), self.vol.block(off_v),
            [nz.kind, float(nz.sd) if nz.kind == GAUSSIAN else 1.0, m, off_n, table.size],
        ])
        mp = np.ascontiguousarray(np.concatenate([head, d_data, v_data, table]))
        object.__setattr__(self, "compiled", mp)

    @property
    def vol_bound(self) -> float:
        """Global upper bound M on the volatility map (inf when unbounded)."""
        return self.vol.upper_bound()

    def mu(self, x):
        """Effective (centered) drift."""
        d = self.drift(x)
        if self.centering_shift != 0.0:
            d = d + self.centering_shift * self.vol(x)
        return d

    def sigma(self, x):
        return self.vol(x)

    def step(self, x: float, eps: float) -> float:
        return step(self, x, eps)

    def noise_from_uniform(self, u: float) -> float:
        return noise_from_uniform(self.compiled, u)

    def with_x0(self, x0: float) -> "MarketModel":
        return MarketModel(self.drift, self.vol, self.noise, x0, self.name, self.builtin)


def step(model: MarketModel, x: float, eps: float) -> float:
    """One transition ``x + mu(x) + sigma(x) * eps``."""
    y = step_kernel(model.compiled, float(x), float(eps))
    if not math.isfinite(y):
        raise ModelBlowUp(x)
    return y


def price(x: float) -> float:
    """Stock price ``exp(x)`` from a log-price."""
    if x < UNDERFLOW_FLOOR:
        warnings.warn(f"price underflow at log-price {x!r}; returning 0", PriceUnderflowWarning)
        return 0.0
    try:
        return math.exp(x)
    except OverflowError:
        raise OverflowError(f"price overflow at log-price {x!r}") from None


def transition_density(model: MarketModel, x: float, y: float) -> float:
    """One-step transition density ``p(x, y) = gamma((y - x - mu(x)) / sigma(x)) / sigma(x)``."""
    s = float(model.sigma(x))
    e = (y - x - float(model.mu(x))) / s
    return float(model.centered_noise.pdf(e)) / s


# --------------------------------------------------------------------------
# built-in models
# --------------------------------------------------------------------------


def stable_ar(alpha: float, x0: float = 0.0, sd: float = 1.0) -> MarketModel:
    """``X_{t+1} = alpha X_t + eps``: drift ``(alpha - 1) x``, unit volatility."""
    if not (0.0 < abs(alpha) < 1.0):
        raise ValueError(f"stable AR needs 0 < |alpha| < 1, got {alpha}")
    return MarketModel(AffineMap(0.0, alpha - 1.0), AffineMap(1.0, 0.0), GaussianNoise(sd), x0,
                       "stable_ar", (("alpha", alpha), ("sd", sd)))


def clamped_cir(alpha: float, sigma0: float, c1: float, c2: float, x0: float = 0.0) -> MarketModel:
    """AR drift with volatility ``sigma0 * clamp(sqrt|x|, c1, c2)``."""
    if not abs(alpha) < 1.0:
        raise ValueError(f"clamped CIR needs |alpha| < 1, got {alpha}")
    if not sigma0 > 0:
        raise ValueError("sigma0 must be positive")
    return MarketModel(AffineMap(0.0, alpha - 1.0), ClampedSqrtMap(sigma0, c1, c2), GaussianNoise(1.0),
                       x0, "clamped_cir", (("alpha", alpha), ("sigma0", sigma0), ("c1", c1), ("c2", c2)))


def drifted_walk(m: float, x0: float = 0.0, sd: float = 1.0) -> MarketModel:
    """Random walk with constant drift ``m`` and centered Gaussian noise."""
    return MarketModel(AffineMap(m, 0.0), AffineMap(1.0, 0.0), GaussianNoise(sd), x0,
                       "drifted_walk", (("m", m), ("sd", sd)))


BUILTINS = {"stable_ar": stable_ar, "clamped_cir": clamped_cir, "drifted_walk": drifted_walk}
