"""Counter-based random streams.

Every draw is a pure function of ``(seed, path, step)``: no generator state is
carried between calls, so simulations are reproducible under any partition of
paths across workers.

The bit source is two rounds of the SplitMix64 finalizer keyed by a pair of
per-path 64-bit keys. Uniforms use the top 53 bits shifted to the open
interval (0, 1). Normals use Wichura's AS241 (PPND16) rational approximation of
the standard normal quantile, so each normal costs exactly one uniform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

_MASK64 = (1 << 64) - 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_PATH_SALT_A = np.uint64(0x632BE59BD9B4E019)
_PATH_SALT_B = np.uint64(0x85157AF5D1E2C4B3)
_S11 = np.uint64(11)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True, nogil=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def path_keys(seed, path):
    """Two independent 64-bit keys for path ``path`` under ``seed``."""
    s = mix64(seed ^ _PATH_SALT_A)
    p = mix64((path + _ONE) * _GOLDEN)
    key_a = mix64(s + p)
    key_b = mix64(key_a ^ mix64(p ^ _PATH_SALT_B) ^ s)
    return key_a, key_b


@njit(cache=True, nogil=True)
def raw_draw(key_a, key_b, step):
    z = mix64(key_a + (step + _ONE) * _GOLDEN)
    return mix64(z ^ key_b)


@njit(cache=True, nogil=True)
def to_uniform(z):
    return (np.float64(z >> _S11) + 0.5) * _INV53


@njit(cache=True, nogil=True)
def ndtri(p):
    """Standard normal quantile, Wichura (1988) algorithm AS241 / PPND16.

    Relative accuracy is about 1e-16 on (0, 1).
    """
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    r = p if q < 0.0 else 1.0 - p
    r = np.sqrt(-np.log(r))
    if r <= 5.0:
        r -= 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r -= 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    val = num / den
    return -val if q < 0.0 else val


@njit(cache=True, nogil=True)
def _fill_uniforms(key_a, key_b, start, out):
    for j in range(out.shape[0]):
        out[j] = to_uniform(raw_draw(key_a, key_b, np.uint64(start + j)))


@njit(cache=True, nogil=True)
def _fill_normals(key_a, key_b, start, out):
    for j in range(out.shape[0]):
        out[j] = ndtri(to_uniform(raw_draw(key_a, key_b, np.uint64(start + j))))


def as_seed(seed: int) -> np.uint64:
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.uint64(int(seed) & _MASK64)


@dataclass(frozen=True)
class NoiseStream:
    """Stateless view of the draws owned by one path."""

    seed: int
    path: int

    @property
    def keys(self) -> tuple[np.uint64, np.uint64]:
        a, b = path_keys(as_seed(self.seed), np.uint64(self.path))
        return np.uint64(a), np.uint64(b)

    def uniform(self, step: int) -> float:
        return float(self.uniforms(step, 1)[0])

    def normal(self, step: int) -> float:
        return float(self.normals(step, 1)[0])

    def uniforms(self, start: int, n: int) -> np.ndarray:
        out = np.empty(n)
        a, b = self.keys
        _fill_uniforms(a, b, start, out)
        return out

    def normals(self, start: int, n: int) -> np.ndarray:
        out = np.empty(n)
        a, b = self.keys
        _fill_normals(a, b, start, out)
        return out


def stream_for_path(seed: int, path_index: int) -> NoiseStream:
    """Return the noise stream of path ``path_index``.

    The k-th draw depends only on ``(seed, path_index, k)``.
    """
    if path_index < 0:
        raise ValueError("path_index must be non-negative")
    return NoiseStream(int(seed), int(path_index))
