"""Special functions and random sampling primitives.

The log-gamma, digamma and trigamma functions are implemented here rather
than taken from libm/scipy so results are identical on every platform.  All
three accept scalars or numpy arrays and reduce small arguments upward with
the recurrence before applying an asymptotic series at ``x >= 10``.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError

__all__ = [
    "RngStream",
    "ln_gamma",
    "digamma",
    "trigamma",
    "sample_gamma",
]

_SHIFT_TO = 10.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# Stirling series coefficients B_{2k} / (2k (2k-1)) for k = 1..7
_STIRLING = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
)
# B_{2k} / (2k) for k = 1..7
_DIGAMMA_SERIES = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)
# B_{2k} for k = 1..7
_TRIGAMMA_SERIES = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
)


def _checked(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(arr > 0):  # also rejects NaN
        raise DomainError(f"{name} requires x > 0")
    return arr


def _out(arr, like):
    if np.ndim(like) == 0:
        return float(arr)
    return arr


def _poly(coeffs, r2):
    # sum_k coeffs[k] * r2**k, Horner from the highest order
    acc = np.zeros_like(r2)
    for c in reversed(coeffs):
        acc = acc * r2 + c
    return acc


def ln_gamma(x):
    """Natural log of the gamma function for ``x > 0``."""
    x = _checked(x, "ln_gamma")
    y = x.copy()
    log_prod = np.zeros_like(y)
    prod = np.ones_like(y)
    while True:
        small = y < _SHIFT_TO
        if not small.any():
            break
        prod = np.where(small, prod * y, prod)
        y = np.where(small, y + 1.0, y)
        # keep the running product well inside float range
        big = prod > 1e150
        if big.any():
            log_prod = np.where(big, log_prod + np.log(prod), log_prod)
            prod = np.where(big, 1.0, prod)
    log_prod = log_prod + np.log(prod)
    r = 1.0 / y
    series = r * _poly(_STIRLING, r * r)
    result = (y - 0.5) * np.log(y) - y + _HALF_LOG_2PI + series - log_prod
    return _out(result, x)


def digamma(x):
    """Digamma function psi(x) = d/dx log Gamma(x) for ``x > 0``."""
    x = _checked(x, "digamma")
    y = x.copy()
    shift = np.zeros_like(y)
    while True:
        small = y < _SHIFT_TO
        if not small.any():
            break
        shift = np.where(small, shift + 1.0 / y, shift)
        y = np.where(small, y + 1.0, y)
    r2 = 1.0 / (y * y)
    result = np.log(y) - 0.5 / y - r2 * _poly(_DIGAMMA_SERIES, r2) - shift
    return _out(result, x)


def trigamma(x):
    """Trigamma function psi'(x) for ``x > 0``."""
    x = _checked(x, "trigamma")
    y = x.copy()
    shift = np.zeros_like(y)
    while True:
        small = y < _SHIFT_TO
        if not small.any():
            break
        shift = np.where(small, shift + 1.0 / (y * y), shift)
        y = np.where(small, y + 1.0, y)
    r = 1.0 / y
    r2 = r * r
    result = r + 0.5 * r2 + r * r2 * _poly(_TRIGAMMA_SERIES, r2) + shift
    return _out(result, x)


class RngStream:
    """Seeded, splittable pseudorandom stream.

    Backed by PCG64 seeded through ``numpy.random.SeedSequence``; a child
    created with :meth:`split` is keyed by the parent's key plus the index,
    so children with distinct indices are independent and reproducible no
    matter in which order they are created or consumed.
    """

    def __init__(self, seed: int, key: tuple[int, ...] = ()):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        self.seed = seed
        self.key = tuple(int(k) for k in key)
        seq = np.random.SeedSequence(seed, spawn_key=self.key)
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, key={self.key})"

    def split(self, index: int) -> "RngStream":
        if index < 0:
            raise DomainError("split index must be nonnegative")
        return RngStream(self.seed, self.key + (index,))

    def uniform(self, size=None):
        """Uniform draws on [0, 1)."""
        return self._gen.random(size)

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size)


def _marsaglia_tsang(stream: RngStream, shape: float, n: int) -> np.ndarray:
    # requires shape >= 1; unit rate
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    out = np.empty(n)
    pending = np.arange(n)
    while pending.size:
        m = pending.size
        x = stream.normal(m)
        u = stream.uniform(m)
        v = 1.0 + c * x
        ok = v > 0
        v = np.where(ok, v * v * v, 1.0)
        x2 = x * x
        squeeze = u < 1.0 - 0.0331 * x2 * x2
        with np.errstate(divide="ignore"):
            full = np.log(u) < 0.5 * x2 + d * (1.0 - v + np.log(v))
        accept = ok & (squeeze | full)
        out[pending[accept]] = d * v[accept]
        pending = pending[~accept]
    return out


def sample_gamma(stream: RngStream, shape: float, rate: float, size=None):
    """Draw from Gamma(shape, rate), density ``rate^a x^(a-1) e^(-rate x) / Gamma(a)``.

    Uses the Marsaglia-Tsang squeeze method.  For ``shape < 1`` a draw at
    ``shape + 1`` is scaled by ``U ** (1 / shape)``.  Returns a float when
    ``size`` is None, else an array of that size.
    """
    if not (shape > 0 and rate > 0):
        raise DomainError("sample_gamma requires shape > 0 and rate > 0")
    n = 1 if size is None else int(np.prod(size))
    if shape < 1.0:
        g = _marsaglia_tsang(stream, shape + 1.0, n)
        g *= stream.uniform(n) ** (1.0 / shape)
    else:
        g = _marsaglia_tsang(stream, shape, n)
    g /= rate
    if size is None:
        return float(g[0])
    return g.reshape(size)
