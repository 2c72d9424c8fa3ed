"""Roughness estimators: log-cumulants, maximum likelihood, and the trained network.

Every estimator returns an :class:`EstimationOutcome`.  An estimate counts as
a success only when its solver converged and it lies in ``[-15, -1.5]``.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DomainError, ParameterError
from .features import PaddingPolicy, compute_moments, pooled_moment_tensor
from .gi0 import SampleSet
from .network import MlpModel, conv_forward, forward
from .numerics import digamma, ln_gamma, trigamma

VALID_MIN = -15.0
VALID_MAX = -1.5
START_ALPHA = -1.0001
LCUM_BRACKET = (1.0001, 1e6)
ROBUST_BRACKET = (-15.0, -1.0001)


class Status(str, enum.Enum):
    SUCCESS = "Success"
    OUT_OF_RANGE = "OutOfRange"
    NO_CONVERGENCE = "NoConvergence"
    DEGENERATE_INPUT = "DegenerateInput"

    def __str__(self):
        return self.value


@dataclass
class EstimationOutcome:
    alpha_hat: float | None
    status: Status
    iterations: int = 0
    elapsed: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status is Status.SUCCESS


def _classify(alpha_hat: float) -> Status:
    if VALID_MIN <= alpha_hat <= VALID_MAX:
        return Status.SUCCESS
    return Status.OUT_OF_RANGE


def _values(sample) -> np.ndarray:
    if isinstance(sample, SampleSet):
        return sample.values
    values = np.asarray(sample, dtype=np.float64).ravel()
    if values.size == 0 or not np.all(values > 0) or not np.all(np.isfinite(values)):
        raise DomainError("sample must be nonempty, finite and strictly positive")
    return values


def _check_looks(looks):
    if int(looks) != looks or looks < 1:
        raise DomainError("looks must be a positive integer")
    return int(looks)


def lcum_alpha(kappa2: float, looks: int) -> tuple[float | None, Status, int]:
    """Invert ``trigamma(L) + trigamma(-alpha) = kappa2`` by bisection on ``-alpha``."""
    target = kappa2 - trigamma(float(looks))
    if not target > 0:
        return None, Status.DEGENERATE_INPUT, 0
    lo, hi = LCUM_BRACKET
    if target >= trigamma(lo):
        return -lo, Status.OUT_OF_RANGE, 0
    if target <= trigamma(hi):
        return -hi, Status.OUT_OF_RANGE, 0
    it = 0
    while hi - lo > 1e-13 * hi and it < 200:
        mid = 0.5 * (lo + hi)
        if trigamma(mid) > target:
            lo = mid
        else:
            hi = mid
        it += 1
    alpha = -0.5 * (lo + hi)
    return alpha, _classify(alpha), it


def estimate_lcum(sample, looks: int) -> EstimationOutcome:
    """Method of log-cumulants: match the sample log-variance."""
    t0 = time.perf_counter()
    looks = _check_looks(looks)
    logs = np.log(_values(sample))
    centered = logs - logs.mean()
    kappa2 = float(centered @ centered) / logs.size
    alpha, status, it = lcum_alpha(kappa2, looks)
    return EstimationOutcome(alpha, status, it, time.perf_counter() - t0)


def mean_log_likelihood(alpha, z: np.ndarray, looks: int):
    """Per-sample log-likelihood at ``alpha`` with the unit-mean tie; ``alpha`` may be an array."""
    a = np.asarray(alpha, dtype=np.float64)
    g = -a - 1.0
    L = float(looks)
    const = L * math.log(L) + ln_gamma(L - a) - a * np.log(g) - ln_gamma(-a) - ln_gamma(L)
    mean_log_z = np.log(z).mean()
    tail = np.log(g[..., None] + L * z).mean(axis=-1) if a.ndim else np.log(g + L * z).mean()
    out = const + (L - 1.0) * mean_log_z + (a - L) * tail
    return float(out) if a.ndim == 0 else out


def _score(alpha: float, z: np.ndarray, looks: int) -> tuple[float, float]:
    # first and second derivative of the mean log-likelihood in alpha (gamma = -alpha - 1)
    L = float(looks)
    g = -alpha - 1.0
    s = g + L * z
    inv = 1.0 / s
    d1 = (
        digamma(-alpha) - digamma(L - alpha) - math.log(g) + alpha / g
        + np.log(s).mean() - (alpha - L) * inv.mean()
    )
    d2 = (
        trigamma(L - alpha) - trigamma(-alpha) + 1.0 / g - 1.0 / (g * g)
        - 2.0 * inv.mean() - (alpha - L) * (inv * inv).mean()
    )
    return float(d1), float(d2)


def _mle_paper(z, looks, max_iter=100):
    alpha = START_ALPHA
    for it in range(1, max_iter + 1):
        d1, d2 = _score(alpha, z, looks)
        if not (math.isfinite(d1) and math.isfinite(d2)) or d2 == 0.0:
            return alpha, Status.NO_CONVERGENCE, it
        if abs(d1) * z.size < 1e-8:
            return alpha, _classify(alpha), it - 1
        alpha -= d1 / d2
        if not -1e6 < alpha < -1.0:
            return alpha, Status.NO_CONVERGENCE, it
    return alpha, Status.NO_CONVERGENCE, max_iter


def _mle_robust(z, looks):
    lo, hi = ROBUST_BRACKET
    coarse = np.linspace(lo, hi, 57)
    ll = mean_log_likelihood(coarse, z, looks)
    best = int(np.argmax(ll))
    a, b = coarse[max(best - 1, 0)], coarse[min(best + 1, coarse.size - 1)]
    res = minimize_scalar(
        lambda x: -mean_log_likelihood(x, z, looks),
        bounds=(a, b),
        method="bounded",
        options={"xatol": 1e-9},
    )
    alpha = float(res.x)
    # a maximizer pinned to the bracket end means the likelihood wants to go further
    for end in (lo, hi):
        if abs(alpha - end) < 1e-6:
            return end, Status.OUT_OF_RANGE, int(res.nfev)
    return alpha, _classify(alpha), int(res.nfev)


def estimate_mle(sample, looks: int, mode: str = "robust") -> EstimationOutcome:
    """One-parameter MLE of alpha on the unit-mean-normalized sample.

    ``mode="paper"`` runs Newton's method on the score from alpha = -1.0001
    (at most 100 iterations); ``mode="robust"`` maximizes the likelihood over
    ``[-15, -1.0001]`` with a coarse scan followed by bounded Brent.
    """
    t0 = time.perf_counter()
    looks = _check_looks(looks)
    z = _values(sample)
    z = z / z.mean()
    if mode == "paper":
        alpha, status, it = _mle_paper(z, looks)
    elif mode == "robust":
        alpha, status, it = _mle_robust(z, looks)
    else:
        raise ParameterError(f"unknown MLE mode {mode!r}")
    return EstimationOutcome(alpha, status, it, time.perf_counter() - t0)


def mle_grid_argmax(sample, looks: int, step: float = 0.001) -> float:
    """Brute-force likelihood maximizer over ``[-15, -1.0001]`` on a regular grid."""
    z = _values(sample)
    z = z / z.mean()
    lo, hi = ROBUST_BRACKET
    grid = np.append(np.arange(lo, hi, step), hi)
    best, best_ll = lo, -math.inf
    for chunk in np.array_split(grid, max(1, grid.size * z.size // 2_000_000)):
        ll = mean_log_likelihood(chunk, z, looks)
        i = int(np.argmax(ll))
        if ll[i] > best_ll:
            best, best_ll = float(chunk[i]), float(ll[i])
    return best


def estimate_nn(model: MlpModel, sample) -> EstimationOutcome:
    """Feed the sample's log-moments through the trained network."""
    t0 = time.perf_counter()
    alpha = forward(model, compute_moments(_values(sample), model.nm))
    status = _classify(alpha) if math.isfinite(alpha) else Status.OUT_OF_RANGE
    return EstimationOutcome(alpha, status, 0, time.perf_counter() - t0)


class MapTiming(NamedTuple):
    moments: float
    inference: float

    @property
    def total(self) -> float:
        return self.moments + self.inference


def estimate_map(
    model: MlpModel, raster: np.ndarray, kernel: int, pad: PaddingPolicy | None = None
) -> tuple[np.ndarray, MapTiming]:
    """Per-pixel roughness map of a positive raster.  Values are not clipped."""
    t0 = time.perf_counter()
    tensor = pooled_moment_tensor(raster, model.nm, kernel, pad)
    t1 = time.perf_counter()
    rmap = conv_forward(model, tensor)
    t2 = time.perf_counter()
    return rmap, MapTiming(t1 - t0, t2 - t1)
