"""The G_I^0 intensity distribution: density, sampling and synthetic data.

Rasters are plain 2-D float arrays indexed ``[row, col]``, i.e. shape
``(height, width)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import DomainError, SpecError
from .numerics import RngStream, digamma, ln_gamma, sample_gamma, trigamma

ALPHA_MIN = -15.0
ALPHA_MAX = -1.0001

# A = {-15, -13.5, ..., -1.5}
PAPER_ALPHAS = tuple(-15.0 + 1.5 * i for i in range(10))
PAPER_SIZES = (100, 1000, 10000)


@dataclass(frozen=True)
class Gi0Params:
    """One G_I^0 law: roughness ``alpha``, scale ``gamma`` and looks ``L``."""

    alpha: float
    gamma: float
    looks: int

    def __post_init__(self):
        if not (ALPHA_MIN <= self.alpha <= ALPHA_MAX):
            raise DomainError(f"alpha={self.alpha} outside [{ALPHA_MIN}, {ALPHA_MAX}]")
        if not self.gamma > 0:
            raise DomainError(f"gamma={self.gamma} must be positive")
        if int(self.looks) != self.looks or self.looks < 1:
            raise DomainError(f"looks={self.looks} must be a positive integer")

    @classmethod
    def unit_mean(cls, alpha: float, looks: int) -> "Gi0Params":
        """Parameters with the scale tied so that E[Z] = 1."""
        return cls(alpha, tie_gamma(alpha), looks)


@dataclass
class SampleSet:
    values: np.ndarray
    truth: Gi0Params | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.values.size == 0:
            raise DomainError("sample set is empty")
        if not np.all(self.values > 0) or not np.all(np.isfinite(self.values)):
            raise DomainError("sample values must be finite and strictly positive")

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class Region:
    """Half-open rectangle ``[x0, x1) x [y0, y1)`` with its roughness."""

    x0: int
    y0: int
    x1: int
    y1: int
    alpha: float


@dataclass
class MosaicSpec:
    width: int
    height: int
    regions: list[Region] = field(default_factory=list)
    looks: int = 1

    def validate(self):
        if self.width < 1 or self.height < 1:
            raise SpecError("mosaic dimensions must be positive")
        if self.looks < 1:
            raise SpecError("looks must be a positive integer")
        if not self.regions:
            raise SpecError("mosaic has no regions")
        cover = np.zeros((self.height, self.width), dtype=np.int64)
        for r in self.regions:
            if not (0 <= r.x0 < r.x1 <= self.width and 0 <= r.y0 < r.y1 <= self.height):
                raise SpecError(f"region {r} falls outside the {self.width}x{self.height} raster")
            if not (ALPHA_MIN <= r.alpha <= ALPHA_MAX):
                raise SpecError(f"region alpha {r.alpha} outside [{ALPHA_MIN}, {ALPHA_MAX}]")
            cover[r.y0:r.y1, r.x0:r.x1] += 1
        if cover.max() > 1:
            raise SpecError("mosaic regions overlap")
        if cover.min() < 1:
            raise SpecError("mosaic regions do not cover the raster")


def tie_gamma(alpha: float) -> float:
    """Scale giving a unit-mean law for roughness ``alpha``: ``-alpha - 1``."""
    if not alpha < -1:
        raise DomainError("tie_gamma requires alpha < -1")
    return -alpha - 1.0


def _log_density(z, alpha, gamma, looks):
    # no validation; used by the estimators at trial parameters
    L = float(looks)
    const = (
        L * math.log(L)
        + ln_gamma(L - alpha)
        - alpha * math.log(gamma)
        - ln_gamma(-alpha)
        - ln_gamma(L)
    )
    return const + (L - 1.0) * np.log(z) + (alpha - L) * np.log(gamma + L * z)


def log_density(z, p: Gi0Params):
    """Log of the G_I^0 density at ``z`` (scalar or array)."""
    z_arr = np.asarray(z, dtype=np.float64)
    if not np.all(z_arr > 0):
        raise DomainError("log_density requires z > 0")
    out = _log_density(z_arr, p.alpha, p.gamma, p.looks)
    return float(out) if np.ndim(z) == 0 else out


def density(z, p: Gi0Params):
    return np.exp(log_density(z, p))


def _draw(stream: RngStream, p: Gi0Params, n: int) -> np.ndarray:
    speckle = sample_gamma(stream, p.looks, p.looks, n)
    texture = sample_gamma(stream, -p.alpha, p.gamma, n)
    return speckle / texture


def sample(stream: RngStream, p: Gi0Params, n: int) -> SampleSet:
    """Draw ``n`` values Z = X / Y' with X ~ Gamma(L, L), Y' ~ Gamma(-alpha, gamma)."""
    if n < 1:
        raise DomainError("sample size must be at least 1")
    return SampleSet(_draw(stream, p, n), p)


def theoretical_log_cumulants(p: Gi0Params) -> tuple[float, float]:
    """Mean and variance of log Z."""
    L = float(p.looks)
    k1 = digamma(L) - math.log(L) - digamma(-p.alpha) + math.log(p.gamma)
    k2 = trigamma(L) + trigamma(-p.alpha)
    return k1, k2


def _dataset_layout(alphas, sizes, repeats):
    alphas = [float(a) for a in alphas]
    sizes = [int(s) for s in sizes]
    if not alphas or not sizes:
        raise DomainError("alpha grid and size set must be nonempty")
    if repeats < 1:
        raise DomainError("repeats must be at least 1")
    if min(sizes) < 1:
        raise DomainError("sample sizes must be positive")
    return alphas, sizes


def iter_sample_dataset(
    stream: RngStream, alphas: Sequence[float], sizes: Sequence[int], repeats: int, looks: int
) -> Iterator[SampleSet]:
    """Yield the dataset in generation order (alpha-major, then size, then repeat).

    Item ``j`` is drawn from ``stream.split(j)``, so any item can be
    regenerated on its own.
    """
    alphas, sizes = _dataset_layout(alphas, sizes, repeats)
    j = 0
    for a in alphas:
        p = Gi0Params.unit_mean(a, looks)
        for s in sizes:
            for _ in range(repeats):
                yield SampleSet(_draw(stream.split(j), p, s), p)
                j += 1


def dataset_order(stream: RngStream, total: int) -> np.ndarray:
    """Shuffled positions: entry ``i`` of the dataset is generated item ``order[i]``."""
    return stream.split(total).permutation(total)


def generate_sample_dataset(
    stream: RngStream,
    alphas: Sequence[float] = PAPER_ALPHAS,
    sizes: Sequence[int] = PAPER_SIZES,
    repeats: int = 1000,
    looks: int = 1,
) -> list[SampleSet]:
    """``repeats`` sample sets for every (alpha, size) pair, deterministically shuffled."""
    items = list(iter_sample_dataset(stream, alphas, sizes, repeats, looks))
    return [items[i] for i in dataset_order(stream, len(items))]


def generate_mosaic(stream: RngStream, spec: MosaicSpec) -> np.ndarray:
    """Raster whose region ``i`` holds i.i.d. unit-mean G_I^0 draws, from ``stream.split(i)``."""
    spec.validate()
    raster = np.empty((spec.height, spec.width))
    for i, r in enumerate(spec.regions):
        p = Gi0Params.unit_mean(r.alpha, spec.looks)
        shape = (r.y1 - r.y0, r.x1 - r.x0)
        raster[r.y0:r.y1, r.x0:r.x1] = _draw(stream.split(i), p, shape[0] * shape[1]).reshape(shape)
    return raster


def two_region_spec(width: int, height: int, left_alpha: float, right_alpha: float, looks: int = 1) -> MosaicSpec:
    """Vertical split into a left and a right half."""
    half = width // 2
    return MosaicSpec(
        width,
        height,
        [Region(0, 0, half, height, left_alpha), Region(half, 0, width, height, right_alpha)],
        looks,
    )
