"""Sample log-moments for sample sets and per-pixel pooled log-moments for rasters."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, ParameterError
from .gi0 import Gi0Params, SampleSet, _draw, _dataset_layout, dataset_order, iter_sample_dataset
from .numerics import RngStream

SMALLEST_INTENSITY = np.finfo(np.float64).tiny


def _values(sample) -> np.ndarray:
    if isinstance(sample, SampleSet):
        return sample.values
    values = np.asarray(sample, dtype=np.float64).ravel()
    if values.size == 0:
        raise DomainError("sample is empty")
    return values


def compute_moments(sample, order: int) -> np.ndarray:
    """Log-moments ``mean((log z)**m)`` for ``m = 1..order``.

    The logs are sorted before summation so the result is bit-identical under
    any permutation of the sample.
    """
    if order < 1:
        raise ParameterError("moment order must be at least 1")
    values = _values(sample)
    if not np.all(values > 0):
        raise DomainError("log-moments need strictly positive values")
    logs = np.sort(np.log(values))
    out = np.empty(order)
    power = logs.copy()
    for m in range(order):
        out[m] = power.sum() / logs.size
        if m + 1 < order:
            power *= logs
    return out


def moment_dataset(
    stream: RngStream,
    alphas: Sequence[float],
    sizes: Sequence[int],
    repeats: int,
    looks: int,
    order: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Moments and targets of ``generate_sample_dataset`` without keeping the samples.

    Returns ``(moments, alphas)`` of shapes ``(N, order)`` and ``(N,)`` in the
    same shuffled order as ``generate_sample_dataset(stream, ...)``.
    """
    alphas, sizes = _dataset_layout(alphas, sizes, repeats)
    total = len(alphas) * len(sizes) * repeats
    moments = np.empty((total, order))
    targets = np.empty(total)
    for j, s in enumerate(iter_sample_dataset(stream, alphas, sizes, repeats, looks)):
        moments[j] = compute_moments(s, order)
        targets[j] = s.truth.alpha
    perm = dataset_order(stream, total)
    return moments[perm], targets[perm]


class PaddingPolicy:
    """How the raster border is extended before window pooling."""

    def pad(self, raster: np.ndarray, before: int, after: int) -> np.ndarray:
        raise NotImplementedError


class Reflect(PaddingPolicy):
    """Mirror the raster about its edges (edge pixels repeated)."""

    def pad(self, raster, before, after):
        return np.pad(raster, ((before, after), (before, after)), mode="symmetric")

    def __repr__(self):
        return "Reflect()"


class Replicate(PaddingPolicy):
    def pad(self, raster, before, after):
        return np.pad(raster, ((before, after), (before, after)), mode="edge")

    def __repr__(self):
        return "Replicate()"


@dataclass
class SyntheticSamples(PaddingPolicy):
    """Fill the padding ring with fresh draws from a G_I^0 law."""

    params: Gi0Params
    stream: RngStream

    def pad(self, raster, before, after):
        h, w = raster.shape
        out = _draw(self.stream, self.params, (h + before + after) * (w + before + after))
        out = out.reshape(h + before + after, w + before + after)
        out[before:before + h, before:before + w] = raster
        return out


def clamp_zeros(raster: np.ndarray) -> tuple[np.ndarray, int]:
    """Replace zero pixels with the smallest positive double; returns the clamped count."""
    raster = np.asarray(raster, dtype=np.float64)
    if np.any(raster < 0) or not np.all(np.isfinite(raster)):
        raise DomainError("raster pixels must be finite and nonnegative")
    zeros = raster == 0
    count = int(zeros.sum())
    if count:
        raster = np.where(zeros, SMALLEST_INTENSITY, raster)
    return raster, count


def window_offsets(kernel: int) -> tuple[int, int]:
    """Rows/cols of the window before and after its anchor pixel.

    Even windows are top-left biased: the window of pixel ``i`` spans
    ``i - k//2 .. i + k//2 - 1``.
    """
    return kernel // 2, (kernel - 1) // 2


def box_mean(stack: np.ndarray, kernel: int) -> np.ndarray:
    """Mean over every ``kernel x kernel`` window of the last two axes ("valid" mode).

    Windowed sums come from prefix sums along each axis (an integral image
    taken one axis at a time), so cost does not depend on ``kernel``.  Each
    2-D slice is centered first to keep the prefix sums small.
    """
    stack = np.asarray(stack, dtype=np.float64)
    center = stack.mean(axis=(-2, -1), keepdims=True)
    x = stack - center
    lead = x.shape[:-2]
    rows, cols = x.shape[-2:]
    csum = np.zeros(lead + (rows + 1, cols))
    np.cumsum(x, axis=-2, out=csum[..., 1:, :])
    x = csum[..., kernel:, :] - csum[..., :-kernel, :]
    csum = np.zeros(lead + (x.shape[-2], cols + 1))
    np.cumsum(x, axis=-1, out=csum[..., :, 1:])
    x = csum[..., :, kernel:] - csum[..., :, :-kernel]
    x /= kernel * kernel
    x += center
    return x


def pooled_moment_tensor(
    raster: np.ndarray, order: int, kernel: int, pad: PaddingPolicy | None = None
) -> np.ndarray:
    """Per-pixel windowed log-moments, shape ``(order, height, width)``.

    Channel ``m - 1`` at ``(i, j)`` is the mean of ``(log I)**m`` over the
    ``kernel x kernel`` window anchored at ``(i, j)``.  The raster is padded
    by ``pad`` (``Reflect`` by default) so the output keeps the raster's size.
    The padding ring may be at most as wide as the raster itself.
    """
    raster = np.asarray(raster, dtype=np.float64)
    if raster.ndim != 2:
        raise ParameterError("raster must be two-dimensional")
    if order < 1:
        raise ParameterError("moment order must be at least 1")
    h, w = raster.shape
    if kernel < 1 or kernel > 2 * min(h, w) + 1:
        raise ParameterError(f"kernel {kernel} invalid for a {w}x{h} raster")
    if not np.all(raster > 0):
        raise DomainError("pooled moments need strictly positive pixels")
    before, after = window_offsets(kernel)
    padded = (pad or Reflect()).pad(raster, before, after)
    logs = np.log(padded)
    powers = np.empty((order,) + logs.shape)
    powers[0] = logs
    for m in range(1, order):
        np.multiply(powers[m - 1], logs, out=powers[m])
    return box_mean(powers, kernel)

