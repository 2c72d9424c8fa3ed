"""Tiny tanh MLP trained with ADAM, usable per sample or as a 1x1-conv net on moment tensors.

Parameters live in one flat float64 buffer; weight matrices and bias vectors
are views into it, which keeps the ADAM update a handful of array ops.
"""

from __future__ import annotations

import math
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, IntegrityError, ParameterError, TrainingDiverged
from .features import SyntheticSamples, pooled_moment_tensor
from .gi0 import ALPHA_MIN, PAPER_ALPHAS, Gi0Params, _draw
from .numerics import RngStream

HIDDEN = (8, 4)
ACTIVATIONS = ("tanh", "tanh", "id")
FORMAT_MAGIC = "GI0NN 1"
PAPER_KERNELS = (2, 5, 8, 11)
CONV_CHUNK = 1 << 18


@dataclass
class ModelMeta:
    nm: int
    looks: int = 1
    amin: float = ALPHA_MIN
    amax: float = -1.5
    kernels: tuple[int, ...] = ()
    seed: int = 0
    raster: tuple[int, int] | None = None  # (width, height) of map-training rasters


def _n_params(sizes):
    return sum(sizes[q + 1] * sizes[q] + sizes[q + 1] for q in range(len(sizes) - 1))


def _views(flat: np.ndarray, sizes) -> list[tuple[np.ndarray, np.ndarray]]:
    layers = []
    pos = 0
    for q in range(len(sizes) - 1):
        rows, cols = sizes[q + 1], sizes[q]
        W = flat[pos:pos + rows * cols].reshape(rows, cols)
        pos += rows * cols
        b = flat[pos:pos + rows]
        pos += rows
        layers.append((W, b))
    return layers


@dataclass(eq=False)
class MlpModel:
    layer_sizes: tuple[int, ...]
    params: np.ndarray
    meta: ModelMeta

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) != 4 or self.layer_sizes[1:] != HIDDEN + (1,):
            raise ParameterError(f"layer sizes must be (N_m, 8, 4, 1), got {self.layer_sizes}")
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.shape != (_n_params(self.layer_sizes),):
            raise ParameterError("parameter buffer does not match the layer sizes")
        if not np.all(np.isfinite(self.params)):
            raise ParameterError("model parameters must be finite")

    @property
    def nm(self) -> int:
        return self.layer_sizes[0]

    @property
    def layers(self):
        return _views(self.params, self.layer_sizes)

    @property
    def weights(self):
        return [W for W, _ in self.layers]

    @property
    def biases(self):
        return [b for _, b in self.layers]

    def copy(self) -> "MlpModel":
        return MlpModel(self.layer_sizes, self.params.copy(), ModelMeta(**vars(self.meta)))


def init_model(stream: RngStream, nm: int, meta: ModelMeta | None = None) -> MlpModel:
    """Xavier-uniform weights, zero biases."""
    sizes = (nm,) + HIDDEN + (1,)
    params = np.zeros(_n_params(sizes))
    for (W, _), fan_in, fan_out in zip(_views(params, sizes), sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        W[...] = stream.uniform(W.shape) * (2 * bound) - bound
    return MlpModel(sizes, params, meta or ModelMeta(nm=nm))


def _forward_rows(layers, X):
    h = X
    last = len(layers) - 1
    for q, (W, b) in enumerate(layers):
        h = h @ W.T + b
        if q < last:
            h = np.tanh(h)
    return h[:, 0]


def forward(model: MlpModel, x):
    """Network output for one moment vector, or for a stack of shape ``(..., N_m)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (model.nm,):
        raise ParameterError(f"input has {x.shape[-1:] or 'no'} features, model expects {model.nm}")
    out = _forward_rows(model.layers, x.reshape(-1, model.nm))
    if x.ndim == 1:
        return float(out[0])
    return out.reshape(x.shape[:-1])


def conv_forward(model: MlpModel, tensor: np.ndarray) -> np.ndarray:
    """Apply the MLP as a stack of 1x1 convolutions to a ``(N_m, h, w)`` tensor."""
    tensor = np.asarray(tensor, dtype=np.float64)
    if tensor.ndim != 3 or tensor.shape[0] != model.nm:
        raise ParameterError(f"tensor shape {tensor.shape} does not have {model.nm} channels")
    nm, h, w = tensor.shape
    flat = tensor.reshape(nm, h * w)
    out = np.empty(h * w)
    layers = model.layers
    last = len(layers) - 1
    for start in range(0, h * w, CONV_CHUNK):
        a = flat[:, start:start + CONV_CHUNK]
        for q, (W, b) in enumerate(layers):
            a = W @ a
            a += b[:, None]
            if q < last:
                np.tanh(a, out=a)
        out[start:start + CONV_CHUNK] = a[0]
    return out.reshape(h, w)


def _backward_into(layers, grad_layers, X, y):
    acts = [X]
    h = X
    last = len(layers) - 1
    for q, (W, b) in enumerate(layers):
        h = h @ W.T + b
        if q < last:
            h = np.tanh(h)
            acts.append(h)
    resid = h[:, 0] - y
    loss = float(resid @ resid) / y.size
    delta = (2.0 / y.size) * resid[:, None]
    for q in range(last, -1, -1):
        gW, gb = grad_layers[q]
        np.matmul(delta.T, acts[q], out=gW)
        np.sum(delta, axis=0, out=gb)
        if q:
            a = acts[q]
            delta = (delta @ layers[q][0]) * (1.0 - a * a)
    return loss


def backward(model: MlpModel, inputs, targets) -> tuple[float, np.ndarray]:
    """Batch-mean squared error and its exact gradient (flat, same layout as ``params``)."""
    X = np.asarray(inputs, dtype=np.float64).reshape(-1, model.nm)
    y = np.asarray(targets, dtype=np.float64).ravel()
    if y.size == 0 or y.size != X.shape[0]:
        raise ParameterError("batch must be nonempty with one target per input")
    grad = np.zeros_like(model.params)
    loss = _backward_into(model.layers, _views(grad, model.layer_sizes), X, y)
    return loss, grad


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, params: np.ndarray, lr: float = 0.001) -> "AdamState":
        return cls(np.zeros_like(params), np.zeros_like(params), lr=lr)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected ADAM update, applied in place; returns ``(params, state)``."""
    state.step += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grads
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1**state.step)
    v_hat = state.v / (1.0 - state.beta2**state.step)
    params -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


@dataclass
class TrainReport:
    epoch_mse: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)  # cumulative wall clock
    seconds: float = 0.0
    checksum: str = ""

    @property
    def epochs(self) -> int:
        return len(self.epoch_mse)

    @property
    def final_mse(self) -> float:
        return self.epoch_mse[-1]


def fit(
    model: MlpModel,
    inputs: np.ndarray,
    targets: np.ndarray,
    stream: RngStream,
    epochs: int = 300,
    batch: int = 32,
    lr: float = 0.001,
) -> TrainReport:
    """Shuffled mini-batch ADAM on the mean squared error, updating ``model`` in place.

    ``inputs`` has shape ``(items, N_m)`` or ``(items, pixels, N_m)`` with
    ``targets`` of shape ``(items,)`` or ``(items, pixels)``.  A batch holds
    ``batch`` items; every pixel of an item contributes to the loss.  The
    epoch MSE is the item-weighted mean of the batch losses.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    n = targets.shape[0]
    if n == 0:
        raise ParameterError("training set is empty")
    if inputs.shape[0] != n or inputs.shape[-1] != model.nm:
        raise ParameterError("inputs and targets disagree in shape")
    if epochs < 1 or batch < 1:
        raise ParameterError("epochs and batch must be positive")
    items = inputs.reshape(n, -1, model.nm)
    labels = targets.reshape(n, -1)
    layers = model.layers
    grad = np.zeros_like(model.params)
    grad_layers = _views(grad, model.layer_sizes)
    state = AdamState.like(model.params, lr)
    report = TrainReport()
    t0 = time.perf_counter()
    for epoch in range(epochs):
        order = stream.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, batch)):
            idx = order[start:start + batch]
            X = items[idx].reshape(-1, model.nm)
            y = labels[idx].ravel()
            loss = _backward_into(layers, grad_layers, X, y)
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, b, loss)
            adam_step(model.params, grad, state)
            total += loss * idx.size
        report.epoch_mse.append(total / n)
        report.epoch_seconds.append(time.perf_counter() - t0)
    if not np.all(np.isfinite(model.params)):
        raise TrainingDiverged(epochs - 1, -1, float("nan"))
    report.seconds = time.perf_counter() - t0
    report.checksum = model_checksum(model)
    return report


def train_sample_estimator(
    stream: RngStream,
    moments: np.ndarray,
    targets: np.ndarray,
    epochs: int = 300,
    batch: int = 32,
    lr: float = 0.001,
    meta: ModelMeta | None = None,
) -> tuple[MlpModel, TrainReport]:
    """Fit an MLP on ``(moment vector, alpha)`` pairs."""
    moments = np.asarray(moments, dtype=np.float64)
    if moments.ndim != 2:
        raise ParameterError("moments must have shape (items, N_m)")
    targets = np.asarray(targets, dtype=np.float64)
    nm = moments.shape[1]
    if meta is None:
        meta = ModelMeta(nm=nm, amin=float(targets.min()), amax=float(targets.max()), seed=stream.seed)
    model = init_model(stream.split(0), nm, meta)
    report = fit(model, moments, targets, stream.split(1), epochs, batch, lr)
    return model, report


def map_training_set(
    stream: RngStream,
    alphas: Sequence[float],
    kernels: Sequence[int],
    width: int,
    height: int,
    repeats: int,
    looks: int,
    order: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Pooled-moment training rasters, ``(items, h*w, order)`` inputs and ``(items, h*w)`` targets.

    Item ``j`` runs over (alpha, kernel, repeat) in that nesting and is
    drawn from ``stream.split(j)``; its border is padded with fresh draws from
    the raster's own law.
    """
    if not alphas or not kernels or repeats < 1:
        raise ParameterError("alpha grid, kernel set and repeats must be nonempty")
    total = len(alphas) * len(kernels) * repeats
    pixels = width * height
    inputs = np.empty((total, pixels, order))
    targets = np.empty((total, pixels))
    j = 0
    for a in alphas:
        p = Gi0Params.unit_mean(a, looks)
        for k in kernels:
            for _ in range(repeats):
                s = stream.split(j)
                raster = _draw(s, p, pixels).reshape(height, width)
                tensor = pooled_moment_tensor(raster, order, k, SyntheticSamples(p, s))
                inputs[j] = tensor.reshape(order, pixels).T
                targets[j] = a
                j += 1
    return inputs, targets


def train_map_estimator(
    stream: RngStream,
    alphas: Sequence[float] = PAPER_ALPHAS,
    kernels: Sequence[int] = PAPER_KERNELS,
    width: int = 10,
    height: int = 10,
    repeats: int = 1000,
    epochs: int = 300,
    looks: int = 1,
    order: int = 2,
    batch: int = 32,
    lr: float = 0.001,
) -> tuple[MlpModel, TrainReport]:
    """Fit the roughness-map network on synthetic single-law rasters; a batch is ``batch`` rasters."""
    alphas = [float(a) for a in alphas]
    kernels = [int(k) for k in kernels]
    inputs, targets = map_training_set(stream.split(2), alphas, kernels, width, height, repeats, looks, order)
    meta = ModelMeta(
        nm=order,
        looks=looks,
        amin=min(alphas),
        amax=max(alphas),
        kernels=tuple(kernels),
        seed=stream.seed,
        raster=(width, height),
    )
    model = init_model(stream.split(0), order, meta)
    report = fit(model, inputs, targets, stream.split(1), epochs, batch, lr)
    return model, report


# ---------------------------------------------------------------------------
# model files


def _fmt(x: float) -> str:
    return "%.17g" % x


def format_model(model: MlpModel) -> str:
    m = model.meta
    meta = (
        f"meta nm={m.nm} looks={m.looks} amin={m.amin!r} amax={m.amax!r} "
        f"kernels={','.join(str(k) for k in m.kernels)} seed={m.seed}"
    )
    if m.raster is not None:
        meta += f" raster={m.raster[0]}x{m.raster[1]}"
    lines = [
        FORMAT_MAGIC,
        "layers " + " ".join(str(s) for s in model.layer_sizes),
        "act " + " ".join(ACTIVATIONS),
        meta,
    ]
    for W, b in model.layers:
        lines.append(f"W {W.shape[0]} {W.shape[1]}")
        lines.extend(" ".join(_fmt(v) for v in row) for row in W)
        lines.append(f"b {b.size}")
        lines.append(" ".join(_fmt(v) for v in b))
    body = "\n".join(lines) + "\n"
    return body + f"crc32 {zlib.crc32(body.encode('ascii')):08x}\n"


def model_checksum(model: MlpModel) -> str:
    return f"{zlib.crc32(format_model(model).encode('ascii')):08x}"


def _parse_meta(tokens, lineno):
    fields = {}
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep:
            raise FormatError(f"line {lineno}: malformed meta entry {tok!r}")
        fields[key] = value
    try:
        raster = None
        if "raster" in fields:
            w, h = fields.pop("raster").split("x")
            raster = (int(w), int(h))
        kernels = fields.pop("kernels")
        meta = ModelMeta(
            nm=int(fields.pop("nm")),
            looks=int(fields.pop("looks")),
            amin=float(fields.pop("amin")),
            amax=float(fields.pop("amax")),
            kernels=tuple(int(k) for k in kernels.split(",")) if kernels else (),
            seed=int(fields.pop("seed")),
            raster=raster,
        )
    except (KeyError, ValueError) as exc:
        raise FormatError(f"line {lineno}: bad meta line ({exc})") from None
    if fields:
        raise FormatError(f"line {lineno}: unknown meta keys {sorted(fields)}")
    return meta


def _floats(line, count, lineno):
    try:
        values = [float(t) for t in line.split()]
    except ValueError:
        raise FormatError(f"line {lineno}: expected {count} numbers") from None
    if len(values) != count:
        raise FormatError(f"line {lineno}: expected {count} numbers, found {len(values)}")
    return values


def parse_model(text: str) -> MlpModel:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError("empty model file")
    if lines[0] != FORMAT_MAGIC:
        if lines[0].startswith("GI0NN"):
            raise FormatError(f"line 1: unsupported model format version {lines[0]!r}")
        raise FormatError("line 1: not a GI0NN model file")

    def line(i):
        if i >= len(lines):
            raise FormatError(f"line {i + 1}: unexpected end of file")
        return lines[i]

    tokens = line(1).split()
    if tokens[:1] != ["layers"]:
        raise FormatError("line 2: expected 'layers'")
    try:
        sizes = tuple(int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError("line 2: layer sizes must be integers") from None
    if len(sizes) != 4 or sizes[1:] != HIDDEN + (1,) or sizes[0] < 1:
        raise FormatError(f"line 2: layer sizes must be 'N_m 8 4 1', got {line(1)!r}")
    if line(2).split() != ["act", *ACTIVATIONS]:
        raise FormatError(f"line 3: expected 'act {' '.join(ACTIVATIONS)}'")
    tokens = line(3).split()
    if tokens[:1] != ["meta"]:
        raise FormatError("line 4: expected 'meta'")
    meta = _parse_meta(tokens[1:], 4)
    if meta.nm != sizes[0]:
        raise FormatError("line 4: meta nm disagrees with the input layer size")

    params = []
    i = 4
    for q in range(3):
        rows, cols = sizes[q + 1], sizes[q]
        if line(i).split() != ["W", str(rows), str(cols)]:
            raise FormatError(f"line {i + 1}: expected 'W {rows} {cols}'")
        i += 1
        for _ in range(rows):
            params.extend(_floats(line(i), cols, i + 1))
            i += 1
        if line(i).split() != ["b", str(rows)]:
            raise FormatError(f"line {i + 1}: expected 'b {rows}'")
        params.extend(_floats(line(i + 1), rows, i + 2))
        i += 2
    tokens = line(i).split()
    if len(tokens) != 2 or tokens[0] != "crc32":
        raise FormatError(f"line {i + 1}: expected 'crc32 <hex>'")
    if i + 1 != len(lines):
        raise FormatError(f"line {i + 2}: trailing content after checksum")
    body = "".join(l + "\n" for l in lines[:i])
    if f"{zlib.crc32(body.encode('ascii')):08x}" != tokens[1].lower():
        raise IntegrityError("model checksum mismatch")
    try:
        return MlpModel(sizes, np.array(params), meta)
    except ParameterError as exc:
        raise FormatError(str(exc)) from None


def save_model(model: MlpModel, path) -> None:
    Path(path).write_bytes(format_model(model).encode("ascii"))


def load_model(path) -> MlpModel:
    try:
        text = Path(path).read_bytes().decode("ascii")
    except UnicodeDecodeError:
        raise FormatError(f"{path}: not an ASCII model file") from None
    return parse_model(text)
