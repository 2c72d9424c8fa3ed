"""Monte Carlo comparison of roughness estimators on synthetic G_I^0 samples."""

from __future__ import annotations

import csv
import logging
import zlib
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ParameterError
from .estimators import EstimationOutcome, Status, estimate_lcum, estimate_mle, estimate_nn
from .gi0 import ALPHA_MAX, ALPHA_MIN, Gi0Params, _draw
from .network import MlpModel, load_model
from .numerics import RngStream

log = logging.getLogger(__name__)

BUILTIN = ("lcum", "mle", "mle-robust")
HEADER = ["estimator", "alpha", "L", "n", "value"]
COUNTS_HEADER = ["estimator", "alpha", "L", "n", "status", "count"]


@dataclass
class BenchConfig:
    alphas: Sequence[float] = (-1.5, -7.0, -15.0)
    looks: Sequence[int] = (1, 3, 8)
    sizes: Sequence[int] = (9, 25, 49, 121, 1000)
    trials: int = 1000
    seed: int = 0
    estimators: Sequence[str] = ("nn2", "nn4", "lcum", "mle")
    # network estimator name -> model files (or loaded models), one per number of looks
    models: Mapping[str, Sequence] = field(default_factory=dict)
    debug: bool = False


@dataclass
class CellResult:
    estimator: str
    alpha: float
    looks: int
    n: int
    mse: float | None
    failure_rate: float
    counts: dict[str, int]
    mean_elapsed: float = field(default=0.0, compare=False)  # wall clock, never reproducible

    @property
    def trials(self) -> int:
        return sum(self.counts.values())

    @property
    def successes(self) -> int:
        return self.counts.get(Status.SUCCESS.value, 0)


@dataclass
class BenchResult:
    cells: list[CellResult] = field(default_factory=list)
    checksums: dict = field(default_factory=dict)  # debug only: (estimator, cell, trial) -> crc32

    def cell(self, estimator: str, alpha: float, looks: int, n: int) -> CellResult:
        for c in self.cells:
            if (c.estimator, c.alpha, c.looks, c.n) == (estimator, alpha, looks, n):
                return c
        raise KeyError((estimator, alpha, looks, n))

    def __eq__(self, other):
        return isinstance(other, BenchResult) and self.cells == other.cells


def _resolve_models(config: BenchConfig) -> dict[str, dict[int, MlpModel]]:
    resolved = {}
    for name in config.estimators:
        if name in BUILTIN:
            continue
        if name not in config.models:
            raise ParameterError(f"estimator {name!r} is neither built in nor given a model")
        by_looks = {}
        for entry in config.models[name]:
            model = entry if isinstance(entry, MlpModel) else load_model(entry)
            by_looks[model.meta.looks] = model
        missing = sorted(set(config.looks) - set(by_looks))
        if missing:
            raise ParameterError(f"estimator {name!r} has no model for looks {missing}")
        resolved[name] = by_looks
    return resolved


def _validate(config: BenchConfig):
    if config.trials < 1:
        raise ParameterError("trials must be at least 1")
    if not all(ALPHA_MIN <= a <= ALPHA_MAX for a in config.alphas):
        raise ParameterError(f"bench alphas must lie in [{ALPHA_MIN}, {ALPHA_MAX}]")
    if not all(int(L) == L and L >= 1 for L in config.looks):
        raise ParameterError("looks must be positive integers")
    if not all(int(n) == n and n >= 1 for n in config.sizes):
        raise ParameterError("sample sizes must be positive integers")
    if len(set(config.estimators)) != len(config.estimators):
        raise ParameterError("duplicate estimator names")


def _estimator_fn(name: str, models, looks: int) -> Callable[[np.ndarray], EstimationOutcome]:
    if name == "lcum":
        return lambda z: estimate_lcum(z, looks)
    if name == "mle":
        return lambda z: estimate_mle(z, looks, "paper")
    if name == "mle-robust":
        return lambda z: estimate_mle(z, looks, "robust")
    model = models[name][looks]
    return lambda z: estimate_nn(model, z)


def cell_index(config: BenchConfig):
    """Cells in export order with their RNG index: alpha-major, then looks, then size."""
    i = 0
    for a in config.alphas:
        for L in config.looks:
            for n in config.sizes:
                yield i, float(a), int(L), int(n)
                i += 1


def _run_cell(config: BenchConfig, models, c: int, alpha: float, looks: int, n: int):
    p = Gi0Params.unit_mean(alpha, looks)
    fns = {name: _estimator_fn(name, models, looks) for name in config.estimators}
    outcomes = {name: [] for name in config.estimators}
    checksums = {}
    cell_stream = RngStream(config.seed).split(c)
    for t in range(config.trials):
        z = _draw(cell_stream.split(t), p, n)
        for name, fn in fns.items():
            if config.debug:
                z_seen = z.copy()
                checksums[(name, c, t)] = zlib.crc32(z_seen.tobytes())
                log.debug("%s cell=%d trial=%d sample crc32=%08x", name, c, t, checksums[(name, c, t)])
                outcomes[name].append(fn(z_seen))
            else:
                outcomes[name].append(fn(z))
    cells = [_aggregate(name, alpha, looks, n, outcomes[name]) for name in config.estimators]
    return cells, checksums


def run_bench(config: BenchConfig, workers: int = 1) -> BenchResult:
    """Run every (alpha, L, n) cell; all estimators in a trial see the same draw.

    Trial ``t`` of cell ``c`` draws from ``RngStream(seed).split(c).split(t)``.
    MSE uses successful trials only and is ``None`` when none succeeded.
    With ``workers > 1`` cells run in separate processes; results are still
    collected in cell order, so the output does not depend on ``workers``.
    """
    _validate(config)
    if workers < 1:
        raise ParameterError("workers must be at least 1")
    models = _resolve_models(config)
    cells = list(cell_index(config))
    if workers == 1:
        parts = [_run_cell(config, models, *cell) for cell in cells]
    else:
        with ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(_run_cell, config, models, *cell) for cell in cells]
            parts = [f.result() for f in futures]
    result = BenchResult()
    for cell_results, checksums in parts:
        result.cells.extend(cell_results)
        result.checksums.update(checksums)
    return result


def _aggregate(name, alpha, looks, n, outs: list[EstimationOutcome]) -> CellResult:
    counts = Counter(str(o.status) for o in outs)
    good = np.array([o.alpha_hat for o in outs if o.ok])
    mse = float(np.mean((good - alpha) ** 2)) if good.size else None
    failure = 100.0 * (len(outs) - good.size) / len(outs)
    elapsed = float(np.mean([o.elapsed for o in outs]))
    ordered = {s.value: counts[s.value] for s in Status if counts[s.value]}
    return CellResult(name, alpha, looks, n, mse, failure, ordered, elapsed)


def _num(x) -> str:
    return "" if x is None else repr(float(x))


def export_tables(result: BenchResult, path) -> list[Path]:
    """Write ``mse.csv``, ``failure_rates.csv``, ``timing.csv`` and ``counts.csv`` into ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    tables = {
        "mse.csv": lambda c: c.mse,
        "failure_rates.csv": lambda c: c.failure_rate,
        "timing.csv": lambda c: c.mean_elapsed,
    }
    written = []
    for fname, getter in tables.items():
        with open(out / fname, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HEADER)
            for c in result.cells:
                w.writerow([c.estimator, _num(c.alpha), c.looks, c.n, _num(getter(c))])
        written.append(out / fname)
    with open(out / "counts.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COUNTS_HEADER)
        for c in result.cells:
            for status, count in c.counts.items():
                w.writerow([c.estimator, _num(c.alpha), c.looks, c.n, status, count])
    written.append(out / "counts.csv")
    return written


def _read(path, header):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != header:
        raise ValueError(f"{path}: unexpected header")
    return rows[1:]


def read_tables(path) -> BenchResult:
    """Rebuild a :class:`BenchResult` from the files written by :func:`export_tables`."""
    base = Path(path)
    keys = []
    values = {}
    for fname in ("mse.csv", "failure_rates.csv", "timing.csv"):
        for est, a, L, n, v in _read(base / fname, HEADER):
            key = (est, float(a), int(L), int(n))
            if fname == "mse.csv":
                keys.append(key)
            values[(fname, key)] = float(v) if v else None
    counts = {k: {} for k in keys}
    for est, a, L, n, status, count in _read(base / "counts.csv", COUNTS_HEADER):
        counts[(est, float(a), int(L), int(n))][status] = int(count)
    cells = [
        CellResult(
            *k,
            mse=values[("mse.csv", k)],
            failure_rate=values[("failure_rates.csv", k)],
            mean_elapsed=values[("timing.csv", k)],
            counts=counts[k],
        )
        for k in keys
    ]
    return BenchResult(cells)


def summary(result: BenchResult) -> str:
    lines = [f"{'estimator':<12} {'alpha':>6} {'L':>2} {'n':>5} {'mse':>10} {'fail%':>7} {'ms':>8}"]
    for c in result.cells:
        mse = "-" if c.mse is None else f"{c.mse:.4f}"
        lines.append(
            f"{c.estimator:<12} {c.alpha:>6g} {c.looks:>2} {c.n:>5} {mse:>10} "
            f"{c.failure_rate:>7.2f} {1e3 * c.mean_elapsed:>8.3f}"
        )
    return "\n".join(lines)
