"""Command-line interface.

Exit codes: 0 success, 2 usage/config error, 3 data or format error,
4 numerical abort (diverged training).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path


from . import bench, formats
from .errors import DomainError, FormatError, Gi0Error, ParameterError, SpecError, TrainingDiverged
from .estimators import estimate_lcum, estimate_map, estimate_mle, estimate_nn, mle_grid_argmax
from .features import Reflect, Replicate, clamp_zeros, moment_dataset
from .gi0 import ALPHA_MAX, ALPHA_MIN, PAPER_ALPHAS, PAPER_SIZES, Gi0Params, generate_mosaic, sample, tie_gamma
from .network import PAPER_KERNELS, ModelMeta, load_model, save_model, train_map_estimator, train_sample_estimator
from .numerics import RngStream

log = logging.getLogger("gi0net")

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class UsageError(Gi0Error):
    pass


# ---------------------------------------------------------------------------
# configuration

def _floats(text):
    return [float(t) for t in str(text).split(",") if t.strip()]


def _ints(text):
    return [int(t) for t in str(text).split(",") if t.strip()]


def _names(text):
    return [t.strip() for t in str(text).split(",") if t.strip()]


SAMPLE_DEFAULTS = dict(
    alphas=list(PAPER_ALPHAS), sizes=list(PAPER_SIZES), repeats=1000, epochs=300,
    batch=32, lr=0.001, looks=1, seed=0, nm=2,
)
MAP_DEFAULTS = dict(
    alphas=list(PAPER_ALPHAS), kernels=list(PAPER_KERNELS), width=10, height=10, repeats=1000,
    epochs=300, batch=32, lr=0.001, looks=1, seed=0, nm=2,
)
BENCH_DEFAULTS = dict(
    alphas=[-1.5, -7.0, -15.0], looks=[1, 3, 8], sizes=[9, 25, 49, 121, 1000], trials=1000,
    seed=0, estimators=["nn2", "nn4", "lcum", "mle"], models=[],
)
PARSERS = dict(
    alphas=_floats, sizes=_ints, kernels=_ints, repeats=int, epochs=int, batch=int, lr=float,
    seed=int, nm=int, width=int, height=int, trials=int, estimators=_names, models=_names,
)


def _settings(args, defaults: dict, list_looks: bool = False) -> dict:
    """Defaults, overridden by the config file, overridden by explicit flags."""
    parsers = dict(PARSERS, looks=_ints if list_looks else int)
    settings = dict(defaults)
    try:
        if args.config:
            for key, raw in formats.read_config(args.config, set(defaults)).items():
                settings[key] = parsers[key](raw)
        for key in defaults:
            flag = getattr(args, key, None)
            if flag is not None:
                settings[key] = parsers[key](flag) if isinstance(flag, str) else flag
    except ValueError as exc:
        raise UsageError(f"bad configuration value: {exc}") from None
    return settings


def _check_alphas(alphas):
    if not alphas:
        raise UsageError("alpha grid is empty")
    bad = [a for a in alphas if not ALPHA_MIN <= a <= ALPHA_MAX]
    if bad:
        raise UsageError(f"alphas {bad} outside [{ALPHA_MIN}, {ALPHA_MAX}]")


def _check_positive(settings, *keys):
    for key in keys:
        value = settings[key]
        values = value if isinstance(value, list) else [value]
        if not values or any(v <= 0 for v in values):
            raise UsageError(f"{key} must be positive")


# ---------------------------------------------------------------------------
# commands

def cmd_gen_samples(args):
    gamma = tie_gamma(args.alpha) if args.gamma is None else args.gamma
    try:
        p = Gi0Params(args.alpha, gamma, args.looks)
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    s = sample(RngStream(args.seed), p, args.n)
    formats.write_samples(s, args.output)
    print(f"wrote {len(s)} samples to {args.output} (seed={args.seed})")


def cmd_gen_mosaic(args):
    try:
        spec = formats.parse_mosaic_spec(Path(args.spec).read_text(), args.spec)
    except SpecError as exc:
        raise UsageError(str(exc)) from None
    raster = generate_mosaic(RngStream(args.seed), spec)
    formats.write_girf(raster, args.output)
    print(
        f"wrote {spec.width}x{spec.height} raster with {len(spec.regions)} regions "
        f"to {args.output} (seed={args.seed})"
    )


def _write_report(report, path):
    with open(path, "w") as fh:
        for i, (mse, sec) in enumerate(zip(report.epoch_mse, report.epoch_seconds), 1):
            fh.write(json.dumps({"epoch": i, "mse": mse, "seconds": round(sec, 3)}) + "\n")
        fh.write(json.dumps({"final_mse": report.final_mse, "seconds": round(report.seconds, 3),
                             "checksum": report.checksum}) + "\n")


def _train_common_checks(s):
    _check_alphas(s["alphas"])
    _check_positive(s, "repeats", "epochs", "batch", "lr", "looks", "nm")
    if s["seed"] < 0:
        raise UsageError("seed must be nonnegative")


def cmd_train_sample(args):
    s = _settings(args, SAMPLE_DEFAULTS)
    _train_common_checks(s)
    _check_positive(s, "sizes")
    stream = RngStream(s["seed"])
    t0 = time.perf_counter()
    moments, targets = moment_dataset(stream.split(0), s["alphas"], s["sizes"], s["repeats"], s["looks"], s["nm"])
    print(f"generated {len(targets)} sample sets in {time.perf_counter() - t0:.3f} s (seed={s['seed']})")
    meta = ModelMeta(nm=s["nm"], looks=s["looks"], amin=min(s["alphas"]), amax=max(s["alphas"]), seed=s["seed"])
    model, report = train_sample_estimator(stream.split(1), moments, targets, s["epochs"], s["batch"], s["lr"], meta)
    _finish_training(args, model, report)


def cmd_train_map(args):
    s = _settings(args, MAP_DEFAULTS)
    _train_common_checks(s)
    _check_positive(s, "kernels", "width", "height")
    if max(s["kernels"]) > 2 * min(s["width"], s["height"]) + 1:
        raise UsageError("kernels too large for the training raster size")
    model, report = train_map_estimator(
        RngStream(s["seed"]), s["alphas"], s["kernels"], s["width"], s["height"], s["repeats"],
        s["epochs"], s["looks"], s["nm"], s["batch"], s["lr"],
    )
    _finish_training(args, model, report)


def _finish_training(args, model, report):
    save_model(model, args.output)
    report_path = args.report or f"{args.output}.jsonl"
    _write_report(report, report_path)
    print(
        f"trained {report.epochs} epochs in {report.seconds:.3f} s, final mse {report.final_mse:.6f}; "
        f"model {args.output} (crc32 {report.checksum}), report {report_path}"
    )


def cmd_estimate(args):
    if args.estimator == "nn" and not args.model:
        raise UsageError("nn estimator needs --model")
    z = formats.read_samples(args.sample)
    model = load_model(args.model) if args.estimator == "nn" else None
    looks = args.looks
    if looks is None and z.truth is not None:
        looks = z.truth.looks
    if looks is None and model is not None:
        looks = model.meta.looks
    if looks is None and args.estimator != "nn":
        raise UsageError("number of looks unknown: pass --looks")
    if args.estimator == "lcum":
        out = estimate_lcum(z, looks)
    elif args.estimator == "mle":
        out = estimate_mle(z, looks, args.mode)
    else:
        if looks != model.meta.looks:
            log.warning("model was trained for L=%d, sample has L=%d", model.meta.looks, looks)
        out = estimate_nn(model, z)
    value = "none" if out.alpha_hat is None else repr(out.alpha_hat)
    line = f"alpha_hat={value} status={out.status} ms={1e3 * out.elapsed:.3f}"
    if args.oracle_grid:
        line += f" oracle={mle_grid_argmax(z, looks)!r}"
    print(line)


def cmd_map(args):
    if args.kernel < 1:
        raise UsageError("--kernel must be at least 1")
    t0 = time.perf_counter()
    model = load_model(args.model)
    raster = formats.read_raster(args.input)
    raster, zeros = clamp_zeros(raster)
    t_read = time.perf_counter() - t0
    if zeros:
        print(f"clamped {zeros} zero pixels", file=sys.stderr)
    if model.meta.kernels and args.kernel not in model.meta.kernels:
        print(
            f"warning: kernel {args.kernel} not among trained kernels {list(model.meta.kernels)}; proceeding",
            file=sys.stderr,
        )
    pad = Reflect() if args.pad == "reflect" else Replicate()
    try:
        rmap, timing = estimate_map(model, raster, args.kernel, pad)
    except ParameterError as exc:
        raise UsageError(str(exc)) from None
    t1 = time.perf_counter()
    formats.write_girf(rmap, args.output)
    if args.ppm:
        formats.write_preview_ppm(rmap, args.ppm)
    io = t_read + time.perf_counter() - t1
    h, w = rmap.shape
    print(
        f"map {w}x{h} k={args.kernel}: moments={timing.moments:.3f} s "
        f"inference={timing.inference:.3f} s io={io:.3f} s total={timing.total + io:.3f} s"
    )


def _parse_models(entries):
    models = {}
    for entry in entries:
        name, sep, path = entry.partition("=")
        if not sep or not name or not path:
            raise UsageError(f"model entry {entry!r} must be name=path")
        models.setdefault(name.strip(), []).append(path.strip())
    return models


def cmd_bench(args):
    s = _settings(args, BENCH_DEFAULTS, list_looks=True)
    if args.model:
        s["models"] = list(s["models"]) + list(args.model)
    _check_alphas(s["alphas"])
    _check_positive(s, "looks", "sizes", "trials")
    config = bench.BenchConfig(
        alphas=s["alphas"], looks=s["looks"], sizes=s["sizes"], trials=s["trials"], seed=s["seed"],
        estimators=s["estimators"], models=_parse_models(s["models"]),
    )
    try:
        result = bench.run_bench(config, args.workers)
    except ParameterError as exc:
        raise UsageError(str(exc)) from None
    bench.export_tables(result, args.output)
    print(bench.summary(result))
    print(f"tables written to {args.output}")


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gi0net", description="Neural roughness estimation for G_I^0 SAR data")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate synthetic data")
    gsub = gen.add_subparsers(dest="what", required=True)
    g = gsub.add_parser("samples", help="one G_I^0 sample set")
    g.add_argument("--alpha", type=float, required=True)
    g.add_argument("--gamma", type=float, help="scale (default: unit-mean tie -alpha-1)")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--looks", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen_samples)
    g = gsub.add_parser("mosaic", help="piecewise-constant roughness raster")
    g.add_argument("--spec", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen_mosaic)

    for name, func, keys in (
        ("train-sample", cmd_train_sample, SAMPLE_DEFAULTS),
        ("train-map", cmd_train_map, MAP_DEFAULTS),
    ):
        t = sub.add_parser(name, help=f"train a network ({name})")
        t.add_argument("--config")
        for key in keys:
            kind = str if key in ("alphas", "sizes", "kernels") else type(keys[key])
            t.add_argument(f"--{key}", type=kind)
        t.add_argument("-o", "--output", required=True)
        t.add_argument("--report")
        t.set_defaults(func=func)

    e = sub.add_parser("estimate", help="estimate alpha from a sample file")
    e.add_argument("estimator", choices=["nn", "mle", "lcum"])
    e.add_argument("--sample", required=True)
    e.add_argument("--model")
    e.add_argument("--looks", type=int)
    e.add_argument("--mode", choices=["paper", "robust"], default="robust")
    e.add_argument("--oracle-grid", action="store_true", help="also print the 0.001-step likelihood-grid argmax")
    e.set_defaults(func=cmd_estimate)

    m = sub.add_parser("map", help="roughness map of a raster")
    m.add_argument("--model", required=True)
    m.add_argument("--input", required=True)
    m.add_argument("--kernel", type=int, required=True)
    m.add_argument("--pad", choices=["reflect", "replicate"], default="reflect")
    m.add_argument("-o", "--output", required=True)
    m.add_argument("--ppm")
    m.set_defaults(func=cmd_map)

    b = sub.add_parser("bench", help="Monte Carlo estimator comparison")
    b.add_argument("--config")
    b.add_argument("--alphas")
    b.add_argument("--looks")
    b.add_argument("--sizes")
    b.add_argument("--trials", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--estimators")
    b.add_argument("--workers", type=int, default=1, help="processes for running cells in parallel")
    b.add_argument("--model", action="append", help="name=path, repeatable (one per number of looks)")
    b.add_argument("-o", "--output", required=True)
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (UsageError, SpecError) as exc:
        print(f"{args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"{args.command}: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, DomainError, ParameterError, OSError) as exc:
        print(f"{args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
