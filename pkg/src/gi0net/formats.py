"""Readers and writers for the text and raster formats used by the command line.

GIRF raster: ASCII line ``GIRF 1 <width> <height>``, a newline, then
``width * height`` little-endian float32 values in row-major order.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .errors import FormatError, SpecError
from .gi0 import Gi0Params, MosaicSpec, Region, SampleSet

GIRF_MAGIC = b"GIRF"

# ---------------------------------------------------------------------------
# sample files

_HEADER = re.compile(r"#\s*alpha=(\S+)\s+gamma=(\S+)\s+L=(\S+)\s*$")


def format_samples(sample: SampleSet) -> str:
    lines = []
    if sample.truth is not None:
        p = sample.truth
        lines.append(f"# alpha={p.alpha!r} gamma={p.gamma!r} L={p.looks}")
    lines.extend(repr(float(v)) for v in sample.values)
    return "\n".join(lines) + "\n"


def write_samples(sample: SampleSet, path) -> None:
    Path(path).write_text(format_samples(sample))


def read_samples(path) -> SampleSet:
    truth = None
    values = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _HEADER.match(line)
            if m is None or lineno != 1:
                raise FormatError(f"{path}:{lineno}: unexpected comment line")
            try:
                truth = Gi0Params(float(m[1]), float(m[2]), int(m[3]))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: bad header ({exc})") from None
            continue
        try:
            v = float(line)
        except ValueError:
            raise FormatError(f"{path}:{lineno}: not a number: {line!r}") from None
        if not v > 0 or not np.isfinite(v):
            raise FormatError(f"{path}:{lineno}: sample values must be finite and positive")
        values.append(v)
    if not values:
        raise FormatError(f"{path}: no sample values")
    return SampleSet(np.array(values), truth)


# ---------------------------------------------------------------------------
# rasters


def write_girf(raster: np.ndarray, path) -> None:
    raster = np.asarray(raster)
    if raster.ndim != 2:
        raise FormatError("GIRF rasters are two-dimensional")
    h, w = raster.shape
    data = np.ascontiguousarray(raster, dtype="<f4").tobytes()
    Path(path).write_bytes(f"GIRF 1 {w} {h}\n".encode("ascii") + data)


def read_girf(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    nl = blob.find(b"\n")
    if nl < 0:
        raise FormatError(f"{path}: missing GIRF header")
    parts = blob[:nl].split()
    if len(parts) != 4 or parts[0] != GIRF_MAGIC:
        raise FormatError(f"{path}: not a GIRF raster")
    if parts[1] != b"1":
        raise FormatError(f"{path}: unsupported GIRF version {parts[1].decode(errors='replace')}")
    try:
        w, h = int(parts[2]), int(parts[3])
    except ValueError:
        raise FormatError(f"{path}: bad GIRF dimensions") from None
    if w < 1 or h < 1:
        raise FormatError(f"{path}: bad GIRF dimensions")
    data = blob[nl + 1:]
    if len(data) != 4 * w * h:
        raise FormatError(f"{path}: expected {4 * w * h} data bytes, found {len(data)}")
    return np.frombuffer(data, dtype="<f4").reshape(h, w).astype(np.float64)


def _pgm_tokens(blob: bytes, count: int):
    # header tokens with '#' comments; returns tokens and offset after the last one
    tokens = []
    pos = 0
    while len(tokens) < count:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(blob[start:pos])
    return tokens, pos


def read_pgm(path) -> np.ndarray:
    """Read a P2 or P5 graymap (8- or 16-bit) as float64."""
    blob = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _pgm_tokens(blob, 4)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise FormatError(f"{path}: bad PGM header") from None
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise FormatError(f"{path}: bad PGM header")
    if magic == b"P5":
        dtype = ">u1" if maxval < 256 else ">u2"
        nbytes = w * h * np.dtype(dtype).itemsize
        data = blob[pos + 1:pos + 1 + nbytes]
        if len(data) != nbytes:
            raise FormatError(f"{path}: truncated PGM data")
        img = np.frombuffer(data, dtype=dtype)
    elif magic == b"P2":
        try:
            img = np.array(blob[pos:].split(), dtype=np.int64)
        except ValueError:
            raise FormatError(f"{path}: non-numeric PGM data") from None
        if img.size != w * h:
            raise FormatError(f"{path}: expected {w * h} PGM values, found {img.size}")
    else:
        raise FormatError(f"{path}: not a P2/P5 PGM file")
    return img.reshape(h, w).astype(np.float64)


def write_pgm(image: np.ndarray, path, binary: bool = True) -> None:
    image = np.asarray(image)
    h, w = image.shape
    if image.min() < 0 or image.max() > 65535:
        raise FormatError("PGM values must be in [0, 65535]")
    maxval = 255 if image.max() < 256 else 65535
    header = f"{'P5' if binary else 'P2'}\n{w} {h}\n{maxval}\n".encode("ascii")
    if binary:
        data = image.astype(">u1" if maxval == 255 else ">u2").tobytes()
    else:
        data = ("\n".join(" ".join(str(int(v)) for v in row) for row in image) + "\n").encode("ascii")
    Path(path).write_bytes(header + data)


def read_raster(path) -> np.ndarray:
    """GIRF or PGM, chosen by the file's magic bytes."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == GIRF_MAGIC:
        return read_girf(path)
    if head[:2] in (b"P2", b"P5"):
        return read_pgm(path)
    raise FormatError(f"{path}: unrecognized raster format")


def write_preview_ppm(rmap: np.ndarray, path, lo: float = -15.0, hi: float = -1.5) -> None:
    """Linear grayscale P6 preview, ``lo`` black and ``hi`` white."""
    scaled = (np.clip(rmap, lo, hi) - lo) / (hi - lo)
    gray = np.round(255 * scaled).astype(np.uint8)
    h, w = gray.shape
    rgb = np.repeat(gray[:, :, None], 3, axis=2)
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes())


# ---------------------------------------------------------------------------
# flat key = value files


def parse_keyvalues(text: str, source: str = "<config>", repeatable: frozenset = frozenset()) -> dict:
    """``key = value`` lines; '#' starts a comment.  Repeatable keys collect into lists."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise SpecError(f"{source}:{lineno}: expected 'key = value'")
        if key in repeatable:
            out.setdefault(key, []).append(value)
        elif key in out:
            raise SpecError(f"{source}:{lineno}: duplicate key {key!r}")
        else:
            out[key] = value
    return out


def read_config(path, allowed: set[str]) -> dict:
    """Read a flat config file, rejecting keys outside ``allowed``."""
    values = parse_keyvalues(Path(path).read_text(), str(path))
    unknown = sorted(set(values) - allowed)
    if unknown:
        raise SpecError(f"{path}: unknown config keys {unknown}")
    return values


def parse_mosaic_spec(text: str, source: str = "<mosaic>") -> MosaicSpec:
    """Mosaic spec: ``width``, ``height``, optional ``looks`` and repeated
    ``region = x0 y0 x1 y1 alpha`` lines (half-open pixel rectangles)."""
    values = parse_keyvalues(text, source, repeatable=frozenset({"region"}))
    unknown = sorted(set(values) - {"width", "height", "looks", "region"})
    if unknown:
        raise SpecError(f"{source}: unknown mosaic keys {unknown}")
    try:
        width = int(values["width"])
        height = int(values["height"])
        looks = int(values.get("looks", 1))
        regions = []
        for entry in values.get("region", []):
            x0, y0, x1, y1, alpha = entry.split()
            regions.append(Region(int(x0), int(y0), int(x1), int(y1), float(alpha)))
    except KeyError as exc:
        raise SpecError(f"{source}: missing key {exc}") from None
    except ValueError as exc:
        raise SpecError(f"{source}: bad value ({exc})") from None
    spec = MosaicSpec(width, height, regions, looks)
    spec.validate()
    return spec


def format_mosaic_spec(spec: MosaicSpec) -> str:
    lines = [f"width = {spec.width}", f"height = {spec.height}", f"looks = {spec.looks}"]
    lines += [f"region = {r.x0} {r.y0} {r.x1} {r.y1} {r.alpha!r}" for r in spec.regions]
    return "\n".join(lines) + "\n"
