"""File formats: Middlebury ``.flo`` flow, binary PGM/PPM frames, heatmaps and masks."""
from __future__ import annotations

import os
import re
import struct
from pathlib import Path

import numpy as np

from .errors import (BadMagic, DimensionMismatch, FormatError, InputUnreadable,
                     SalientFlowError, TruncatedFile)
from .field_core import ScalarField, VectorField2
from .optical_flow import Frame

FLO_MAGIC = 202021.25
_FLO_HEADER = struct.Struct("<fii")
FRAME_SUFFIXES = (".pgm", ".ppm", ".pnm")


class IoError(SalientFlowError, OSError):
    exit_code = 2


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise InputUnreadable(f"cannot read {path}: {exc}") from exc


# -- .flo ---------------------------------------------------------------------

def read_flo(path, expected_shape=None) -> VectorField2:
    data = _read_bytes(path)
    if len(data) < _FLO_HEADER.size:
        raise TruncatedFile(f"header needs {_FLO_HEADER.size} bytes, file has {len(data)}",
                            path, len(data))
    magic, w, h = _FLO_HEADER.unpack_from(data)
    if magic != np.float32(FLO_MAGIC):
        raise BadMagic(f"magic {magic!r} is not {FLO_MAGIC}", path, 0)
    if w < 1 or h < 1:
        raise DimensionMismatch(f"invalid dimensions {w}x{h}", path, 4)
    if expected_shape is not None and (w, h) != (expected_shape.width, expected_shape.height):
        raise DimensionMismatch(
            f"file is {w}x{h}, expected {expected_shape.width}x{expected_shape.height}", path, 4)
    need = _FLO_HEADER.size + 8 * w * h
    if len(data) < need:
        raise TruncatedFile(f"{w}x{h} flow needs {need} bytes, file has {len(data)}",
                            path, len(data))
    if len(data) > need:
        raise FormatError(f"{len(data) - need} trailing bytes after flow payload", path, need)
    uv = np.frombuffer(data, dtype="<f4", count=2 * w * h, offset=_FLO_HEADER.size)
    uv = uv.reshape(h, w, 2).astype(np.float64)
    if not np.all(np.isfinite(uv)):
        raise FormatError("flow payload contains non-finite values", path, _FLO_HEADER.size)
    return VectorField2(uv[..., 0], uv[..., 1])


def write_flo(field: VectorField2, path) -> None:
    h, w = field.u.shape
    uv = np.empty((h, w, 2), dtype="<f4")
    uv[..., 0] = field.u
    uv[..., 1] = field.v
    try:
        with open(path, "wb") as fh:
            fh.write(_FLO_HEADER.pack(FLO_MAGIC, w, h))
            fh.write(uv.tobytes())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


# -- PGM / PPM --------------------------------------------------------------

_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*([^\s#]+)")


def _parse_pnm(data: bytes, path):
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported image magic {magic!r} (binary PGM/PPM only)", path, 0)
    pos = 2
    vals = []
    for _ in range(3):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise TruncatedFile("incomplete image header", path, pos)
        try:
            vals.append(int(m.group(1)))
        except ValueError:
            raise FormatError(f"bad header token {m.group(1)!r}", path, m.start(1)) from None
        pos = m.end()
    w, h, maxval = vals
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise FormatError(f"bad image header {w}x{h} maxval {maxval}", path, pos)
    pos += 1  # single whitespace before the raster
    channels = 1 if magic == b"P5" else 3
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = w * h * channels * dtype.itemsize
    if len(data) - pos < need:
        raise TruncatedFile(f"raster needs {need} bytes, {len(data) - pos} present", path, len(data))
    raster = np.frombuffer(data, dtype=dtype, count=w * h * channels, offset=pos)
    shape = (h, w) if channels == 1 else (h, w, 3)
    return raster.reshape(shape), maxval


def read_pnm(path) -> tuple[np.ndarray, int]:
    """Raw raster and maxval of a binary PGM (P5) or PPM (P6) file."""
    return _parse_pnm(_read_bytes(path), path)


def read_frame(path) -> Frame:
    raster, maxval = read_pnm(path)
    return Frame(raster.astype(np.float64) / maxval)


def write_pgm(values: np.ndarray, path) -> None:
    arr = np.asarray(values, dtype=np.uint8)
    h, w = arr.shape
    try:
        with open(path, "wb") as fh:
            fh.write(b"P5\n%d %d\n255\n" % (w, h))
            fh.write(arr.tobytes())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_frame(frame: Frame, path) -> None:
    write_pgm(np.round(frame.intensity * 255.0), path)


def _values(field):
    if isinstance(field, ScalarField):
        return field.values
    return getattr(field, "phi", field)


def heatmap_bytes(values: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Linear map of ``[min, max]`` onto ``0..255``; a flat field maps to 128."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = float(v.min()), float(v.max())
    if hi - lo <= 0.0:
        return np.full(v.shape, 128, dtype=np.uint8), lo, hi
    scaled = np.round((v - lo) / (hi - lo) * 255.0)
    return np.clip(scaled, 0, 255).astype(np.uint8), lo, hi


def sidecar_path(path) -> Path:
    return Path(str(path) + ".range.txt")


def write_heatmap(field, path) -> None:
    """8-bit PGM of ``field`` plus ``<path>.range.txt`` holding ``min max``."""
    v = _values(field)
    if not np.all(np.isfinite(v)):
        raise IoError(f"refusing to write non-finite heatmap to {path}")
    img, lo, hi = heatmap_bytes(v)
    write_pgm(img, path)
    try:
        sidecar_path(path).write_text(f"{lo!r} {hi!r}\n")
    except OSError as exc:
        raise IoError(f"cannot write {sidecar_path(path)}: {exc}") from exc


def write_mask(mask, path) -> None:
    m = np.asarray(_values(mask)) != 0
    write_pgm(np.where(m, 255, 0), path)


# -- directories ------------------------------------------------------------

def list_files(directory, suffixes) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise InputUnreadable(f"{directory} is not a directory")
    return sorted((p for p in d.iterdir() if p.suffix.lower() in suffixes),
                  key=lambda p: os.fsencode(p.name))


def iter_frames(directory):
    """Frames of a directory of numbered PGM/PPM files, in lexicographic order."""
    for p in list_files(directory, FRAME_SUFFIXES):
        yield p, read_frame(p)


def iter_flows(directory):
    for p in list_files(directory, (".flo",)):
        yield p, read_flo(p)
