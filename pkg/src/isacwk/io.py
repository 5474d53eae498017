"""File formats for waveforms, channels and metric tables."""

from __future__ import annotations

import csv
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAGIC = b"ISACWF1"
_HEADER = struct.Struct("<7sII")


def _fmt_complex(z: complex) -> str:
    re, im = float(z.real), float(z.imag)
    sign = "-" if np.signbit(im) else "+"
    return f"{re!r}{sign}{abs(im)!r}j"


def write_matrix_csv(path, M: np.ndarray) -> None:
    """One CSV row per matrix row, cells formatted as ``re+imj``."""
    M = np.atleast_2d(np.asarray(M, dtype=np.complex128))
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            for row in M:
                w.writerow([_fmt_complex(z) for z in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_matrix_csv(path) -> np.ndarray:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ValueError(f"{path}: empty matrix file")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError(f"{path}: ragged rows")
    try:
        return np.array([[complex(c.strip().replace(" ", "")) for c in r] for r in rows])
    except ValueError as exc:
        raise ValueError(f"{path}: bad complex cell ({exc})") from exc


def write_matrix_bin(path, M: np.ndarray) -> None:
    """Little-endian layout: magic, u32 rows, u32 cols, then row-major
    interleaved float64 (re, im) pairs."""
    M = np.atleast_2d(np.asarray(M, dtype=np.complex128))
    N, L = M.shape
    body = np.ascontiguousarray(M).astype("<c16").tobytes()
    path = Path(path)
    try:
        path.write_bytes(_HEADER.pack(MAGIC, N, L) + body)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_matrix_bin(path) -> np.ndarray:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, N, L = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 16 * N * L
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype="<c16", offset=_HEADER.size).reshape(N, L).astype(np.complex128)


def write_matrix(path, M: np.ndarray) -> None:
    if str(path).endswith((".bin", ".isacwf")):
        write_matrix_bin(path, M)
    else:
        write_matrix_csv(path, M)


def read_matrix(path) -> np.ndarray:
    if str(path).endswith((".bin", ".isacwf")):
        return read_matrix_bin(path)
    return read_matrix_csv(path)


def write_table_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
