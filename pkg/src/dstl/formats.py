"""Dense tensor import/export: CSV for matrices, flat binary for any rank.

Binary layout: magic ``DSTL``, u32 version, u32 n, u32 p (little-endian),
then n**p float64 little-endian entries in lexicographic index order.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path
from typing import Union

import numpy as np

from .errors import ValidationError
from .tensor import MaterializedSource, materialize

MAGIC = b"DSTL"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


def write_binary(path: Union[str, Path], src) -> None:
    """Materialize a source and write it in the flat binary format."""
    mat = materialize(src)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, mat.n, mat.p))
        fh.write(np.ascontiguousarray(mat.values, dtype="<f8").tobytes())


def read_binary(path: Union[str, Path]) -> MaterializedSource:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValidationError(f"{path}: truncated header")
        magic, version, n, p = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ValidationError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise ValidationError(f"{path}: unsupported version {version}")
        if n < 1 or p < 1:
            raise ValidationError(f"{path}: invalid dimensions n={n}, p={p}")
        payload = fh.read()
    expected = n**p * 8
    if len(payload) != expected:
        raise ValidationError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape((n,) * p)
    return MaterializedSource(values)


def write_csv(path: Union[str, Path], src) -> None:
    """Materialize a rank-2 source and write it as CSV (rows = matrix rows)."""
    mat = materialize(src)
    if mat.p != 2:
        raise ValidationError(f"CSV export is matrix-only (p=2), got p={mat.p}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in mat.values:
            writer.writerow([repr(float(x)) for x in row])


def read_csv(path: Union[str, Path]) -> MaterializedSource:
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ValidationError(f"{path}: line {lineno} has {len(row)} fields, expected {width}")
            try:
                rows.append([float(x) for x in row])
            except ValueError as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from exc
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    values = np.asarray(rows, dtype=np.float64)
    if values.shape[0] != values.shape[1]:
        raise ValidationError(f"{path}: matrix must be square, got {values.shape}")
    return MaterializedSource(values)


def ingest(path: Union[str, Path], fmt: str) -> MaterializedSource:
    """Load a tensor file as a materialized source usable by every algorithm."""
    if fmt == "csv":
        return read_csv(path)
    if fmt == "binary":
        return read_binary(path)
    raise ValidationError(f"unknown format {fmt!r}; expected 'csv' or 'binary'")
