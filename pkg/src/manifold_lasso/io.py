"""Readers and writers for the on-disk formats.

* dense matrices: CSV, one row per line, no header unless requested;
* dense matrices: little-endian binary with a 16 byte header
  (``b"MLAS"``, uint32 rows, uint32 cols, 4 reserved zero bytes) followed by
  row-major float64 values;
* sparse matrices: coordinate CSV ``i,j,value`` with 0-based indices.

Floats are written with ``repr`` so files round-trip exactly and are
byte-identical across reruns.
"""

import csv
import json
import struct
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InputFileError, ParseError

MAGIC = b"MLAS"
_HEADER = struct.Struct("<4sIII")


def _open(path, mode="r"):
    try:
        return open(path, mode, newline="" if "b" not in mode else None)
    except OSError as exc:
        raise InputFileError(f"cannot open {path}: {exc.strerror}") from exc


def read_matrix_csv(path, skip_header=False, allow_nonfinite=False):
    """Read a dense float matrix from CSV.

    Raises :class:`ParseError` with the 1-based line number on malformed rows
    (wrong column count, unparsable numbers, non-finite values).
    """
    rows = []
    width = None
    with _open(path) as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if skip_header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            try:
                values = [float(c) for c in row]
            except ValueError as exc:
                raise ParseError(path, lineno, f"not a number ({exc})") from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ParseError(
                    path, lineno, f"expected {width} columns, found {len(values)}"
                )
            if not allow_nonfinite and not all(np.isfinite(values)):
                raise ParseError(path, lineno, "non-finite value")
            rows.append(values)
    if not rows:
        raise ParseError(path, 1, "no data rows")
    return np.asarray(rows, dtype=float)


def _fmt(x):
    return repr(float(x))


def write_matrix_csv(path, matrix):
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    with _open(path, "w") as fh:
        for row in matrix:
            fh.write(",".join(_fmt(v) for v in row))
            fh.write("\n")


def write_binary(path, matrix):
    matrix = np.ascontiguousarray(np.atleast_2d(matrix), dtype="<f8")
    n, D = matrix.shape
    with _open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, n, D, 0))
        fh.write(matrix.tobytes())


def read_binary(path):
    with _open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ParseError(path, 0, "truncated header")
        magic, n, D, _ = _HEADER.unpack(header)
        if magic != MAGIC:
            raise ParseError(path, 0, f"bad magic {magic!r}")
        payload = fh.read()
    if len(payload) != 8 * n * D:
        raise ParseError(path, 0, f"expected {8 * n * D} payload bytes, got {len(payload)}")
    out = np.frombuffer(payload, dtype="<f8").reshape(n, D).astype(float)
    if not np.all(np.isfinite(out)):
        bad = int(np.argwhere(~np.isfinite(out))[0, 0])
        raise ParseError(path, 0, f"non-finite value in row {bad}")
    return out


def read_matrix(path, skip_header=False):
    """Dispatch on content: binary files start with the MLAS magic."""
    with _open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return read_binary(path)
    return read_matrix_csv(path, skip_header=skip_header)


def write_coo_csv(path, matrix):
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with _open(path, "w") as fh:
        for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{int(i)},{int(j)},{_fmt(v)}\n")


def read_coo_csv(path, shape=None):
    rows, cols, vals = [], [], []
    with _open(path) as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(path, lineno, f"expected 3 fields (i,j,value), found {len(row)}")
            try:
                i, j, v = int(row[0]), int(row[1]), float(row[2])
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
            if i < 0 or j < 0:
                raise ParseError(path, lineno, "negative index")
            rows.append(i)
            cols.append(j)
            vals.append(v)
    if shape is None:
        size = max(max(rows, default=-1), max(cols, default=-1)) + 1
        shape = (size, size)
    return sp.csr_matrix((vals, (rows, cols)), shape=shape)


def write_json(path, obj):
    with _open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with _open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(path, exc.lineno, exc.msg) from None


def write_indexed_rows(path, indices, blocks):
    """Write per-point matrices as ``index, flattened row-major values``."""
    with _open(path, "w") as fh:
        for i, block in zip(indices, blocks):
            flat = np.asarray(block, dtype=float).ravel()
            fh.write(",".join([str(int(i))] + [_fmt(v) for v in flat]))
            fh.write("\n")


def read_indexed_rows(path, shape):
    """Inverse of :func:`write_indexed_rows`; returns ``(indices, blocks)``."""
    table = read_matrix_csv(path)
    size = int(np.prod(shape))
    if table.shape[1] != size + 1:
        raise ParseError(path, 1, f"expected {size + 1} columns, found {table.shape[1]}")
    indices = table[:, 0].astype(int)
    return indices, table[:, 1:].reshape((len(indices),) + tuple(shape))


def ensure_dir(path):
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputFileError(f"cannot create {path}: {exc.strerror}") from exc
    return path
