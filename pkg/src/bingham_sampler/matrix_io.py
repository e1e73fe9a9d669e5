"""Matrix file formats for the command line: dense CSV, sparse triplets, JSON.

Floats are written with ``repr`` (shortest round-trip form), so write-then-read
reproduces every entry bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .linalg import SymmetricMatrix

__all__ = [
    "MatrixFile",
    "MatrixFormatError",
    "MatrixValidationError",
    "read_matrix",
    "write_matrix",
    "FORMATS",
]

FORMATS = ("dense-csv", "triplet-csv", "json")


class MatrixFormatError(ValueError):
    """The file content could not be parsed in the requested format."""


class MatrixValidationError(ValueError):
    """The file parsed, but the matrix is unusable (shape, non-finite)."""


@dataclass(frozen=True)
class MatrixFile:
    path: str
    format: str = "dense-csv"

    def __post_init__(self):
        if self.format not in FORMATS:
            raise MatrixFormatError(
                f"unknown format {self.format!r}; expected one of {FORMATS}"
            )


def infer_format(path: str) -> str:
    return "json" if str(path).lower().endswith(".json") else "dense-csv"


def _parse_float(tok: str, where: str) -> float:
    try:
        return float(tok)
    except ValueError as exc:
        raise MatrixFormatError(f"{where}: not a number: {tok!r}") from exc


def _read_dense_csv(text: str) -> np.ndarray:
    rows = []
    for ln, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not tok.strip() for tok in row):
            continue
        rows.append([_parse_float(tok, f"line {ln}") for tok in row])
    if not rows:
        raise MatrixFormatError("empty matrix file")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise MatrixValidationError(f"ragged rows: widths {sorted(widths)}")
    return np.asarray(rows, dtype=float)


def _read_triplet_csv(text: str) -> np.ndarray:
    entries = []
    dim = 0
    for ln, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not tok.strip() for tok in row):
            continue
        if len(row) != 3:
            raise MatrixFormatError(
                f"line {ln}: expected 'i,j,value', got {len(row)} fields"
            )
        try:
            i, j = int(row[0]), int(row[1])
        except ValueError as exc:
            raise MatrixFormatError(f"line {ln}: bad index") from exc
        if i < 0 or j < 0:
            raise MatrixFormatError(f"line {ln}: negative index")
        entries.append((i, j, _parse_float(row[2], f"line {ln}")))
        dim = max(dim, i + 1, j + 1)
    if not entries:
        raise MatrixFormatError("empty matrix file")
    a = np.zeros((dim, dim))
    given = np.zeros((dim, dim), dtype=bool)
    for i, j, v in entries:
        a[i, j] = v
        given[i, j] = True
    # one triangle is enough: mirror entries whose transpose was not given
    solo = given & ~given.T
    a = np.where(solo.T, a.T, a)
    return a


def _read_json(text: str) -> np.ndarray:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MatrixFormatError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "dim" not in doc or "entries" not in doc:
        raise MatrixFormatError('expected an object with "dim" and "entries"')
    try:
        a = np.asarray(doc["entries"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise MatrixFormatError(f"bad entries: {exc}") from exc
    d = doc["dim"]
    if not isinstance(d, int) or a.ndim != 2 or a.shape != (d, d):
        raise MatrixValidationError(
            f"entries shape {a.shape} does not match dim {d}"
        )
    return a


_READERS = {
    "dense-csv": _read_dense_csv,
    "triplet-csv": _read_triplet_csv,
    "json": _read_json,
}


def read_matrix(mf: MatrixFile) -> SymmetricMatrix:
    """Parse the file; symmetrize (with a warning) if it is not symmetric."""
    with open(mf.path, "r", encoding="utf-8") as fh:
        text = fh.read()
    a = _READERS[mf.format](text)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise MatrixValidationError(f"matrix is not square: shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise MatrixValidationError("matrix has non-finite entries")
    scale = 1.0 + np.abs(a).max()
    if np.abs(a - a.T).max() > 1e-8 * scale:
        warnings.warn(
            f"{mf.path}: input is not symmetric; using (A + A')/2",
            UserWarning,
            stacklevel=2,
        )
        a = 0.5 * (a + a.T)
    else:
        a = 0.5 * (a + a.T)
    return SymmetricMatrix(a)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_matrix(mf: MatrixFile, a) -> None:
    if isinstance(a, SymmetricMatrix):
        a = a.array
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise MatrixValidationError(f"matrix is not square: shape {a.shape}")
    d = a.shape[0]
    if mf.format == "dense-csv":
        body = "\n".join(",".join(_fmt(v) for v in row) for row in a) + "\n"
    elif mf.format == "triplet-csv":
        lines = []
        for i in range(d):
            for j in range(i, d):
                if i == j or a[i, j] != 0.0:
                    lines.append(f"{i},{j},{_fmt(a[i, j])}")
        body = "\n".join(lines) + "\n"
    else:
        body = json.dumps({"dim": d, "entries": a.tolist()}) + "\n"
    with open(mf.path, "w", encoding="utf-8") as fh:
        fh.write(body)
