"""File formats: matrices, step kernels, motifs, measures, profiles, and
deterministic JSON/CSV emission.

All numeric output is fixed at 12 significant digits so repeated runs
produce byte-identical files.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .functionals import TiltProfile
from .kernel import StepKernel
from .tilt import FiniteBaseMeasure
from .ustat import Motif, PhiKernel, monochrome_phi, product_phi, table_phi

__all__ = [
    "FileFormatError",
    "read_matrix_csv",
    "read_kernel_csv",
    "read_motif",
    "read_measure_csv",
    "read_data_csv",
    "read_profile_csv",
    "write_profile_csv",
    "parse_measure_spec",
    "parse_phi_spec",
    "write_json",
    "write_csv",
    "format_float",
]


class FileFormatError(ValueError):
    """Malformed input file; the message carries the file and line number."""


def _rows(path):
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read {path}: {exc}") from exc
    out = []
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        out.append((lineno, [cell.strip() for cell in stripped.split(",")]))
    return out


def _floats(path, lineno, cells):
    try:
        return [float(c) for c in cells]
    except ValueError as exc:
        raise FileFormatError(f"{path}:{lineno}: expected decimals, got {cells}") from exc


def read_matrix_csv(path) -> np.ndarray:
    """n x n symmetric matrix: n rows of n comma-separated decimals."""
    rows = _rows(path)
    if not rows:
        raise FileFormatError(f"{path}:1: empty matrix file")
    n = len(rows[0][1])
    out = np.empty((len(rows), n))
    for r, (lineno, cells) in enumerate(rows):
        if len(cells) != n:
            raise FileFormatError(
                f"{path}:{lineno}: expected {n} columns, found {len(cells)}")
        out[r] = _floats(path, lineno, cells)
    if out.shape[0] != n:
        raise FileFormatError(f"{path}: expected {n} rows, found {out.shape[0]}")
    return out


def read_kernel_csv(path) -> StepKernel:
    """m x m block values; an optional first row 'breakpoints,b0,...,bm'."""
    rows = _rows(path)
    if not rows:
        raise FileFormatError(f"{path}:1: empty kernel file")
    breaks = None
    if rows[0][1][0].lower() == "breakpoints":
        lineno, cells = rows[0]
        breaks = np.array(_floats(path, lineno, cells[1:]))
        rows = rows[1:]
    m = len(rows[0][1])
    vals = np.empty((len(rows), m))
    for r, (lineno, cells) in enumerate(rows):
        if len(cells) != m:
            raise FileFormatError(
                f"{path}:{lineno}: expected {m} columns, found {len(cells)}")
        vals[r] = _floats(path, lineno, cells)
    try:
        return StepKernel(vals, breaks)
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


def read_motif(path) -> Motif:
    with open(path) as fh:
        text = fh.read()
    try:
        return Motif.from_text(text)
    except (ValueError, IndexError) as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


def read_measure_csv(path) -> FiniteBaseMeasure:
    """Columns atom,prob with a header row."""
    rows = _rows(path)
    if not rows or [c.lower() for c in rows[0][1]] != ["atom", "prob"]:
        raise FileFormatError(f"{path}:1: expected header 'atom,prob'")
    atoms, probs = [], []
    for lineno, cells in rows[1:]:
        if len(cells) != 2:
            raise FileFormatError(f"{path}:{lineno}: expected two columns")
        a, p = _floats(path, lineno, cells)
        atoms.append(a)
        probs.append(p)
    try:
        return FiniteBaseMeasure(np.array(atoms), np.array(probs))
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


def read_data_csv(path, k: int | None = None) -> np.ndarray:
    """Atom indices (0-based), one per row or comma separated."""
    rows = _rows(path)
    out = []
    for lineno, cells in rows:
        for c in cells:
            try:
                out.append(int(c))
            except ValueError as exc:
                raise FileFormatError(
                    f"{path}:{lineno}: expected integer atom index, got {c!r}") from exc
    data = np.array(out, dtype=np.int64)
    if k is not None and (data.min(initial=0) < 0 or data.max(initial=-1) >= k):
        raise FileFormatError(f"{path}: atom indices must lie in [0, {k})")
    return data


def read_profile_csv(path) -> TiltProfile:
    """One row per block: one column (real profile) or c columns (color rows)."""
    rows = _rows(path)
    if not rows:
        raise FileFormatError(f"{path}:1: empty profile file")
    width = len(rows[0][1])
    vals = []
    for lineno, cells in rows:
        if len(cells) != width:
            raise FileFormatError(f"{path}:{lineno}: ragged profile rows")
        vals.append(_floats(path, lineno, cells))
    arr = np.array(vals)
    if width == 1:
        arr = arr[:, 0]
    try:
        return TiltProfile(arr)
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


def write_profile_csv(path, profile: TiltProfile):
    vals = np.atleast_2d(profile.values.T).T
    with open(path, "w") as fh:
        for row in vals:
            fh.write(",".join(format_float(v) for v in np.atleast_1d(row)) + "\n")


def parse_measure_spec(spec: str) -> FiniteBaseMeasure:
    """'rademacher', 'uniform:c', or 'csv:PATH'."""
    if spec == "rademacher":
        return FiniteBaseMeasure.rademacher()
    if spec.startswith("uniform:"):
        return FiniteBaseMeasure.uniform_colors(int(spec.split(":", 1)[1]))
    if spec.startswith("csv:"):
        return read_measure_csv(spec.split(":", 1)[1])
    raise ValueError(f"unknown measure spec {spec!r}; "
                     "use rademacher, uniform:c, or csv:PATH")


def parse_phi_spec(spec: str, mu: FiniteBaseMeasure, arity: int) -> PhiKernel:
    """'product', 'monochrome', or 'table:PATH' with rows 'b1,...,bv,value'."""
    if spec == "product":
        return product_phi(mu, arity)
    if spec == "monochrome":
        return monochrome_phi(mu, arity)
    if spec.startswith("table:"):
        path = spec.split(":", 1)[1]
        table = np.zeros((mu.k,) * arity)
        for lineno, cells in _rows(path):
            if len(cells) != arity + 1:
                raise FileFormatError(
                    f"{path}:{lineno}: expected {arity} indices plus a value")
            *idx, val = cells
            try:
                idx = tuple(int(i) for i in idx)
            except ValueError as exc:
                raise FileFormatError(f"{path}:{lineno}: bad atom index") from exc
            if any(i < 0 or i >= mu.k for i in idx):
                raise FileFormatError(f"{path}:{lineno}: atom index out of range")
            table[idx] = float(val)
        return table_phi(table)
    raise ValueError(f"unknown phi spec {spec!r}; "
                     "use product, monochrome, or table:PATH")


def format_float(x) -> str:
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.12g}"


def _round_floats(obj):
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isinf(x) or math.isnan(x):
            return str(x)
        return float(format_float(x))
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _round_floats(obj.tolist())
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_round_floats(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def dumps_json(obj) -> str:
    return json.dumps(_round_floats(obj), indent=2, sort_keys=True)


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(
                format_float(v) if isinstance(v, (float, np.floating)) else str(v)
                for v in row) + "\n")
