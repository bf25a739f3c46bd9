"""CSV output with a commented run header, and the matching reader."""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

PROFILE_COLUMNS = ("t", "Sigma", "x2", "h", "beta", "lambda")


def format_value(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(x)


def profile_columns(profiles) -> dict:
    """Columns ``t, Sigma, x2, h, beta, lambda`` of an equilibrium profile."""
    return {"t": profiles.t, "Sigma": profiles.x1, "x2": profiles.x2, "h": profiles.h,
            "beta": profiles.beta, "lambda": profiles.lam}


def rows_to_columns(rows: Sequence[tuple], names: Sequence[str]) -> dict:
    """Named tuples (or plain tuples with ``names``) to a column mapping."""
    cols = {name: [] for name in names}
    for row in rows:
        for name, val in zip(names, row):
            cols[name].append(val)
    return cols


def render_csv(columns: Mapping[str, Sequence], header: Mapping[str, object] | None = None) -> str:
    cols = {k: list(v) for k, v in columns.items()}
    lengths = {len(v) for v in cols.values()}
    if len(lengths) > 1:
        raise ValueError(f"columns have different lengths: { {k: len(v) for k, v in cols.items()} }")
    buf = io.StringIO()
    for key, val in (header or {}).items():
        text = format_value(val).replace("\n", " ")
        buf.write(f"# {key}: {text}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(cols))
    for row in zip(*cols.values()):
        writer.writerow([format_value(x) for x in row])
    return buf.getvalue()


def emit_csv(columns: Mapping[str, Sequence], path, header: Mapping[str, object] | None = None) -> Path:
    """Write ``columns`` as CSV to ``path`` (``'-'`` for stdout) after ``# key: value`` lines."""
    text = render_csv(columns, header)
    if str(path) == "-":
        import sys
        sys.stdout.write(text)
        return Path("-")
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _parse(cell: str):
    try:
        return float(cell)
    except ValueError:
        return cell


def read_csv(path) -> tuple[dict, dict]:
    """``(header, columns)``; numeric columns come back as float arrays."""
    header, lines = {}, []
    with open(path, encoding="utf-8", newline="") as fh:
        for line in fh:
            if line.startswith("# ") and not lines:
                key, _, val = line[2:].rstrip("\n").partition(": ")
                header[key] = val
            else:
                lines.append(line)
    reader = csv.reader(lines)
    names = next(reader, None)
    if names is None:
        return header, {}
    cols = {n: [] for n in names}
    for row in reader:
        for n, cell in zip(names, row):
            cols[n].append(_parse(cell))
    out = {}
    for n, vals in cols.items():
        if all(isinstance(v, float) for v in vals):
            out[n] = np.array(vals, dtype=float)
        else:
            out[n] = vals
    return header, out
