"""Column schemas for every CSV the package writes, and a strict checker.

A CSV may start with ``#`` comment lines (metadata), followed by exactly one
header row and data rows. The checker rejects unknown or missing columns,
ragged rows and cells that do not parse as the declared type.
"""
from __future__ import annotations

import csv
import math
import sys
from typing import Callable, Dict, List, Tuple

YOUNG_COLUMNS = ["section", "u_index", "lambda_bin_index", "mass", "lambda_mean"]


def _int(s):
    return int(s)


def _float(s):
    v = float(s)
    if math.isnan(v):
        raise ValueError("nan")
    return v


def _nonneg_int(s):
    v = int(s)
    if v < 0:
        raise ValueError("negative")
    return v


def _maybe(fn):
    def inner(s):
        return None if s == "" else fn(s)
    return inner


def _enum(*vals):
    def inner(s):
        if s not in vals:
            raise ValueError(f"{s!r} not in {vals}")
        return s
    return inner


def _text(s):
    return s


def _replica(s):
    if s in ("mean", "se"):
        return s
    return _nonneg_int(s)


SCHEMAS: Dict[str, List[Tuple[str, Callable]]] = {
    "thermo": [("phi", _float), ("Z", _float), ("R", _float)],
    "phibar": [("rho", _float), ("phibar", _float)],
    "thermo_scalars": [("name", _text), ("value", _float)],
    "canonical": [("sample", _nonneg_int), ("site", _nonneg_int), ("occupancy", _nonneg_int)],
    "snapshot_1d": [("t", _float), ("u_index", _nonneg_int), ("occupancy", _nonneg_int),
                    ("density", _float), ("jump_rate", _float), ("current_1", _float)],
    "snapshot_2d": [("t", _float), ("u_index", _nonneg_int), ("occupancy", _nonneg_int),
                    ("density", _float), ("jump_rate", _float), ("current_1", _float),
                    ("current_2", _float)],
    "young": [("section", _enum("regular", "singular")), ("u_index", _nonneg_int),
              ("lambda_bin_index", _maybe(_nonneg_int)), ("mass", _float), ("lambda_mean", _maybe(_float))],
    "pde": [("t", _float), ("u_index", _nonneg_int), ("rho", _float)],
    "statistic": [("statistic", _text), ("setting", _text), ("replica", _replica), ("value", _float)],
}


class SchemaError(ValueError):
    pass


def check_csv(path, kind: str) -> int:
    """Validate ``path`` against schema ``kind``; returns the number of data rows."""
    cols = SCHEMAS[kind]
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError(f"{path}: no header row")
    want = [c for c, _ in cols]
    if header != want:
        raise SchemaError(f"{path}: header {header} != {want}")
    n = 0
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(cols):
            raise SchemaError(f"{path}:{lineno}: expected {len(cols)} cells, got {len(row)}")
        for (name, fn), cell in zip(cols, row):
            try:
                fn(cell)
            except (ValueError, TypeError) as exc:
                raise SchemaError(f"{path}:{lineno}: column {name}: {exc}")
        if kind == "young":
            if row[0] == "regular" and (row[2] == "" or row[4] == ""):
                raise SchemaError(f"{path}:{lineno}: regular row needs bin index and lambda_mean")
            if row[0] == "singular" and (row[2] != "" or row[4] != ""):
                raise SchemaError(f"{path}:{lineno}: singular row must leave bin columns empty")
        n += 1
    return n


def guess_kind(path) -> str:
    with open(path, newline="") as fh:
        for ln in fh:
            if not ln.startswith("#"):
                header = next(csv.reader([ln]))
                break
        else:
            raise SchemaError(f"{path}: empty file")
    for kind, cols in SCHEMAS.items():
        if header == [c for c, _ in cols]:
            return kind
    raise SchemaError(f"{path}: header matches no known schema")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    bad = 0
    for p in argv:
        try:
            kind = guess_kind(p)
            n = check_csv(p, kind)
            print(f"ok   {p} ({kind}, {n} rows)")
        except SchemaError as exc:
            print(f"FAIL {exc}")
            bad += 1
    return 1 if bad else 0


if __name__ == "__main__":
    raise SystemExit(main())
