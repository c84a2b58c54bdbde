"""CSV file of unit margins: header ``unit,r1..rR,c1..cC``, one unit per line."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .core_tables import DEFAULT_TABLE_LIMIT, InvalidMarginsError, MarginPair
from .likelihood import EIDataset


class UnitsFileError(ValueError):
    pass


def _split_header(header: list[str]) -> tuple[int, int]:
    if not header or header[0].strip() != "unit":
        raise UnitsFileError("first header column must be 'unit'")
    names = [h.strip() for h in header[1:]]
    R = 0
    while R < len(names) and names[R] == f"r{R + 1}":
        R += 1
    C = len(names) - R
    if R == 0 or C == 0 or names[R:] != [f"c{j + 1}" for j in range(C)]:
        raise UnitsFileError(f"header must read unit,r1..rR,c1..cC; got {','.join(header)}")
    return R, C


def read_units(path, max_tables: int | None = DEFAULT_TABLE_LIMIT) -> EIDataset:
    return parse_units(Path(path).read_text(encoding="utf-8"), max_tables)


def parse_units(text: str, max_tables: int | None = DEFAULT_TABLE_LIMIT) -> EIDataset:
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r and any(x.strip() for x in r)]
    if not rows:
        raise UnitsFileError("empty units file")
    R, C = _split_header(rows[0])
    ids, units = [], []
    for lineno, rec in enumerate(rows[1:], start=2):
        if len(rec) != 1 + R + C:
            raise UnitsFileError(f"line {lineno}: expected {1 + R + C} fields, got {len(rec)}")
        try:
            vals = [int(x) for x in rec[1:]]
        except ValueError:
            raise UnitsFileError(f"line {lineno}: totals must be integers") from None
        try:
            units.append(MarginPair(tuple(vals[:R]), tuple(vals[R:])))
        except InvalidMarginsError as exc:
            raise UnitsFileError(f"line {lineno} (unit {rec[0]}): {exc}") from None
        ids.append(rec[0].strip())
    if not units:
        raise UnitsFileError("units file has no data rows")
    return EIDataset(tuple(units), tuple(ids), max_tables=max_tables)


def format_units(data: EIDataset) -> str:
    R, C = data.shape
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["unit"] + [f"r{i + 1}" for i in range(R)] + [f"c{j + 1}" for j in range(C)])
    for uid, u in zip(data.ids, data.units):
        w.writerow([uid, *u.row_totals, *u.col_totals])
    return buf.getvalue()


def sidecar_path(units_path) -> Path:
    p = Path(units_path)
    return p.with_name(p.name + ".truth.json")


def read_truth(path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    doc["pi"] = np.asarray(doc["pi"], dtype=float)
    return doc


def read_matrix(path) -> np.ndarray:
    """Read a probability matrix from JSON (nested list or ``{"pi": ...}``) or CSV."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        return np.loadtxt(io.StringIO(text), delimiter=",", ndmin=2)
    if isinstance(doc, dict):
        doc = doc["pi"]
    return np.asarray(doc, dtype=float)
