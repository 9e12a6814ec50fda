"""Tabular datasets and their CSV/JSON serialization.

Floats are written with 12 significant digits so that reruns of the same
configuration give byte-identical files.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

SCHEMA_VERSION = 1
SIG_DIGITS = 12


def fmt(x) -> str:
    """CSV cell text: 12 significant digits, ``nan`` sentinel, empty for None."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float) or hasattr(x, "dtype"):
        v = float(x)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        out = format(v, f".{SIG_DIGITS}g")
        return "0" if out == "-0" else out
    return str(x)


def _json_value(x):
    if x is None or isinstance(x, (bool, int, str)):
        return x
    if isinstance(x, dict):
        return {k: _json_value(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_value(v) for v in x]
    v = float(x)
    if not math.isfinite(v):
        return None
    return float(format(v, f".{SIG_DIGITS}g"))


@dataclass
class Dataset:
    """Named columns, rows in emission order, and free-form metadata."""

    kind: str
    columns: list
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, row) -> None:
        if isinstance(row, dict):
            row = [row.get(c) for c in self.columns]
        if len(row) != len(self.columns):
            raise ValueError(f"row has {len(row)} fields, expected {len(self.columns)}")
        self.rows.append(list(row))

    def column(self, name: str) -> list:
        k = self.columns.index(name)
        return [r[k] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([fmt(v) for v in r])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "columns": list(self.columns),
            "rows": [_json_value(r) for r in self.rows],
            "meta": _json_value(self.meta),
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def render(ds: Dataset, fmt_name: str = "csv") -> str:
    if not ds.rows:
        raise ValueError("refusing to emit an empty dataset")
    if fmt_name == "csv":
        return ds.to_csv()
    if fmt_name == "json":
        return ds.to_json()
    raise ValueError(f"unknown output format {fmt_name!r}")


def emit(ds: Dataset, fmt_name: str = "csv", path=None) -> str:
    """Serialize ``ds``; write it to ``path`` when given. Returns the text."""
    text = render(ds, fmt_name)
    if path is not None:
        Path(path).write_bytes(text.encode("utf-8"))
    return text
