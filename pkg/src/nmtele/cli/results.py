"""Result tables and their CSV form.

A file starts with ``# key: value`` provenance lines (values JSON-encoded,
keys sorted), then the header row, then rows rendered with 12 significant
digits.  Nothing time- or host-dependent is written, so identical configs
give byte-identical files.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import NmteleError, ShapeError

NUMBER_FORMAT = "%.12g"


class OutputError(NmteleError, OSError):
    pass


@dataclass
class ResultTable:
    columns: list[str]
    rows: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.columns = [str(c) for c in self.columns]
        if len(set(self.columns)) != len(self.columns):
            raise ShapeError(f"duplicate column names in {self.columns}")
        rows = np.asarray(self.rows, dtype=float)
        if rows.size == 0:
            rows = rows.reshape(0, len(self.columns))
        if rows.ndim != 2 or rows.shape[1] != len(self.columns):
            raise ShapeError(f"rows of shape {rows.shape} do not match {len(self.columns)} columns")
        self.rows = rows

    @classmethod
    def from_columns(cls, data: dict[str, Sequence[float]], provenance: dict | None = None) -> "ResultTable":
        cols = list(data)
        rows = np.column_stack([np.asarray(data[c], dtype=float) for c in cols]) if cols else np.zeros((0, 0))
        return cls(cols, rows, dict(provenance or {}))

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]

    def __len__(self) -> int:
        return self.rows.shape[0]


def _format(x: float) -> str:
    if x == 0:
        return "0"  # folds -0.0
    return NUMBER_FORMAT % x


def render_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    for key in sorted(table.provenance):
        value = json.dumps(table.provenance[key], sort_keys=True, separators=(",", ":"))
        buf.write(f"# {key}: {value}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([_format(x) for x in row])
    return buf.getvalue()


def write_csv(table: ResultTable, path: str | Path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(render_csv(table))
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def read_csv(path: str | Path) -> ResultTable:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc}") from exc
    prov = {}
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        key, _, value = lines[i][1:].strip().partition(": ")
        prov[key] = json.loads(value)
        i += 1
    reader = csv.reader(lines[i:])
    header = next(reader)
    rows = [[float(x) for x in r] for r in reader if r]
    return ResultTable(header, np.array(rows, dtype=float).reshape(len(rows), len(header)), prov)
