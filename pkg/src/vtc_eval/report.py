"""Fixed-precision tables rendered as CSV or JSON.

Values are quantized once (half-to-even on the shortest decimal repr) and
both renderings read the same quantized cells, so CSV and JSON always carry
identical numbers.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Any, Sequence

from .core import NS_PER_SECOND

DURATION_DIGITS = 3
PERCENT_DIGITS = 1
RATIO_DIGITS = 4


def fixed(value: float | int | None, digits: int) -> Decimal | None:
    if value is None:
        return None
    quantum = Decimal(1).scaleb(-digits)
    return Decimal(repr(float(value))).quantize(quantum, rounding=ROUND_HALF_EVEN)


def seconds(ns: int | None) -> Decimal | None:
    """Exact ns -> seconds with 3 decimals."""
    if ns is None:
        return None
    quantum = Decimal(1).scaleb(-DURATION_DIGITS)
    return (Decimal(ns) / NS_PER_SECOND).quantize(quantum, rounding=ROUND_HALF_EVEN)


def percent(value: float | None) -> Decimal | None:
    return fixed(value, PERCENT_DIGITS)


def ratio(value: float | None) -> Decimal | None:
    return fixed(value, RATIO_DIGITS)


def format_hm(ns: int) -> str:
    """Duration as ``"158h 8m"`` (minutes rounded half to even)."""
    minutes = int((Decimal(ns) / (60 * NS_PER_SECOND)).quantize(Decimal(1), ROUND_HALF_EVEN))
    return f"{minutes // 60}h {minutes % 60}m"


@dataclass
class Table:
    name: str
    columns: Sequence[str]
    rows: list[Sequence[Any]] = field(default_factory=list)

    def add(self, *cells) -> None:
        if len(cells) != len(self.columns):
            raise ValueError(f"{self.name}: expected {len(self.columns)} cells")
        self.rows.append(cells)

    def records(self) -> list[dict[str, Any]]:
        return [dict(zip(self.columns, row)) for row in self.rows]


def _json_value(value):
    if isinstance(value, Decimal):
        return float(value)
    return value


def _csv_value(value) -> str:
    if value is None:
        return ""
    return str(value)


@dataclass
class Report:
    tables: list[Table] = field(default_factory=list)

    def table(self, name: str, columns: Sequence[str]) -> Table:
        t = Table(name, tuple(columns))
        self.tables.append(t)
        return t

    def __getitem__(self, name: str) -> Table:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)

    def to_json(self) -> str:
        payload = {
            t.name: [{k: _json_value(v) for k, v in r.items()} for r in t.records()]
            for t in self.tables
        }
        return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for i, t in enumerate(self.tables):
            if i:
                buf.write(f"\n# {t.name}\n")
            writer.writerow(t.columns)
            for row in t.rows:
                writer.writerow([_csv_value(v) for v in row])
        return buf.getvalue()

    def render(self, fmt: str) -> str:
        if fmt == "json":
            return self.to_json()
        if fmt == "csv":
            return self.to_csv()
        raise ValueError(f"unknown format {fmt!r}")


def table_csv(table: Table) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_csv_value(v) for v in row])
    return buf.getvalue()
