"""Small comma-separated result tables with deterministic float formatting."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field


def fmt(x):
    if isinstance(x, (bool,)):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


@dataclass
class ConvergenceTable:
    columns: list
    rows: list = field(default_factory=list)

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ValueError("row width does not match header")
        self.rows.append(tuple(values))

    def column(self, name):
        k = self.columns.index(name)
        return [r[k] for r in self.rows]

    def __len__(self):
        return len(self.rows)

    def to_csv(self):
        buf = io.StringIO()
        buf.write(",".join(self.columns) + "\n")
        for r in self.rows:
            buf.write(",".join(fmt(v) for v in r) + "\n")
        return buf.getvalue()

    def write(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())
