"""
Tabular command output as CSV or aligned text.
"""

import csv
import io
import math
import numbers
import sys
from dataclasses import dataclass, field
from pathlib import Path

from config import CSV_SIGNIFICANT_DIGITS


def format_cell(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, numbers.Integral):
        return str(int(value))
    if isinstance(value, numbers.Real):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if value == 0:
            value = 0.0
        return f"{value:.{CSV_SIGNIFICANT_DIGITS}g}"
    return str(value)


@dataclass
class OutputTable:
    columns: list
    rows: list = field(default_factory=list)

    def add_row(self, values):
        if len(values) != len(self.columns):
            raise ValueError(f"row has {len(values)} cells, table has {len(self.columns)} columns")
        self.rows.append(list(values))

    def column(self, name):
        index = self.columns.index(name)
        return [row[index] for row in self.rows]

    def to_csv(self):
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([format_cell(value) for value in row])
        return buffer.getvalue()

    def to_text(self):
        cells = [list(self.columns)] + [[format_cell(value) for value in row] for row in self.rows]
        widths = [max(len(row[c]) for row in cells) for c in range(len(self.columns))]
        lines = ["  ".join(cell.rjust(width) for cell, width in zip(row, widths)) for row in cells]
        return "\n".join(lines) + "\n"

    def render(self, fmt="csv"):
        if fmt == "csv":
            return self.to_csv()
        if fmt == "text":
            return self.to_text()
        raise ValueError(f"unknown output format {fmt!r}")

    def write(self, out=None, fmt="csv"):
        text = self.render(fmt)
        if out is None:
            sys.stdout.write(text)
        else:
            Path(out).write_text(text, encoding="utf-8")
