"""Deterministic CSV emission for experiment outputs.

Tables are purely numeric. Metadata travels as '#' comment lines ahead of
the header: the artifact version and the complete effective configuration,
so every output file documents how to regenerate itself. Floats are written
with 17 significant digits, which round-trips IEEE doubles exactly; rerunning
the same config and seed therefore reproduces the file byte for byte.
"""

from __future__ import annotations

import csv
import dataclasses
import math


class NanError(RuntimeError):
    """A table destined for disk contains a non-finite value."""


@dataclasses.dataclass(frozen=True)
class CsvTable:
    """Rectangular numeric table plus metadata comment lines.

    Metadata lines are stored without the leading '#'; emit_csv adds it.
    """

    metadata: tuple[str, ...]
    header: tuple[str, ...]
    rows: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        if not self.header:
            raise ValueError("header must name at least one column")
        for i, row in enumerate(self.rows):
            if len(row) != len(self.header):
                raise ValueError(
                    f"row {i} has {len(row)} fields, header has {len(self.header)}"
                )


def emit_csv(table: CsvTable, path: str, *, context: str = "csv") -> None:
    """Write `table` to `path`; refuse to serialize non-finite values."""
    for i, row in enumerate(table.rows):
        for name, value in zip(table.header, row):
            if not math.isfinite(value):
                raise NanError(f"{context}: non-finite value in column '{name}', row {i}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in table.metadata:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(table.header)
        for row in table.rows:
            writer.writerow(f"{value:.17g}" for value in row)


def read_csv(path: str) -> CsvTable:
    """Inverse of emit_csv, for round-trip checks and downstream tooling."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        raw = fh.read().splitlines()
    metadata = tuple(
        line[2:] if line.startswith("# ") else line[1:]
        for line in raw
        if line.startswith("#")
    )
    body = [line for line in raw if line and not line.startswith("#")]
    if not body:
        raise ValueError(f"{path}: no header row")
    parsed = list(csv.reader(body))
    header = tuple(parsed[0])
    rows = tuple(tuple(float(tok) for tok in row) for row in parsed[1:])
    return CsvTable(metadata, header, rows)
