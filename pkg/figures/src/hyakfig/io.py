"""CSV loading with schema checks that name the missing piece."""

from __future__ import annotations

import csv
from pathlib import Path

__all__ = ["SchemaError", "load_rows", "column", "numeric"]


class SchemaError(ValueError):
    """Input file missing, empty, or lacking a required column."""


def load_rows(in_dir: Path, name: str, required: tuple) -> list:
    """Read one CSV into dict rows, demanding every required column."""
    path = Path(in_dir) / name
    if not path.is_file():
        raise SchemaError(f"missing input file {name} in {in_dir}")
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise SchemaError(f"{name}: missing column '{col}'")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{name}: no data rows")
    return rows


def column(rows: list, key: str) -> list:
    return [row[key] for row in rows]


def numeric(rows: list, key: str) -> list:
    out = []
    for row in rows:
        text = row[key]
        out.append(float(text) if text != "" else float("nan"))
    return out
