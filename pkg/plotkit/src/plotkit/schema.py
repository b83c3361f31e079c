"""Documented CSV schemas of the simulation lab and strict readers.

The renderer consumes only these files; any missing column is rejected
with the offending column named.
"""

from __future__ import annotations

import csv
from pathlib import Path

RUNS_COLUMNS = ["run", "scheme", "seed", "iter", "avg_sum_rate",
                "terr_sum_rate", "sat_sum_rate"]
SUMMARY_COLUMNS = ["sweep_key", "value", "scheme", "mean", "stderr",
                   "n_runs", "n_failed"]
PATHS_COLUMNS = ["run", "scheme", "seed", "iter", "slot", "platform",
                 "x", "y", "z"]
NODES_COLUMNS = ["run", "scheme", "seed", "kind", "index", "x", "y", "z"]

_NUMERIC = {
    "run": int, "seed": int, "iter": int, "slot": int, "index": int,
    "n_runs": int, "n_failed": int,
    "avg_sum_rate": float, "terr_sum_rate": float, "sat_sum_rate": float,
    "value": float, "mean": float, "stderr": float,
    "x": float, "y": float, "z": float,
}


class SchemaError(ValueError):
    """A CSV does not match its documented schema."""


def read_rows(path: str | Path, required: list[str]) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"input file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise SchemaError(f"{path.name}: missing required column '{col}'")
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            row = {}
            for col in required:
                value = raw[col]
                conv = _NUMERIC.get(col, str)
                try:
                    row[col] = conv(value)
                except (TypeError, ValueError):
                    raise SchemaError(
                        f"{path.name}:{lineno}: column '{col}' has "
                        f"non-{conv.__name__} value {value!r}") from None
            rows.append(row)
    if not rows:
        raise SchemaError(f"{path.name}: no data rows")
    return rows


def select_schemes(rows: list[dict], schemes: list[str] | None, path_name: str):
    available = sorted({r["scheme"] for r in rows})
    if not schemes:
        return rows, available
    picked = [r for r in rows if r["scheme"] in set(schemes)]
    if not picked:
        raise SchemaError(
            f"{path_name}: no rows for schemes {schemes}; available: {available}")
    return picked, [s for s in schemes if any(r["scheme"] == s for r in picked)]
