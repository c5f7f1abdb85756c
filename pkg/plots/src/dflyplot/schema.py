"""CSV loading with strict schema checks.

Figures consume only the documented run CSVs; a missing column fails fast
with the column named, and an empty CSV never produces a blank figure.
"""

from __future__ import annotations

import csv
import os


class SchemaError(ValueError):
    pass


def load_csv(run_dir: str, filename: str, required: list[str]) -> list[dict]:
    path = os.path.join(run_dir, filename)
    if not os.path.exists(path):
        raise SchemaError(f"{filename}: file not found in {run_dir}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        for col in required:
            if col not in fields:
                raise SchemaError(f"{filename}: missing column '{col}'")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{filename}: no data rows")
    return rows
