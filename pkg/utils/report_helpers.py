# utils/report_helpers.py
"""Helpers for rendering reports as JSON or aligned text tables."""

import json
import math
import sys
from enum import Enum
from pathlib import Path

import numpy as np

SIG_DIGITS = 6


def to_jsonable(obj):
    """Recursively convert numpy types, enums and non-finite floats into plain JSON values."""
    if isinstance(obj, dict):
        return {str(k.value if isinstance(k, Enum) else k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    return obj


def dump_json(report: dict) -> str:
    """Full-precision, key-sorted JSON; identical input gives identical bytes."""
    return json.dumps(to_jsonable(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def format_number(value) -> str:
    if value is None:
        return "—"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.{SIG_DIGITS}g}"
    return str(value)


def render_table(headers: list[str], rows: list[list], title: str | None = None) -> str:
    """Left-aligned first column, right-aligned numbers, single-space gutters."""
    cells = [[format_number(c) for c in row] for row in rows]
    widths = [len(h) for h in headers]
    for row in cells:
        for j, cell in enumerate(row):
            widths[j] = max(widths[j], len(cell))

    def line(values):
        first = values[0].ljust(widths[0])
        rest = [v.rjust(widths[j + 1]) for j, v in enumerate(values[1:])]
        return "  ".join([first, *rest]).rstrip()

    out = []
    if title:
        out.append(title)
    out.append(line(headers))
    out.append("  ".join("-" * w for w in widths))
    out.extend(line(row) for row in cells)
    return "\n".join(out) + "\n"


def write_report(text: str, out=None) -> None:
    """Write to a file path, or to stdout when out is None or '-'."""
    if out is None or str(out) == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    path = Path(out)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
