"""
utils/column_parser.py
Parse the comma-separated lists accepted on the command line.
"""

import re

from services.errors import UsageError

_SPLIT = re.compile(r"\s*,\s*")
_NUMBER = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def parse_list(text: str | None) -> list[str]:
    """
    Split "z1, z2 ,z3" into ["z1", "z2", "z3"]; empty or None gives [].
    Duplicates are dropped, first occurrence wins.
    """
    if not text or not text.strip():
        return []
    items = [item for item in _SPLIT.split(text.strip()) if item]
    return list(dict.fromkeys(items))


def parse_float_list(text: str) -> list[float]:
    """Return the numbers in "0.75,0.6,0.5"; raises UsageError on anything else."""
    items = parse_list(text)
    bad = [item for item in items if not _NUMBER.match(item)]
    if bad or not items:
        raise UsageError(f"Expected a comma-separated list of numbers, got {text!r}.")
    return [float(item) for item in items]


def parse_contrast(text: str | None) -> tuple[str, str] | None:
    """Parse "treatment,control" into a (A, B) pair, or None when not given."""
    if text is None:
        return None
    items = parse_list(text)
    if len(items) != 2:
        raise UsageError(f"--contrast needs exactly two labels 'A,B', got {text!r}.")
    return items[0], items[1]


def parse_choices(text: str | None, allowed, option: str) -> list[str]:
    """Like parse_list, but every item must be one of `allowed`."""
    items = parse_list(text)
    allowed = [str(getattr(a, "value", a)) for a in allowed]
    unknown = [item for item in items if item not in allowed]
    if unknown or not items:
        raise UsageError(f"{option} takes a comma-separated subset of {allowed}, got {text!r}.")
    return items
