"""
services/dataset.py
Read experiment data and populations from CSV files.

Design:
- pandas does the parsing; every failure is turned into a DataError whose
  message names the file, the column and (for missing cells) the row.
- Files: header row, UTF-8, '.' decimal separator, no missing values.
- Populations carry columns a, b and z1..zK (K may be 0).
- Categorical covariates are expanded into indicator columns with the first
  sorted level omitted; everything downstream is purely numeric.
"""

import logging
import re
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from services.asymptotics import Population
from services.errors import DataError, MissingColumn, MissingValue, NonFinite
from services.estimators import ObservedData

logger = logging.getLogger(__name__)

_COVARIATE_COLUMN = re.compile(r"^z(\d+)$")


def _read(path) -> pd.DataFrame:
    path = Path(path)
    try:
        frame = pd.read_csv(path, encoding="utf-8", dtype=str, keep_default_na=False)
    except FileNotFoundError:
        raise DataError(f"❌ File not found: {path}")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"❌ Could not parse {path}: {e}")
    frame.columns = [str(c).strip() for c in frame.columns]
    return frame


def _require_columns(frame: pd.DataFrame, columns: Iterable[str], path) -> None:
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise MissingColumn(
            f"❌ {path}: missing column(s) {missing}; available: {list(frame.columns)}"
        )


def _check_complete(frame: pd.DataFrame, columns: Sequence[str], path) -> None:
    for column in columns:
        blank = frame[column].str.strip() == ""
        if blank.any():
            row = int(np.flatnonzero(blank.to_numpy())[0])
            # +2: one for the header line, one for 1-based numbering
            raise MissingValue(f"❌ {path}: missing value in column '{column}' at line {row + 2}.")


def _numeric(frame: pd.DataFrame, column: str, path) -> np.ndarray:
    cells = frame[column].str.strip()
    try:
        # correctly rounded per cell: a %.17g file reloads bit for bit
        values = cells.astype(float).to_numpy()
    except ValueError:
        values = pd.to_numeric(cells, errors="coerce").to_numpy(dtype=float, na_value=np.nan)
    bad = ~np.isfinite(values)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise NonFinite(
            f"❌ {path}: column '{column}' line {row + 2} is not a finite number: "
            f"{frame[column].iloc[row]!r}"
        )
    return values.astype(float)


def indicator_columns(values: np.ndarray, name: str) -> tuple[np.ndarray, list[str]]:
    """Indicator coding of a categorical column, first sorted level omitted."""
    levels = sorted(set(values.tolist()))
    if len(levels) < 2:
        raise DataError(f"❌ Categorical column '{name}' has a single level {levels}.")
    kept = levels[1:]
    block = np.column_stack([(values == level).astype(float) for level in kept])
    return block, [f"{name}={level}" for level in kept]


def load_observed(path, outcome: str, group: str, covariates: Sequence[str] = (),
                  categorical: Sequence[str] = ()) -> tuple[ObservedData, list[str]]:
    """
    Load outcome, group labels and covariates.

    Returns:
        (data, covariate_names) — names include expanded indicator columns.
    """
    frame = _read(path)
    columns = [outcome, group, *covariates, *categorical]
    _require_columns(frame, columns, path)
    _check_complete(frame, columns, path)

    blocks, names = [], []
    for column in covariates:
        blocks.append(_numeric(frame, column, path)[:, np.newaxis])
        names.append(column)
    for column in categorical:
        block, labels = indicator_columns(frame[column].str.strip().to_numpy(dtype=str), column)
        blocks.append(block)
        names.extend(labels)

    n = len(frame)
    Z = np.column_stack(blocks) if blocks else np.empty((n, 0))
    data = ObservedData(
        y=_numeric(frame, outcome, path),
        group=frame[group].str.strip().to_numpy(dtype=str),
        Z=Z,
    )
    logger.info("Loaded %d rows, groups %s, %d covariate column(s) from %s",
                data.n, {g: data.size(g) for g in data.labels}, data.K, path)
    return data, names


def population_columns(frame_columns: Iterable[str]) -> list[str]:
    numbered = [(int(m.group(1)), c) for c in frame_columns if (m := _COVARIATE_COLUMN.match(c))]
    return [c for _, c in sorted(numbered)]


def load_population(path) -> Population:
    frame = _read(path)
    _require_columns(frame, ["a", "b"], path)
    z_columns = population_columns(frame.columns)
    _check_complete(frame, ["a", "b", *z_columns], path)
    n = len(frame)
    Z = (np.column_stack([_numeric(frame, c, path) for c in z_columns])
         if z_columns else np.empty((n, 0)))
    pop = Population(a=_numeric(frame, "a", path), b=_numeric(frame, "b", path), Z=Z)
    logger.info("Loaded population of %d subjects with %d covariate(s) from %s", pop.n, pop.K, path)
    return pop


def save_population(pop: Population, path) -> None:
    frame = pd.DataFrame({"a": pop.a, "b": pop.b})
    for k in range(pop.K):
        frame[f"z{k + 1}"] = pop.Z[:, k]
    frame.to_csv(path, index=False, float_format="%.17g")
    logger.info("Wrote population of %d subjects to %s", pop.n, path)
