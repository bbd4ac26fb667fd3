"""Shared fixtures: small hand-checkable datasets and populations."""

import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from services.asymptotics import Population  # noqa: E402
from services.estimators import ObservedData  # noqa: E402


@pytest.fixture
def two_groups() -> ObservedData:
    """Y_A = {0, 4}, Y_B = {1, 1}, no covariates."""
    return ObservedData(y=[0.0, 4.0, 1.0, 1.0], group=["A", "A", "B", "B"])


@pytest.fixture
def toy_data() -> ObservedData:
    """T = [1, 1, 0, 0], z = [0, 2, 1, 3], y = [0, 4, 1, 1]."""
    return ObservedData(y=[0.0, 4.0, 1.0, 1.0], group=["A", "A", "B", "B"], Z=[0.0, 2.0, 1.0, 3.0])


@pytest.fixture
def line_data() -> ObservedData:
    """Group A on y = 2z, group B on y = 1; full-sample z̄ = 1.5."""
    return ObservedData(
        y=[0.0, 2.0, 4.0, 1.0, 1.0, 1.0],
        group=["A", "A", "A", "B", "B", "B"],
        Z=[0.0, 1.0, 2.0, 1.0, 2.0, 3.0],
    )


@pytest.fixture
def linear_population() -> Population:
    """a = z over z = [0, 2, 1, 3], b = 0."""
    z = np.array([0.0, 2.0, 1.0, 3.0])
    return Population(a=z.copy(), b=np.zeros(4), Z=z)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


def random_population(rng: np.random.Generator, n: int, K: int) -> Population:
    """Heterogeneous-effect population with K covariates."""
    Z = rng.normal(size=(n, K))
    a = Z @ rng.normal(size=K) + 0.5 * Z[:, 0] ** 2 + rng.normal(size=n)
    b = Z @ rng.normal(size=K) + rng.normal(size=n)
    return Population(a=a, b=b, Z=Z)


def random_dataset(rng: np.random.Generator, n_A: int, n_B: int, K: int = 0) -> ObservedData:
    n = n_A + n_B
    Z = rng.normal(size=(n, K))
    y = rng.normal(size=n) * np.where(np.arange(n) < n_A, 2.0, 0.5)
    if K:
        y = y + Z @ rng.normal(size=K)
    return ObservedData(y=y, group=["A"] * n_A + ["B"] * n_B, Z=Z)


def write_csv(path: Path, header: list[str], rows: list[list]) -> Path:
    lines = [",".join(header)] + [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
