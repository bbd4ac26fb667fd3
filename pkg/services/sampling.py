"""
services/sampling.py
Survey-sampling regression estimators under simple random sampling without
replacement, with their exact finite-population variance and bias formulas.

Conventions:
- Population moments use divisor N.
- Exact enumeration visits subsets in lexicographic index order and refuses
  to start when C(N, n) exceeds _MAX_SUBSETS.
"""

import math
from dataclasses import dataclass
from enum import Enum
from itertools import combinations, islice
from typing import Callable, Iterable, Optional

import numpy as np

from services.errors import (
    DegenerateAuxiliary,
    EmptySample,
    InvalidSampleSize,
    NonFinite,
    TooManySubsets,
)

_MAX_SUBSETS = 10**6
_ENUMERATION_CHUNK = 50_000


class SamplingEstimator(str, Enum):
    SAMPLE_MEAN = "sample_mean"
    FIXED_SLOPE = "fixed_slope"
    OLS_REG = "ols_reg"


@dataclass(frozen=True)
class FinitePopulation1D:
    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        z = np.asarray(self.z, dtype=float).reshape(-1)
        if y.shape != z.shape:
            raise NonFinite(f"y has {y.shape[0]} entries but z has {z.shape[0]}.")
        if y.shape[0] < 2:
            raise InvalidSampleSize("A finite population needs at least 2 units.")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(z))):
            raise NonFinite("Population contains NaN or infinite entries.")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)

    @property
    def size(self) -> int:
        return int(self.y.shape[0])

    @property
    def z_variance(self) -> float:
        return float(np.mean((self.z - self.z.mean()) ** 2))


@dataclass(frozen=True)
class EnumerationSummary:
    """Exact distribution summary of an estimator over every subset."""
    mean: float
    variance: float
    minimum: float
    maximum: float
    count: int

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "variance": self.variance,
            "min": self.minimum,
            "max": self.maximum,
            "count": self.count,
        }


# ─── Population least squares ─────────────────────────────────────────────────

def q_pls(pop: FinitePopulation1D) -> float:
    """Population least squares slope of y on z."""
    zc = pop.z - pop.z.mean()
    szz = float(zc @ zc)
    if szz <= 0:
        raise DegenerateAuxiliary("The auxiliary variable z is constant; its slope is undefined.")
    return float(zc @ (pop.y - pop.y.mean())) / szz


def _population_residuals(pop: FinitePopulation1D) -> np.ndarray:
    q = q_pls(pop)
    return (pop.y - pop.y.mean()) - q * (pop.z - pop.z.mean())


# ─── Estimators ───────────────────────────────────────────────────────────────

def regression_estimate(sample_y, sample_z, pop_mean_z, q):
    """
    Linear regression estimator ȳ_S + (z̄ − z̄_S) q.

    sample_z may be a vector (single auxiliary) or an n×K matrix, in which
    case pop_mean_z and q are K-vectors.
    """
    sample_y = np.asarray(sample_y, dtype=float).reshape(-1)
    if sample_y.shape[0] == 0:
        raise EmptySample("Cannot form a regression estimate from an empty sample.")
    sample_z = np.asarray(sample_z, dtype=float)
    if sample_z.ndim == 1:
        return float(sample_y.mean() + (float(pop_mean_z) - sample_z.mean()) * float(q))
    shift = np.asarray(pop_mean_z, dtype=float) - sample_z.mean(axis=0)
    return float(sample_y.mean() + shift @ np.asarray(q, dtype=float))


def fixed_slope_variance(pop: FinitePopulation1D, q0: float, n: int) -> float:
    """Exact SRS variance of the regression estimator with a fixed slope q0."""
    N = pop.size
    if not 1 <= n <= N:
        raise InvalidSampleSize(f"Sample size must lie in [1, {N}], got {n}.")
    u = (pop.y - pop.y.mean()) - q0 * (pop.z - pop.z.mean())
    fpc = (N - n) / (N - 1)
    return fpc * (1.0 / n) * float(np.mean(u**2))


def ols_sampling_bias_leading(pop: FinitePopulation1D, n: int) -> float:
    """Leading term of the bias of the regression estimator with an OLS slope."""
    N = pop.size
    if not 1 <= n <= N:
        raise InvalidSampleSize(f"Sample size must lie in [1, {N}], got {n}.")
    e = _population_residuals(pop)
    zc = pop.z - pop.z.mean()
    return -(1.0 / pop.z_variance) * (1.0 / n - 1.0 / N) * float(np.mean(e * zc**2))


# ─── Exact enumeration ────────────────────────────────────────────────────────

def check_subset_budget(N: int, n: int) -> int:
    count = math.comb(N, n)
    if count > _MAX_SUBSETS:
        raise TooManySubsets(
            f"C({N}, {n}) = {count} subsets exceeds the enumeration limit of {_MAX_SUBSETS}."
        )
    return count


def subset_blocks(N: int, n: int) -> Iterable[np.ndarray]:
    """Yield lexicographically ordered subsets as (chunk, n) index arrays."""
    it = combinations(range(N), n)
    while True:
        block = list(islice(it, _ENUMERATION_CHUNK))
        if not block:
            return
        yield np.array(block, dtype=np.intp).reshape(len(block), n)


def summarize_values(values: np.ndarray) -> EnumerationSummary:
    mean = math.fsum(values) / values.shape[0]
    variance = math.fsum((values - mean) ** 2) / values.shape[0]
    return EnumerationSummary(
        mean=mean,
        variance=variance,
        minimum=float(values.min()),
        maximum=float(values.max()),
        count=int(values.shape[0]),
    )


def _sample_estimator(pop: FinitePopulation1D, estimator: SamplingEstimator,
                      q0: Optional[float]) -> Callable[[np.ndarray], np.ndarray]:
    z_bar = pop.z.mean()

    if estimator is SamplingEstimator.SAMPLE_MEAN:
        return lambda idx: pop.y[idx].mean(axis=1)

    if estimator is SamplingEstimator.FIXED_SLOPE:
        if q0 is None:
            raise InvalidSampleSize("The fixed_slope estimator needs a slope q0.")
        return lambda idx: pop.y[idx].mean(axis=1) + q0 * (z_bar - pop.z[idx].mean(axis=1))

    def ols(idx: np.ndarray) -> np.ndarray:
        ys, zs = pop.y[idx], pop.z[idx]
        zc = zs - zs.mean(axis=1, keepdims=True)
        szz = np.einsum("ij,ij->i", zc, zc)
        if np.any(szz <= 0):
            raise DegenerateAuxiliary(
                "A sample has constant z, so its OLS slope is undefined; use a larger n."
            )
        q = np.einsum("ij,ij->i", zc, ys) / szz
        return ys.mean(axis=1) + q * (z_bar - zs.mean(axis=1))

    return ols


def enumerate_srs(pop: FinitePopulation1D, n: int, estimator, q0: Optional[float] = None
                  ) -> EnumerationSummary:
    """Exact mean and variance of an SRS estimator over all C(N, n) samples."""
    estimator = SamplingEstimator(estimator)
    N = pop.size
    if not 1 <= n <= N:
        raise InvalidSampleSize(f"Sample size must lie in [1, {N}], got {n}.")
    if estimator is SamplingEstimator.OLS_REG and n < 2:
        raise InvalidSampleSize("The ols_reg estimator needs samples of at least 2 units.")
    check_subset_budget(N, n)

    evaluate = _sample_estimator(pop, estimator, q0)
    values = np.concatenate([evaluate(idx) for idx in subset_blocks(N, n)])
    return summarize_values(values)
