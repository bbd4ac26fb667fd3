"""
services/variance.py
Variance estimation and confidence intervals for ATE estimates.

Flavors:
- classic   (rss / (n − p)) · (X'WX)^{-1}
- hc0       (X'WX)^{-1} X'W diag(ε̂²) W X (X'WX)^{-1}
- hc1       hc0 · n / (n − p)
- hc2/hc3   squared residuals inflated by (1 − h_ii)^{-1} / (1 − h_ii)^{-2}
- neyman    s²_A/n_A + s²_B/n_B, defined for the unadjusted estimator only

Under weighted fits the sandwich works with √w_i-scaled residuals and the
weighted-metric leverages from services.linalg, so Σ h_ii = p still holds.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy import stats

from services.errors import (
    DegenerateVariance,
    GroupTooSmall,
    LeverageOne,
    MissingDf,
    OutOfDomain,
    RankDeficient,
    UnsupportedDesign,
)
from services.estimators import AteEstimate, EstimatorKind, ObservedData, resolve_contrast
from services.linalg import FitResult

# h_ii closer to 1 than this is treated as exactly 1
_LEVERAGE_TOL = 1e-12


class VarianceFlavor(str, Enum):
    CLASSIC = "classic"
    HC0 = "hc0"
    HC1 = "hc1"
    HC2 = "hc2"
    HC3 = "hc3"
    NEYMAN = "neyman"


class CiMethod(str, Enum):
    NORMAL = "normal"
    WELCH_T = "welch_t"


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    level: float
    method: CiMethod
    se_flavor: Optional[VarianceFlavor] = None
    df: Optional[float] = None
    critical_value: Optional[float] = None

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def covers(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "width": self.width,
            "level": self.level,
            "method": self.method.value,
            "se_flavor": None if self.se_flavor is None else self.se_flavor.value,
            "df": self.df,
            "critical_value": self.critical_value,
        }


# ─── Coefficient covariance ───────────────────────────────────────────────────

def coefficient_covariance(fit: FitResult, X, flavor) -> np.ndarray:
    """p×p covariance of the fitted coefficients under the requested flavor."""
    flavor = VarianceFlavor(flavor)
    if flavor is VarianceFlavor.NEYMAN:
        raise UnsupportedDesign("The neyman flavor is not a coefficient covariance; use neyman_variance.")
    if fit.rank < fit.n_params:
        raise RankDeficient(f"Fit has rank {fit.rank} < {fit.n_params}; covariance is undefined.")

    X = np.asarray(X, dtype=float)
    n, p = fit.n_obs, fit.n_params
    bread = fit.bread

    if flavor is VarianceFlavor.CLASSIC:
        if n <= p:
            raise RankDeficient(f"Classic variance needs n > p, got n={n}, p={p}.")
        return (fit.rss / (n - p)) * bread

    sqrt_w = np.ones(X.shape[0]) if fit.weights is None else np.sqrt(fit.weights)
    Xw = X * sqrt_w[:, np.newaxis]
    u2 = (fit.residuals * sqrt_w) ** 2
    scale = 1.0

    if flavor is VarianceFlavor.HC1:
        if n <= p:
            raise RankDeficient(f"HC1 needs n > p, got n={n}, p={p}.")
        scale = n / (n - p)
    elif flavor in (VarianceFlavor.HC2, VarianceFlavor.HC3):
        one_minus_h = 1.0 - fit.hat_diagonals
        if np.any(one_minus_h <= _LEVERAGE_TOL):
            worst = int(np.argmin(one_minus_h))
            raise LeverageOne(
                f"Observation {worst} has leverage 1; {flavor.value} is undefined. "
                "This usually means a group or covariate cell with a single member."
            )
        power = 1 if flavor is VarianceFlavor.HC2 else 2
        u2 = u2 / one_minus_h**power

    meat = Xw.T @ (Xw * u2[:, np.newaxis])
    cov = scale * (bread @ meat @ bread)
    return (cov + cov.T) / 2


# ─── Two-sample quantities ────────────────────────────────────────────────────

def _group_moments(data: ObservedData, contrast) -> tuple[float, int, float, int]:
    a, b = resolve_contrast(data, contrast)
    y_a, y_b = data.y[data.mask(a)], data.y[data.mask(b)]
    for label, values in ((a, y_a), (b, y_b)):
        if values.shape[0] < 2:
            raise GroupTooSmall(f"Group '{label}' needs at least 2 members for a sample variance.")
    return float(np.var(y_a, ddof=1)), y_a.shape[0], float(np.var(y_b, ddof=1)), y_b.shape[0]


def neyman_variance(data: ObservedData, contrast=None) -> float:
    s2a, na, s2b, nb = _group_moments(data, contrast)
    return s2a / na + s2b / nb


def welch_df(s2a: float, na: int, s2b: float, nb: int) -> float:
    """Welch–Satterthwaite approximate degrees of freedom."""
    if na < 2 or nb < 2:
        raise GroupTooSmall(f"Welch degrees of freedom need groups of at least 2, got {na} and {nb}.")
    va, vb = s2a / na, s2b / nb
    if va + vb <= 0:
        raise DegenerateVariance("Both groups have zero variance; Welch degrees of freedom are undefined.")
    return (va + vb) ** 2 / (va**2 / (na - 1) + vb**2 / (nb - 1))


def welch_df_for(data: ObservedData, contrast=None) -> float:
    return welch_df(*_group_moments(data, contrast))


# ─── Quantiles and intervals ──────────────────────────────────────────────────

def normal_quantile(p: float) -> float:
    if not 0 < p < 1:
        raise OutOfDomain(f"Probability must lie in (0, 1), got {p}.")
    return float(stats.norm.ppf(p))


def student_t_quantile(p: float, df: float) -> float:
    if not 0 < p < 1:
        raise OutOfDomain(f"Probability must lie in (0, 1), got {p}.")
    if not df > 0:
        raise OutOfDomain(f"Degrees of freedom must be positive, got {df}.")
    return float(stats.t.ppf(p, df))


def confidence_interval(point: float, se: float, method, level: float,
                        df: Optional[float] = None,
                        se_flavor: Optional[VarianceFlavor] = None) -> ConfidenceInterval:
    method = CiMethod(method)
    if se < 0 or not np.isfinite(se):
        raise OutOfDomain(f"Standard error must be a nonnegative number, got {se}.")
    if not 0 < level < 1:
        raise OutOfDomain(f"Confidence level must lie in (0, 1), got {level}.")

    tail = (1.0 + level) / 2.0
    if method is CiMethod.WELCH_T:
        if df is None:
            raise MissingDf("A welch_t interval needs degrees of freedom.")
        q = student_t_quantile(tail, df)
    else:
        q = normal_quantile(tail)
        df = None

    half = q * se
    return ConfidenceInterval(
        lower=point - half,
        upper=point + half,
        level=level,
        method=method,
        se_flavor=None if se_flavor is None else VarianceFlavor(se_flavor),
        df=df,
        critical_value=q,
    )


# ─── Estimate-level helpers ───────────────────────────────────────────────────

def estimate_variance(estimate: AteEstimate, flavor, data: Optional[ObservedData] = None) -> float:
    """Variance of the point estimate: c' V c on the estimate's own fit."""
    flavor = VarianceFlavor(flavor)
    if flavor is VarianceFlavor.NEYMAN:
        if estimate.estimator_kind is not EstimatorKind.UNADJUSTED or data is None:
            raise UnsupportedDesign("The neyman flavor applies only to the unadjusted estimator.")
        return neyman_variance(data, estimate.contrast)
    cov = coefficient_covariance(estimate.fit, estimate.design, flavor)
    c = estimate.contrast_vector
    return float(max(c @ cov @ c, 0.0))


def standard_error(estimate: AteEstimate, flavor, data: Optional[ObservedData] = None) -> float:
    return float(np.sqrt(estimate_variance(estimate, flavor, data)))


_WELCH_FLAVORS = (VarianceFlavor.HC2, VarianceFlavor.NEYMAN)


def welch_applies(kind, flavor) -> bool:
    """welch_t is defined for the unadjusted estimator with its HC2 (≡ Neyman) SE only."""
    return EstimatorKind(kind) is EstimatorKind.UNADJUSTED and VarianceFlavor(flavor) in _WELCH_FLAVORS


def interval_for(estimate: AteEstimate, data: ObservedData, flavor, method,
                 level: float, se: Optional[float] = None) -> ConfidenceInterval:
    """
    Interval for an estimate. welch_t pairs the unadjusted estimator with its
    HC2 (≡ Neyman) standard error and Welch–Satterthwaite degrees of freedom.
    """
    method = CiMethod(method)
    flavor = VarianceFlavor(flavor)
    df = None
    if method is CiMethod.WELCH_T:
        if not welch_applies(estimate.estimator_kind, flavor):
            raise UnsupportedDesign(
                "Welch intervals are defined for the unadjusted estimator with the hc2 or neyman SE only."
            )
        df = welch_df_for(data, estimate.contrast)
    if se is None:
        se = standard_error(estimate, flavor, data)
    return confidence_interval(estimate.point, se, method, level, df=df, se_flavor=flavor)
