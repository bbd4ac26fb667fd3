"""
services/estimators.py
Average-treatment-effect point estimators computed from observed data only.

Estimators:
- unadjusted        Ȳ_A − Ȳ_B
- adjusted          pooled OLS of Y on (1, G−1 group dummies, Z)
- interact          per-group OLS fits predicted at the full-sample z̄
- tyranny           WLS of Y on (1, T, Z), each group weighted by the other's share
- targeted_ancova   difference in group means of residuals from a WLS of Y on (1, Z)

Design:
- The contrast (A, B) makes B the reference level, so with two groups the
  contrast coefficient is literally "the coefficient on T".
- Every estimate carries the regression it came from (fit, design matrix,
  contrast vector), which is what the variance module needs for sandwich SEs.
- Categorical covariates must already be indicator-coded.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from services.errors import EmptyGroup, GroupTooSmall, NonFinite, UnsupportedDesign
from services.linalg import FitResult, least_squares
from services.sampling import regression_estimate

logger = logging.getLogger(__name__)

# Relative drift tolerated between the two forms of the interacted estimator
_CROSS_CHECK_RTOL = 1e-8


class EstimatorKind(str, Enum):
    UNADJUSTED = "unadjusted"
    ADJUSTED = "adjusted"
    INTERACT = "interact"
    TYRANNY = "tyranny"
    TARGETED_ANCOVA = "targeted_ancova"


@dataclass(frozen=True)
class ObservedData:
    y: np.ndarray
    group: np.ndarray
    Z: Optional[np.ndarray] = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        group = np.asarray(self.group).reshape(-1).astype(str)
        n = y.shape[0]
        Z = np.empty((n, 0)) if self.Z is None else np.asarray(self.Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, np.newaxis]
        if group.shape[0] != n or Z.shape[0] != n:
            raise NonFinite(
                f"Outcome, group and covariates disagree in length ({n}, {group.shape[0]}, {Z.shape[0]})."
            )
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(Z))):
            raise NonFinite("Outcome or covariates contain NaN or infinite entries.")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "group", group)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "_labels", tuple(np.unique(group).tolist()))

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def K(self) -> int:
        return int(self.Z.shape[1])

    @property
    def labels(self) -> list[str]:
        return list(self._labels)

    def mask(self, label) -> np.ndarray:
        return self.group == str(label)

    def size(self, label) -> int:
        return int(np.count_nonzero(self.mask(label)))

    def default_contrast(self) -> tuple[str, str]:
        """The two most frequent labels, most frequent first (ties broken by label)."""
        counts = Counter(self.group.tolist())
        ranked = sorted(counts, key=lambda label: (-counts[label], label))
        if len(ranked) < 2:
            raise EmptyGroup("Data contain fewer than two distinct groups.")
        return ranked[0], ranked[1]

    def restrict(self, labels) -> "ObservedData":
        keep = np.isin(self.group, [str(label) for label in labels])
        return ObservedData(y=self.y[keep], group=self.group[keep], Z=self.Z[keep])


@dataclass(frozen=True)
class AteEstimate:
    estimator_kind: EstimatorKind
    contrast: tuple[str, str]
    point: float
    fit: FitResult = field(repr=False)
    design: np.ndarray = field(repr=False)
    contrast_vector: np.ndarray = field(repr=False)
    details: dict = field(default_factory=dict, repr=False)


# ─── Helpers ──────────────────────────────────────────────────────────────────

def resolve_contrast(data: ObservedData, contrast=None) -> tuple[str, str]:
    if contrast is None:
        return data.default_contrast()
    a, b = (str(label) for label in contrast)
    if a == b:
        raise UnsupportedDesign(f"Contrast groups must differ, got ({a}, {b}).")
    for label in (a, b):
        if data.size(label) == 0:
            raise EmptyGroup(f"Group '{label}' has no members.")
    return a, b


def _dummy_block(data: ObservedData, reference: str) -> tuple[np.ndarray, list[str]]:
    others = [label for label in data.labels if label != reference]
    block = np.column_stack([data.mask(label).astype(float) for label in others])
    return block, others


def _contrast_vector(p: int, position: int) -> np.ndarray:
    c = np.zeros(p)
    c[position] = 1.0
    return c


def _require_two_groups(data: ObservedData, kind: EstimatorKind) -> None:
    if len(data.labels) != 2:
        raise UnsupportedDesign(
            f"The {kind.value} estimator is only defined for two groups; data have {len(data.labels)}."
        )


def minority_weights(data: ObservedData, contrast: tuple[str, str]) -> np.ndarray:
    """(1 − p̃_A)/p̃_A on group A rows and p̃_A/(1 − p̃_A) on group B rows."""
    a, _ = contrast
    share = data.size(a) / data.n
    in_a = data.mask(a)
    return np.where(in_a, (1.0 - share) / share, share / (1.0 - share))


# ─── Estimators ───────────────────────────────────────────────────────────────

def ate_unadjusted(data: ObservedData, contrast=None) -> AteEstimate:
    a, b = resolve_contrast(data, contrast)
    point = float(data.y[data.mask(a)].mean() - data.y[data.mask(b)].mean())

    dummies, others = _dummy_block(data, reference=b)
    X = np.column_stack([np.ones(data.n), dummies])
    fit = least_squares(X, data.y)
    return AteEstimate(
        estimator_kind=EstimatorKind.UNADJUSTED,
        contrast=(a, b),
        point=point,
        fit=fit,
        design=X,
        contrast_vector=_contrast_vector(X.shape[1], 1 + others.index(a)),
    )


def ate_adjusted(data: ObservedData, contrast=None) -> AteEstimate:
    a, b = resolve_contrast(data, contrast)
    dummies, others = _dummy_block(data, reference=b)
    X = np.column_stack([np.ones(data.n), dummies, data.Z])
    fit = least_squares(X, data.y)
    position = 1 + others.index(a)
    return AteEstimate(
        estimator_kind=EstimatorKind.ADJUSTED,
        contrast=(a, b),
        point=float(fit.coefficients[position]),
        fit=fit,
        design=X,
        contrast_vector=_contrast_vector(X.shape[1], position),
    )


def ate_interact(data: ObservedData, contrast=None) -> AteEstimate:
    a, b = resolve_contrast(data, contrast)
    for label in data.labels:
        if data.size(label) <= data.K + 1:
            raise GroupTooSmall(
                f"Group '{label}' has {data.size(label)} members; the interacted estimator "
                f"needs at least {data.K + 2} with {data.K} covariate(s)."
            )

    z_bar = data.Z.mean(axis=0)
    predictions, details = {}, {}
    for label in (a, b):
        in_group = data.mask(label)
        y_g, Z_g = data.y[in_group], data.Z[in_group]
        slopes = least_squares(np.column_stack([np.ones(y_g.shape[0]), Z_g]), y_g).coefficients[1:]
        predictions[label] = regression_estimate(y_g, Z_g, z_bar, slopes)
        details[label] = {
            "slopes": slopes.tolist(),
            "adjustment": float((z_bar - Z_g.mean(axis=0)) @ slopes),
        }
    point = predictions[a] - predictions[b]

    # Single fully interacted regression: same point, and the fit the sandwich needs.
    Zc = data.Z - z_bar
    dummies, others = _dummy_block(data, reference=b)
    interactions = [dummies[:, [j]] * Zc for j in range(dummies.shape[1])]
    X = np.column_stack([np.ones(data.n), dummies, Zc, *interactions])
    fit = least_squares(X, data.y)
    position = 1 + others.index(a)
    pooled = float(fit.coefficients[position])
    if abs(pooled - point) > _CROSS_CHECK_RTOL * max(1.0, abs(point)):
        logger.warning(
            "Interacted estimator drift: per-group form %.12g vs single-regression form %.12g",
            point, pooled,
        )

    return AteEstimate(
        estimator_kind=EstimatorKind.INTERACT,
        contrast=(a, b),
        point=float(point),
        fit=fit,
        design=X,
        contrast_vector=_contrast_vector(X.shape[1], position),
        details=details,
    )


def ate_tyranny(data: ObservedData, contrast=None) -> AteEstimate:
    _require_two_groups(data, EstimatorKind.TYRANNY)
    a, b = resolve_contrast(data, contrast)
    treated = data.mask(a).astype(float)
    X = np.column_stack([np.ones(data.n), treated, data.Z])
    fit = least_squares(X, data.y, w=minority_weights(data, (a, b)))
    return AteEstimate(
        estimator_kind=EstimatorKind.TYRANNY,
        contrast=(a, b),
        point=float(fit.coefficients[1]),
        fit=fit,
        design=X,
        contrast_vector=_contrast_vector(X.shape[1], 1),
    )


def ate_targeted_ancova(data: ObservedData, contrast=None) -> AteEstimate:
    _require_two_groups(data, EstimatorKind.TARGETED_ANCOVA)
    a, b = resolve_contrast(data, contrast)
    X_cov = np.column_stack([np.ones(data.n), data.Z])
    residuals = least_squares(X_cov, data.y, w=minority_weights(data, (a, b))).residuals

    in_a = data.mask(a)
    point = float(residuals[in_a].mean() - residuals[~in_a].mean())

    # The difference in residual means is the T coefficient of residuals on (1, T).
    X = np.column_stack([np.ones(data.n), in_a.astype(float)])
    fit = least_squares(X, residuals)
    return AteEstimate(
        estimator_kind=EstimatorKind.TARGETED_ANCOVA,
        contrast=(a, b),
        point=point,
        fit=fit,
        design=X,
        contrast_vector=_contrast_vector(2, 1),
    )


ESTIMATORS = {
    EstimatorKind.UNADJUSTED: ate_unadjusted,
    EstimatorKind.ADJUSTED: ate_adjusted,
    EstimatorKind.INTERACT: ate_interact,
    EstimatorKind.TYRANNY: ate_tyranny,
    EstimatorKind.TARGETED_ANCOVA: ate_targeted_ancova,
}


def estimate(data: ObservedData, kind, contrast=None) -> AteEstimate:
    return ESTIMATORS[EstimatorKind(kind)](data, contrast)
