"""
services/asymptotics.py
Population-level (finite-n plug-in) quantities behind the randomization
asymptotics of the unadjusted, adjusted and interacted ATE estimators.

Conventions:
- Every "limit" is evaluated on the supplied population with p_A as given,
  normally n_A / n.
- Population moments use divisor n.
- Normalized variances are variances of √n (estimator − ATE); the SD of an
  estimator itself is √(v / n).
- Only two-arm populations exist here (a and b); multi-group asymptotics are
  not computed.

The unadjusted and adjusted variance forms follow from the sandwich-limit
differences together with the identity a** − b** = (a − b) − ATE.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from services.errors import (
    DegenerateAuxiliary,
    GroupTooSmall,
    InvalidDesign,
    MultiCovariateUnsupported,
    NonFinite,
)
from services.estimators import EstimatorKind, ObservedData, resolve_contrast
from services.linalg import least_squares


@dataclass(frozen=True)
class Population:
    a: np.ndarray
    b: np.ndarray
    Z: Optional[np.ndarray] = None

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        n = a.shape[0]
        Z = np.empty((n, 0)) if self.Z is None else np.asarray(self.Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, np.newaxis]
        if b.shape[0] != n or Z.shape[0] != n:
            raise NonFinite(f"Potential outcomes and covariates disagree in length ({n}, {b.shape[0]}, {Z.shape[0]}).")
        if n < 2:
            raise InvalidDesign("A population needs at least 2 subjects.")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.isfinite(Z))):
            raise NonFinite("Population contains NaN or infinite entries.")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "Z", Z)

    @property
    def n(self) -> int:
        return int(self.a.shape[0])

    @property
    def K(self) -> int:
        return int(self.Z.shape[1])

    @property
    def ate(self) -> float:
        return float(self.a.mean() - self.b.mean())

    @property
    def centered_Z(self) -> np.ndarray:
        return self.Z - self.Z.mean(axis=0)


@dataclass(frozen=True)
class PlsSummary:
    Qa: np.ndarray
    Qb: np.ndarray
    p_A: float

    @property
    def Q(self) -> np.ndarray:
        return self.p_A * self.Qa + (1 - self.p_A) * self.Qb

    @property
    def Q_E(self) -> np.ndarray:
        return (1 - self.p_A) * self.Qa + self.p_A * self.Qb

    @property
    def Q_diff(self) -> np.ndarray:
        return self.Qa - self.Qb


@dataclass(frozen=True)
class PredictionErrors:
    a_star: np.ndarray
    b_star: np.ndarray
    a_dstar: np.ndarray
    b_dstar: np.ndarray


@dataclass(frozen=True)
class SandwichLimits:
    adjusted: float
    interact: float
    adjusted_gap: float
    interact_gap: float


@dataclass(frozen=True)
class PrecisionGaps:
    unadjusted_minus_interact: float
    adjusted_minus_interact: float


@dataclass(frozen=True)
class BiasEstimate:
    adjusted: float
    interact: float


@dataclass(frozen=True)
class AsymptoticReport:
    n: int
    p_A: float
    ate: float
    variances: dict
    sds: dict
    sandwich: SandwichLimits
    gaps: PrecisionGaps
    pls: PlsSummary
    bias_leading: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "p_A": self.p_A,
            "ate": self.ate,
            "normalized_variance": dict(self.variances),
            "sd": dict(self.sds),
            "sd_x1000": {k: 1000 * v for k, v in self.sds.items()},
            "sandwich_limits": {
                "adjusted": self.sandwich.adjusted,
                "interact": self.sandwich.interact,
                "adjusted_gap": self.sandwich.adjusted_gap,
                "interact_gap": self.sandwich.interact_gap,
            },
            "gaps": {
                "unadjusted_minus_interact": self.gaps.unadjusted_minus_interact,
                "adjusted_minus_interact": self.gaps.adjusted_minus_interact,
            },
            "pls": {
                "Qa": self.pls.Qa.tolist(),
                "Qb": self.pls.Qb.tolist(),
                "Q": self.pls.Q.tolist(),
                "Q_E": self.pls.Q_E.tolist(),
                "Q_diff": self.pls.Q_diff.tolist(),
            },
            "bias_leading": self.bias_leading,
        }


# ─── Moments ──────────────────────────────────────────────────────────────────

def _cov(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean((x - x.mean()) * (y - y.mean())))


def _var(x: np.ndarray) -> float:
    return _cov(x, x)


def _check_share(p_A: float) -> float:
    p_A = float(p_A)
    if not 0 < p_A < 1:
        raise InvalidDesign(f"p_A must lie strictly between 0 and 1, got {p_A}.")
    return p_A


def _neyman_form(x: np.ndarray, y: np.ndarray, p: float) -> float:
    return ((1 - p) / p) * _var(x) + (p / (1 - p)) * _var(y) + 2 * _cov(x, y)


def _single_covariate(pop: Population, covariate_index: int = 0) -> np.ndarray:
    if pop.K != 1:
        raise MultiCovariateUnsupported(
            f"Leading bias terms are defined for a single covariate; population has {pop.K}."
        )
    z = pop.Z[:, covariate_index]
    if _var(z) <= 0:
        raise DegenerateAuxiliary("The covariate is constant; the bias term is undefined.")
    return z


# ─── Slopes and prediction errors ─────────────────────────────────────────────

def pls_summary(pop: Population, p_A: float) -> PlsSummary:
    p_A = _check_share(p_A)
    X = np.column_stack([np.ones(pop.n), pop.Z])
    return PlsSummary(
        Qa=least_squares(X, pop.a).coefficients[1:],
        Qb=least_squares(X, pop.b).coefficients[1:],
        p_A=p_A,
    )


def prediction_errors(pop: Population, pls: PlsSummary) -> PredictionErrors:
    Zc = pop.centered_Z
    a_c = pop.a - pop.a.mean()
    b_c = pop.b - pop.b.mean()
    return PredictionErrors(
        a_star=a_c - Zc @ pls.Qa,
        b_star=b_c - Zc @ pls.Qb,
        a_dstar=a_c - Zc @ pls.Q,
        b_dstar=b_c - Zc @ pls.Q,
    )


def _errors(pop: Population, p_A: float) -> tuple[PlsSummary, PredictionErrors]:
    pls = pls_summary(pop, p_A)
    return pls, prediction_errors(pop, pls)


# ─── Asymptotic variances ─────────────────────────────────────────────────────

def asym_var_interact(pop: Population, p_A: float) -> float:
    pls, pe = _errors(pop, p_A)
    return _neyman_form(pe.a_star, pe.b_star, pls.p_A)


def asym_var_unadjusted(pop: Population, p_A: float) -> float:
    p_A = _check_share(p_A)
    return _neyman_form(pop.a, pop.b, p_A)


def asym_var_adjusted(pop: Population, p_A: float) -> float:
    pls, pe = _errors(pop, p_A)
    return _neyman_form(pe.a_dstar, pe.b_dstar, pls.p_A)


def sandwich_limits(pop: Population, p_A: float) -> SandwichLimits:
    """Probability limits of n·v̂ for the adjusted and interacted estimators, with their gaps."""
    pls, pe = _errors(pop, p_A)
    p = pls.p_A
    return SandwichLimits(
        adjusted=_var(pe.a_dstar) / p + _var(pe.b_dstar) / (1 - p),
        interact=_var(pe.a_star) / p + _var(pe.b_star) / (1 - p),
        adjusted_gap=_var(pop.a - pop.b),
        interact_gap=_var(pe.a_star - pe.b_star),
    )


def precision_gaps(pop: Population, p_A: float) -> PrecisionGaps:
    pls = pls_summary(pop, p_A)
    p = pls.p_A
    Zc = pop.centered_Z
    sigma2_E = _var(Zc @ pls.Q_E)
    sigma2_D = _var(Zc @ pls.Q_diff)
    return PrecisionGaps(
        unadjusted_minus_interact=sigma2_E / (p * (1 - p)),
        adjusted_minus_interact=(2 * p - 1) ** 2 * sigma2_D / (p * (1 - p)),
    )


# ─── Bias leading terms ───────────────────────────────────────────────────────

def bias_leading_adjusted(pop: Population, p_A: float, covariate_index: int = 0) -> float:
    _check_share(p_A)
    z = _single_covariate(pop, covariate_index)
    zc2 = (z - z.mean()) ** 2
    effect = (pop.a - pop.b) - pop.ate
    return -(1.0 / pop.n) * (1.0 / _var(z)) * float(np.mean(effect * zc2))


def bias_leading_interact(pop: Population, p_A: float) -> float:
    pls, pe = _errors(pop, p_A)
    z = _single_covariate(pop)
    n = pop.n
    n_A = pls.p_A * n
    zc2 = (z - z.mean()) ** 2
    term_a = (1.0 / n_A - 1.0 / n) * float(np.mean(pe.a_star * zc2))
    term_b = (1.0 / (n - n_A) - 1.0 / n) * float(np.mean(pe.b_star * zc2))
    return -(1.0 / _var(z)) * (term_a - term_b)


def bias_estimate_from_sample(data: ObservedData, contrast=None) -> BiasEstimate:
    """
    Plug-in estimates of both leading bias terms: the sample variance of z
    replaces σ²_z and within-group sample covariances with (z − z̄)² replace
    the population limits.
    """
    a, b = resolve_contrast(data, contrast)
    data = data.restrict((a, b))
    if data.K != 1:
        raise MultiCovariateUnsupported(
            f"Bias estimates are defined for a single covariate; data have {data.K}."
        )
    for label in (a, b):
        if data.size(label) < 3:
            raise GroupTooSmall(f"Group '{label}' needs at least 3 members for a bias estimate.")

    z = data.Z[:, 0]
    s2_z = float(np.var(z, ddof=1))
    if s2_z <= 0:
        raise DegenerateAuxiliary("The covariate is constant; the bias estimate is undefined.")
    w = (z - z.mean()) ** 2
    n = data.n

    outcome_cov, residual_cov, sizes = {}, {}, {}
    for label in (a, b):
        in_group = data.mask(label)
        y_g, z_g, w_g = data.y[in_group], z[in_group], w[in_group]
        sizes[label] = y_g.shape[0]
        outcome_cov[label] = float(np.cov(y_g, w_g, ddof=1)[0, 1])
        resid = least_squares(np.column_stack([np.ones(sizes[label]), z_g]), y_g).residuals
        residual_cov[label] = float(resid @ (w_g - w_g.mean())) / (sizes[label] - 1)

    adjusted = -(1.0 / n) * (1.0 / s2_z) * (outcome_cov[a] - outcome_cov[b])
    interact = -(1.0 / s2_z) * (
        (1.0 / sizes[a] - 1.0 / n) * residual_cov[a] - (1.0 / sizes[b] - 1.0 / n) * residual_cov[b]
    )
    return BiasEstimate(adjusted=adjusted, interact=interact)


# ─── Report ───────────────────────────────────────────────────────────────────

def asymptotic_report(pop: Population, p_A: float) -> AsymptoticReport:
    pls = pls_summary(pop, p_A)
    variances = {
        EstimatorKind.UNADJUSTED.value: asym_var_unadjusted(pop, p_A),
        EstimatorKind.ADJUSTED.value: asym_var_adjusted(pop, p_A),
        EstimatorKind.INTERACT.value: asym_var_interact(pop, p_A),
    }
    # Asymptotically equivalent to the interacted estimator.
    variances[EstimatorKind.TYRANNY.value] = variances[EstimatorKind.INTERACT.value]
    sds = {kind: float(np.sqrt(max(v, 0.0) / pop.n)) for kind, v in variances.items()}

    bias = None
    if pop.K == 1 and _var(pop.Z[:, 0]) > 0:
        bias = {
            EstimatorKind.ADJUSTED.value: bias_leading_adjusted(pop, p_A),
            EstimatorKind.INTERACT.value: bias_leading_interact(pop, p_A),
        }

    return AsymptoticReport(
        n=pop.n,
        p_A=pls.p_A,
        ate=pop.ate,
        variances=variances,
        sds=sds,
        sandwich=sandwich_limits(pop, p_A),
        gaps=precision_gaps(pop, p_A),
        pls=pls,
        bias_leading=bias,
    )
