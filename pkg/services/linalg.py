"""
services/linalg.py
Dense weighted/unweighted least squares via pivoted Householder QR.

Design:
- Weights enter as row scaling by √w_i before factorization, so every
  quantity reported here lives in the weighted metric: Σ h_ii = rank and
  X'W ε̂ = 0.
- Residuals are reported on the original scale (y_i − x_i β) for every row,
  zero-weight rows included; those rows carry h_ii = 0.
- Rank tolerance follows the LAPACK convention ε · max(n, p) · |R_11|.
- Pure functions on immutable inputs; safe to call from any thread.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import qr, solve_triangular

from services.errors import NonFinite, RankDeficient


@dataclass(frozen=True)
class FitResult:
    coefficients: np.ndarray
    residuals: np.ndarray
    hat_diagonals: np.ndarray
    rank: int
    rss: float
    weights: Optional[np.ndarray] = None
    # (X'WX)^{-1}, the bread of every sandwich built on this fit
    bread: np.ndarray = field(default=None, repr=False)

    @property
    def n_obs(self) -> int:
        """Rows that actually enter the fit (positive weight)."""
        if self.weights is None:
            return int(self.residuals.shape[0])
        return int(np.count_nonzero(self.weights > 0))

    @property
    def n_params(self) -> int:
        return int(self.coefficients.shape[0])


@dataclass(frozen=True)
class _Factorization:
    q: np.ndarray
    r: np.ndarray
    pivot: np.ndarray
    sqrt_w: Optional[np.ndarray]


# ─── Input checks ─────────────────────────────────────────────────────────────

def as_design(X) -> np.ndarray:
    """Coerce to a 2-D float matrix and check the DesignMatrix invariants."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, np.newaxis]
    if X.ndim != 2:
        raise NonFinite(f"Design matrix must be 2-D, got {X.ndim} dimensions.")
    n, p = X.shape
    if p < 1:
        raise RankDeficient("Design matrix has no columns.")
    if n < p:
        raise RankDeficient(f"Design matrix has {n} rows but {p} columns.")
    if not np.all(np.isfinite(X)):
        raise NonFinite("Design matrix contains NaN or infinite entries.")
    return X


def _check_weights(w, n: int, p: int) -> Optional[np.ndarray]:
    if w is None:
        return None
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.shape[0] != n:
        raise NonFinite(f"Weight vector has length {w.shape[0]}, expected {n}.")
    if not np.all(np.isfinite(w)):
        raise NonFinite("Weights contain NaN or infinite entries.")
    if np.any(w < 0):
        raise NonFinite("Weights must be nonnegative.")
    if np.count_nonzero(w > 0) < p:
        raise RankDeficient(
            f"Only {np.count_nonzero(w > 0)} rows have positive weight; need at least {p}."
        )
    return w


# ─── Factorization ────────────────────────────────────────────────────────────

def _factorize(X: np.ndarray, w: Optional[np.ndarray]) -> _Factorization:
    n, p = X.shape
    sqrt_w = None if w is None else np.sqrt(w)
    Xw = X if sqrt_w is None else X * sqrt_w[:, np.newaxis]

    q, r, pivot = qr(Xw, mode="economic", pivoting=True)

    r_diag = np.abs(np.diag(r))
    tol = np.finfo(float).eps * max(n, p) * (r_diag[0] if r_diag.size else 0.0)
    rank = int(np.sum(r_diag > tol)) if r_diag[0] > 0 else 0
    if rank < p:
        dropped = np.sort(pivot[rank:]).tolist()
        raise RankDeficient(
            f"Design matrix has rank {rank} < {p} columns; "
            f"linearly dependent column(s): {dropped}. Drop or recode these covariates."
        )
    return _Factorization(q=q, r=r, pivot=pivot, sqrt_w=sqrt_w)


def _bread(fact: _Factorization) -> np.ndarray:
    p = fact.r.shape[1]
    r_inv = solve_triangular(fact.r, np.eye(p))
    inv_pivoted = r_inv @ r_inv.T
    bread = np.empty_like(inv_pivoted)
    bread[np.ix_(fact.pivot, fact.pivot)] = inv_pivoted
    return (bread + bread.T) / 2


# ─── Public API ───────────────────────────────────────────────────────────────

def least_squares(X, y, w=None) -> FitResult:
    """
    Minimize Σ w_i (y_i − x_i β)² for a full-column-rank X.

    Raises:
        RankDeficient when the column rank falls below p under tolerance.
        NonFinite on NaN/inf input or mismatched dimensions.
    """
    X = as_design(X)
    n, p = X.shape
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != n:
        raise NonFinite(f"Outcome has length {y.shape[0]}, design has {n} rows.")
    if not np.all(np.isfinite(y)):
        raise NonFinite("Outcome contains NaN or infinite entries.")
    w = _check_weights(w, n, p)

    fact = _factorize(X, w)
    yw = y if fact.sqrt_w is None else y * fact.sqrt_w

    beta_pivoted = solve_triangular(fact.r, fact.q.T @ yw)
    beta = np.empty(p)
    beta[fact.pivot] = beta_pivoted

    residuals = y - X @ beta
    weighted = residuals if w is None else residuals * fact.sqrt_w
    return FitResult(
        coefficients=beta,
        residuals=residuals,
        hat_diagonals=np.einsum("ij,ij->i", fact.q, fact.q),
        rank=p,
        rss=float(weighted @ weighted),
        weights=w,
        bread=_bread(fact),
    )


def hat_diagonals(X, w=None) -> np.ndarray:
    """h_ii = w_i x_i (X'WX)^{-1} x_i', so that Σ h_ii = p."""
    X = as_design(X)
    w = _check_weights(w, *X.shape)
    fact = _factorize(X, w)
    return np.einsum("ij,ij->i", fact.q, fact.q)
