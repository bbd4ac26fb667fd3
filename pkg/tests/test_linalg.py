import numpy as np
import pytest

from services.errors import NonFinite, RankDeficient
from services.linalg import hat_diagonals, least_squares

X3 = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]])


def test_exact_linear_fit():
    fit = least_squares(X3, [1.0, 2.0, 3.0])
    np.testing.assert_allclose(fit.coefficients, [1.0, 1.0], atol=1e-12)
    assert fit.rss == pytest.approx(0.0, abs=1e-20)
    assert fit.rank == 2
    np.testing.assert_allclose(fit.residuals, 0.0, atol=1e-12)


def test_simple_regression_leverage():
    expected = [5 / 6, 1 / 3, 5 / 6]
    np.testing.assert_allclose(least_squares(X3, [1.0, 0.0, 4.0]).hat_diagonals, expected, rtol=1e-12)
    np.testing.assert_allclose(hat_diagonals(X3), expected, rtol=1e-12)


def test_intercept_only_leverage():
    np.testing.assert_allclose(hat_diagonals(np.ones((4, 1))), 0.25, rtol=1e-12)


def test_square_design_has_unit_leverage():
    X = np.array([[1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1.0, 3.0, 2.0]])
    np.testing.assert_allclose(hat_diagonals(X), 1.0, rtol=1e-10)


def test_duplicated_column_is_rank_deficient():
    X = np.column_stack([np.ones(5), np.arange(5.0), np.arange(5.0)])
    with pytest.raises(RankDeficient, match="linearly dependent"):
        least_squares(X, np.arange(5.0))


def test_more_columns_than_rows():
    with pytest.raises(RankDeficient):
        least_squares(np.ones((2, 3)), [1.0, 2.0])


def test_nonfinite_input():
    with pytest.raises(NonFinite):
        least_squares(X3, [1.0, np.nan, 3.0])
    with pytest.raises(NonFinite):
        least_squares(X3, [1.0, 2.0, 3.0], w=[1.0, -1.0, 1.0])


def test_normal_equations_and_leverage_sum(rng):
    X = np.column_stack([np.ones(30), rng.normal(size=(30, 3))])
    y = rng.normal(size=30)
    fit = least_squares(X, y)
    np.testing.assert_allclose(X.T @ fit.residuals, 0.0, atol=1e-10)
    assert fit.hat_diagonals.sum() == pytest.approx(4.0, rel=1e-10)
    np.testing.assert_allclose(fit.coefficients, np.linalg.lstsq(X, y, rcond=None)[0], rtol=1e-10)
    np.testing.assert_allclose(fit.bread, np.linalg.inv(X.T @ X), rtol=1e-8, atol=1e-12)


def test_weighted_fit_matches_row_scaling(rng):
    X = np.column_stack([np.ones(20), rng.normal(size=20)])
    y = rng.normal(size=20)
    w = rng.uniform(0.5, 3.0, size=20)
    fit = least_squares(X, y, w=w)
    sw = np.sqrt(w)
    beta = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)[0]
    np.testing.assert_allclose(fit.coefficients, beta, rtol=1e-10)
    np.testing.assert_allclose(X.T @ (w * fit.residuals), 0.0, atol=1e-10)
    assert fit.hat_diagonals.sum() == pytest.approx(2.0, rel=1e-10)
    assert fit.rss == pytest.approx(float(w @ fit.residuals**2), rel=1e-12)


def test_unit_weights_match_unweighted(rng):
    X = np.column_stack([np.ones(10), rng.normal(size=10)])
    y = rng.normal(size=10)
    np.testing.assert_allclose(
        least_squares(X, y, w=np.ones(10)).coefficients, least_squares(X, y).coefficients, rtol=1e-12
    )


def test_zero_weight_rows_are_ignored():
    X = np.column_stack([np.ones(4), [0.0, 1.0, 2.0, 3.0]])
    y = np.array([1.0, 2.0, 3.0, 100.0])
    fit = least_squares(X, y, w=[1.0, 1.0, 1.0, 0.0])
    np.testing.assert_allclose(fit.coefficients, [1.0, 1.0], atol=1e-10)
    assert fit.n_obs == 3
    assert fit.hat_diagonals[3] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("weighted", [False, True])
def test_row_permutation_invariance(rng, weighted):
    X = np.column_stack([np.ones(25), rng.normal(size=(25, 2))])
    y = rng.normal(size=25)
    w = rng.uniform(0.5, 2.0, size=25) if weighted else None
    order = rng.permutation(25)
    fit = least_squares(X, y, w=w)
    shuffled = least_squares(X[order], y[order], w=None if w is None else w[order])
    np.testing.assert_allclose(shuffled.coefficients, fit.coefficients, rtol=1e-10)
    np.testing.assert_allclose(shuffled.residuals, fit.residuals[order], rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(shuffled.hat_diagonals, fit.hat_diagonals[order], rtol=1e-10)
    assert shuffled.rss == pytest.approx(fit.rss, rel=1e-10)


@pytest.mark.parametrize("weighted", [False, True])
def test_projection_is_idempotent(rng, weighted):
    X = np.column_stack([np.ones(20), rng.normal(size=(20, 3))])
    y = rng.normal(size=20)
    w = rng.uniform(0.5, 2.0, size=20) if weighted else None
    fit = least_squares(X, y, w=w)
    fitted = y - fit.residuals
    refit = least_squares(X, fitted, w=w)
    np.testing.assert_allclose(refit.coefficients, fit.coefficients, rtol=1e-10)
    np.testing.assert_allclose(refit.residuals, 0.0, atol=1e-10)
    # residuals are already orthogonal to the column space
    np.testing.assert_allclose(least_squares(X, fit.residuals, w=w).coefficients, 0.0, atol=1e-10)
