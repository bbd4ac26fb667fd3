import numpy as np
import pytest

from conftest import random_dataset
from services.errors import EmptyGroup, GroupTooSmall, NonFinite, RankDeficient, UnsupportedDesign
from services.estimators import (
    EstimatorKind,
    ObservedData,
    ate_adjusted,
    ate_interact,
    ate_targeted_ancova,
    ate_tyranny,
    ate_unadjusted,
    estimate,
    minority_weights,
    resolve_contrast,
)

AB = ("A", "B")


# ── ObservedData ──────────────────────────────────────────────────────────

def test_observed_data_shapes(toy_data):
    assert toy_data.n == 4
    assert toy_data.K == 1
    assert toy_data.labels == ["A", "B"]
    assert toy_data.size("A") == 2


def test_observed_data_rejects_nan():
    with pytest.raises(NonFinite):
        ObservedData(y=[1.0, np.nan], group=["A", "B"])


def test_default_contrast_prefers_larger_group():
    data = ObservedData(y=[1.0, 2.0, 3.0, 4.0, 5.0], group=["ctl", "trt", "trt", "trt", "ctl"])
    assert data.default_contrast() == ("trt", "ctl")


def test_contrast_checks():
    data = ObservedData(y=[1.0, 2.0], group=["A", "B"])
    with pytest.raises(UnsupportedDesign):
        resolve_contrast(data, ("A", "A"))
    with pytest.raises(EmptyGroup):
        resolve_contrast(data, ("A", "C"))
    with pytest.raises(EmptyGroup):
        ObservedData(y=[1.0, 2.0], group=["A", "A"]).default_contrast()


# ── unadjusted ────────────────────────────────────────────────────────────

def test_unadjusted_hand_value(two_groups):
    assert ate_unadjusted(two_groups, AB).point == pytest.approx(1.0)


def test_unadjusted_antisymmetric(two_groups):
    assert ate_unadjusted(two_groups, ("B", "A")).point == pytest.approx(-1.0)


def test_unadjusted_identical_means():
    data = ObservedData(y=[1.0, 3.0, 2.0, 2.0], group=["A", "A", "B", "B"])
    assert ate_unadjusted(data, AB).point == pytest.approx(0.0, abs=1e-15)


def test_unadjusted_fit_carries_contrast(two_groups):
    est = ate_unadjusted(two_groups, AB)
    assert est.contrast_vector @ est.fit.coefficients == pytest.approx(est.point, rel=1e-12)


# ── adjusted ──────────────────────────────────────────────────────────────

def test_adjusted_hand_value(toy_data):
    est = ate_adjusted(toy_data, AB)
    assert est.point == pytest.approx(2.0, rel=1e-12)
    assert est.fit.coefficients[-1] == pytest.approx(1.0, rel=1e-12)


def test_adjusted_without_covariates_is_unadjusted(rng):
    data = random_dataset(rng, 7, 11)
    assert ate_adjusted(data, AB).point == pytest.approx(ate_unadjusted(data, AB).point, rel=1e-12)


def test_adjusted_balanced_covariate_is_unadjusted():
    data = ObservedData(
        y=[3.0, 1.0, 4.0, 1.0, 5.0, 9.0],
        group=["A", "A", "A", "B", "B", "B"],
        Z=[0.0, 1.0, 2.0, 2.0, 1.0, 0.0],
    )
    assert ate_adjusted(data, AB).point == pytest.approx(ate_unadjusted(data, AB).point, rel=1e-10)


def test_adjusted_constant_covariate_is_rank_deficient(two_groups):
    data = ObservedData(y=two_groups.y, group=two_groups.group, Z=np.ones(4))
    with pytest.raises(RankDeficient):
        ate_adjusted(data, AB)


def test_adjusted_three_groups():
    y = [1.0, 2.0, 3.0, 5.0, 6.0, 7.0, 0.0, 1.0, 2.0]
    group = ["A"] * 3 + ["C"] * 3 + ["B"] * 3
    data = ObservedData(y=y, group=group)
    assert ate_adjusted(data, ("C", "B")).point == pytest.approx(5.0, rel=1e-12)
    assert ate_adjusted(data, ("A", "B")).point == pytest.approx(1.0, rel=1e-12)


# ── interact ──────────────────────────────────────────────────────────────

def test_interact_hand_value(line_data):
    est = ate_interact(line_data, AB)
    assert est.point == pytest.approx(2.0, rel=1e-12)
    assert est.details["A"]["slopes"] == pytest.approx([2.0])
    assert est.details["B"]["slopes"] == pytest.approx([0.0], abs=1e-12)
    assert est.details["A"]["adjustment"] == pytest.approx(1.0)


def test_interact_matches_single_regression(rng):
    data = random_dataset(rng, 12, 20, K=2)
    est = ate_interact(data, AB)
    assert est.contrast_vector @ est.fit.coefficients == pytest.approx(est.point, rel=1e-10)


def test_interact_identical_lines_is_zero():
    z = np.array([0.0, 1.0, 2.0, 0.5, 1.5, 2.5])
    data = ObservedData(y=1.0 + 3.0 * z, group=["A"] * 3 + ["B"] * 3, Z=z)
    assert ate_interact(data, AB).point == pytest.approx(0.0, abs=1e-12)


def test_interact_poststratification():
    data = ObservedData(
        y=[1.0, 3.0, 6.0, 0.0, 2.0, 4.0],
        group=["A", "A", "A", "B", "B", "B"],
        Z=[0.0, 0.0, 1.0, 0.0, 1.0, 1.0],
    )
    # stratum differences 2 and 3, each stratum holds half of the sample
    assert ate_interact(data, AB).point == pytest.approx(2.5, rel=1e-12)


def test_interact_group_too_small(toy_data):
    with pytest.raises(GroupTooSmall):
        ate_interact(toy_data, AB)


# ── tyranny ───────────────────────────────────────────────────────────────

def test_minority_weights():
    data = ObservedData(y=np.zeros(4), group=["A", "B", "B", "B"])
    np.testing.assert_allclose(minority_weights(data, AB), [3.0, 1 / 3, 1 / 3, 1 / 3])


@pytest.mark.parametrize("seed", range(10))
def test_tyranny_balanced_equals_adjusted(seed):
    data = random_dataset(np.random.default_rng(seed), 15, 15, K=2)
    assert ate_tyranny(data, AB).point == pytest.approx(ate_adjusted(data, AB).point, rel=1e-10)


def test_tyranny_without_covariates_is_unadjusted(rng):
    data = random_dataset(rng, 5, 13)
    assert ate_tyranny(data, AB).point == pytest.approx(ate_unadjusted(data, AB).point, rel=1e-10)


def test_tyranny_needs_two_groups():
    data = ObservedData(y=np.arange(6.0), group=["A", "A", "B", "B", "C", "C"])
    with pytest.raises(UnsupportedDesign):
        ate_tyranny(data, AB)


# ── targeted ANCOVA ───────────────────────────────────────────────────────

def test_targeted_ancova_without_covariates_is_unadjusted(rng):
    data = random_dataset(rng, 6, 9)
    assert ate_targeted_ancova(data, AB).point == pytest.approx(ate_unadjusted(data, AB).point, rel=1e-10)


def test_targeted_ancova_shared_plane_is_zero():
    z = np.array([0.0, 1.0, 2.0, 3.0, 0.5, 1.5, 2.5])
    data = ObservedData(y=2.0 - z, group=["A"] * 4 + ["B"] * 3, Z=z)
    assert ate_targeted_ancova(data, AB).point == pytest.approx(0.0, abs=1e-12)


def test_targeted_ancova_balanced_agrees_with_tyranny():
    z = [0.0, 1.0, 2.0, 3.0, 3.0, 2.0, 1.0, 0.0]
    y = [1.0, 2.5, 2.0, 4.0, 0.0, 1.5, 0.5, -1.0]
    data = ObservedData(y=y, group=["A"] * 4 + ["B"] * 4, Z=z)
    assert ate_targeted_ancova(data, AB).point == pytest.approx(ate_tyranny(data, AB).point, abs=1e-6)


def test_targeted_ancova_second_step_fit(rng):
    data = random_dataset(rng, 10, 14, K=1)
    est = ate_targeted_ancova(data, AB)
    assert est.fit.coefficients[1] == pytest.approx(est.point, rel=1e-10)


# ── dispatch ──────────────────────────────────────────────────────────────

@pytest.mark.parametrize("kind", list(EstimatorKind))
def test_estimate_dispatch(kind, rng):
    data = random_dataset(rng, 10, 10, K=1)
    est = estimate(data, kind.value, AB)
    assert est.estimator_kind is kind
    assert est.contrast == AB
    assert np.isfinite(est.point)


# ── invariances ───────────────────────────────────────────────────────────

@pytest.fixture
def covariate_data() -> ObservedData:
    return random_dataset(np.random.default_rng(31), 11, 17, K=2)


@pytest.mark.parametrize("kind", list(EstimatorKind))
def test_swapped_contrast_negates_point(kind, covariate_data):
    forward = estimate(covariate_data, kind, ("A", "B")).point
    backward = estimate(covariate_data, kind, ("B", "A")).point
    assert backward == pytest.approx(-forward, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("kind", list(EstimatorKind))
def test_outcome_location_scale_equivariance(kind, covariate_data):
    moved = ObservedData(y=3.0 * covariate_data.y + 7.0, group=covariate_data.group, Z=covariate_data.Z)
    point = estimate(covariate_data, kind, AB).point
    assert estimate(moved, kind, AB).point == pytest.approx(3.0 * point, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("kind", list(EstimatorKind))
def test_covariate_affine_invariance(kind, covariate_data):
    M = np.array([[2.0, 0.5], [-1.0, 3.0]])
    recoded = ObservedData(
        y=covariate_data.y, group=covariate_data.group, Z=covariate_data.Z @ M + np.array([4.0, -2.5])
    )
    point = estimate(covariate_data, kind, AB).point
    assert estimate(recoded, kind, AB).point == pytest.approx(point, rel=1e-8, abs=1e-10)


def test_interact_three_groups_matches_single_regression():
    rng = np.random.default_rng(5)
    n = 30
    group = ["A"] * 8 + ["B"] * 10 + ["C"] * 12
    Z = rng.normal(size=(n, 1))
    y = rng.normal(size=n) + 2.0 * Z[:, 0] * (np.array(group) == "C")
    data = ObservedData(y=y, group=group, Z=Z)
    for contrast in (("C", "B"), ("A", "C")):
        est = ate_interact(data, contrast)
        assert est.contrast_vector @ est.fit.coefficients == pytest.approx(est.point, rel=1e-10, abs=1e-12)
    assert ate_interact(data, ("C", "A")).point == pytest.approx(-ate_interact(data, ("A", "C")).point, rel=1e-10)


@pytest.mark.parametrize("seed", range(100))
def test_tyranny_balanced_collapse_on_random_datasets(seed):
    rng = np.random.default_rng(1000 + seed)
    half = int(rng.integers(5, 30))
    data = random_dataset(rng, half, half, K=int(rng.integers(1, 4)))
    assert ate_tyranny(data, AB).point == pytest.approx(ate_adjusted(data, AB).point, rel=1e-10, abs=1e-12)
