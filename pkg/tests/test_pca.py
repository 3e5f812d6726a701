import warnings

import numpy as np
import pytest

from pcadr import (
    ConstraintModel,
    DataSet,
    NoiseModel,
    alpha_metric,
    detect_order,
    pca_denoise,
    pca_identify,
    reconcile_full,
    rmse_report,
    simulate,
)
from pcadr.errors import DimensionMismatch, OrderOutOfRange, UndersampledDataWarning

from conftest import FLOW_NAMES, make_flow_spec


def _dataset(y, names=None):
    names = names or tuple(f"v{i + 1}" for i in range(y.shape[0]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UndersampledDataWarning)
        return DataSet(np.asarray(y, dtype=float), names)


# ---------------------------------------------------------------------------
# detect_order
# ---------------------------------------------------------------------------


def test_detect_order_four_constraint_spectrum():
    assert detect_order([263.16, 21.83, 1.05, 1.04, 1.01, 0.98], 0.1) == 4


def test_detect_order_single_constraint_spectrum():
    assert detect_order([169.84, 18.96, 1.03], 0.1) == 1


def test_detect_order_no_unity_block():
    assert detect_order([5.0, 4.0, 3.0], 0.05) == 0


def test_detect_order_extends_through_ties():
    # The boundary value equals the block values: it must be absorbed, never split.
    assert detect_order([9.0, 1.0, 1.0, 1.0], 0.1) == 3


def test_detect_order_requires_descending():
    with pytest.raises(ValueError):
        detect_order([1.0, 2.0])


# ---------------------------------------------------------------------------
# pca_denoise
# ---------------------------------------------------------------------------


def test_denoise_full_rank_is_identity(flow_data):
    out = pca_denoise(flow_data, flow_data.n_variables)
    np.testing.assert_allclose(out, flow_data.measurements, atol=1e-10)


def test_denoise_exact_low_rank():
    u = np.array([[1.0], [2.0], [-1.0]])
    v = np.array([[3.0, 1.0, 0.5, -2.0]])
    data = _dataset(u @ v)
    out = pca_denoise(data, 1)
    np.testing.assert_allclose(out, data.measurements, atol=1e-10)


def test_denoise_equals_reconciliation_with_estimated_model():
    # Identity-noise equivalence: rank-p truncation == reconciliation against
    # the model built from the discarded singular vectors.
    rng = np.random.default_rng(17)
    for _ in range(25):
        n = int(rng.integers(3, 8))
        cols = int(rng.integers(n, 40))
        p = int(rng.integers(1, n))
        y = rng.normal(size=(n, cols)) * rng.uniform(0.5, 3.0)
        data = _dataset(y)
        denoised = pca_denoise(data, p)
        u = np.linalg.svd(y / np.sqrt(cols), full_matrices=False)[0]
        model = ConstraintModel(u[:, p:].T, data.variable_names)
        reconciled = reconcile_full(model, NoiseModel.identity(n), data)
        np.testing.assert_allclose(
            denoised, reconciled, rtol=1e-9, atol=1e-9 * np.abs(y).max()
        )


def test_denoise_rank_bounds(flow_data):
    with pytest.raises(OrderOutOfRange):
        pca_denoise(flow_data, 0)
    with pytest.raises(OrderOutOfRange):
        pca_denoise(flow_data, 7)


# ---------------------------------------------------------------------------
# pca_identify
# ---------------------------------------------------------------------------


def test_identify_noise_free_exact_rank(flow_model):
    data = simulate(make_flow_spec(flow_model, seed=2, n_samples=50))
    clean = DataSet(data.true_values, FLOW_NAMES)
    result = pca_identify(clean, NoiseModel.identity(6), order=4)
    assert np.abs(result.singular_values[-4:]).max() <= 1e-12
    # Estimated rows span the left null space of the true values exactly.
    assert alpha_metric(result.model, flow_model) <= 1e-9
    np.testing.assert_allclose(result.reconciled, clean.measurements, atol=1e-10)


def test_identify_two_variable_population_oracle():
    # One balance a = b with unit noise: the population covariance is
    # c * ones(2,2) + I, whose trailing eigenpair is (1, (1,-1)/sqrt(2)).
    rng = np.random.default_rng(42)
    n_samples = 100_000
    x = 10.0 + 2.0 * rng.standard_normal(n_samples)
    y = np.vstack([x, x]) + rng.standard_normal((2, n_samples))
    data = _dataset(y, ("a", "b"))
    result = pca_identify(data, NoiseModel.identity(2), order=1)

    c = np.mean(x**2)
    population = np.array([[c + 1.0, c], [c, c + 1.0]])
    eigvals, eigvecs = np.linalg.eigh(population)
    assert result.singular_values[-1] == pytest.approx(np.sqrt(eigvals[0]), rel=0.02)
    row = result.model.matrix[0] / np.linalg.norm(result.model.matrix[0])
    target = eigvecs[:, 0] / np.linalg.norm(eigvecs[:, 0])
    assert min(np.abs(row - target).max(), np.abs(row + target).max()) <= 0.02


def test_identify_flow_spectrum_pattern(flow_model, flow_noise, flow_data):
    result = pca_identify(flow_data, flow_noise)
    spectrum = result.singular_values
    assert result.model.n_constraints == 4  # detected, not supplied
    assert spectrum[0] > 100 and spectrum[1] > 10
    tail = spectrum[-4:]
    assert np.all((tail >= 0.9) & (tail <= 1.1))

    # Reconciliation via the estimated model is within a few percent of using truth.
    estimated_rmse = rmse_report(result.reconciled, flow_data.true_values)
    true_model_rmse = rmse_report(
        reconcile_full(flow_model, flow_noise, flow_data), flow_data.true_values
    )
    np.testing.assert_allclose(estimated_rmse, true_model_rmse, rtol=0.05)

    assert alpha_metric(result.model, flow_model) <= 0.1
    scale = np.abs(result.reconciled).max()
    assert result.max_constraint_residual() <= 1e-8 * scale


def test_identify_scaled_spectrum_law(flow_model, flow_noise):
    hits = 0
    for seed in range(20):
        data = simulate(make_flow_spec(flow_model, seed=seed))
        result = pca_identify(data, flow_noise, order=4)
        tail = result.singular_values[-4:]
        hits += bool(np.all((tail >= 0.9) & (tail <= 1.1)))
    assert hits >= 19


def test_identify_alpha_decreases_with_samples(flow_model, flow_noise):
    alphas = []
    for n_samples in (200, 2000, 20_000):
        data = simulate(make_flow_spec(flow_model, seed=9, n_samples=n_samples))
        result = pca_identify(data, flow_noise, order=4)
        alphas.append(alpha_metric(result.model, flow_model))
    assert alphas[2] < alphas[1] < alphas[0]


def test_identify_order_out_of_range(flow_data, flow_noise):
    with pytest.raises(OrderOutOfRange):
        pca_identify(flow_data, flow_noise, order=6)
    with pytest.raises(OrderOutOfRange):
        pca_identify(flow_data, flow_noise, order=0)


def test_identify_detection_failure_raises(flow_model):
    data = simulate(make_flow_spec(flow_model, seed=3, n_samples=60))
    clean = DataSet(data.true_values, FLOW_NAMES)
    # Noise-free data has no unity block, only exact zeros.
    with pytest.raises(OrderOutOfRange):
        pca_identify(clean, NoiseModel.identity(6))


def test_identify_needs_enough_samples(flow_model, flow_noise):
    data = _dataset(np.zeros((6, 5)), FLOW_NAMES)
    with pytest.raises(DimensionMismatch):
        pca_identify(data, flow_noise, order=4)
