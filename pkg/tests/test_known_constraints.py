import numpy as np
import pytest
from scipy.linalg import subspace_angles

from pcadr import (
    ConstraintModel,
    IpcaConfig,
    NoiseModel,
    alpha_metric,
    identify_with_known,
    ipca,
    pca_identify,
    reconcile_full,
    simulate,
)
from pcadr.errors import KnownRankDeficient, OrderConflict

from conftest import FLOW_ERROR_SD, FLOW_MATRIX, FLOW_NAMES, make_flow_spec

TRUE_SD = np.array([FLOW_ERROR_SD[v] for v in FLOW_NAMES])


@pytest.fixture(scope="module")
def known_two(flow_model):
    return ConstraintModel(FLOW_MATRIX[:2], FLOW_NAMES)


def test_known_ipca_spectrum_shape(flow_model, flow_data, known_two):
    result = identify_with_known(flow_data, known_two, order_total=4)
    assert result.converged
    s = result.singular_values
    # Exactly two projection zeros, and the two freshly estimated directions
    # sit in the unity band.
    assert int(np.sum(s < 1e-10 * s[0])) == 2
    assert np.all((s[2:4] >= 0.9) & (s[2:4] <= 1.1))
    assert alpha_metric(result.model, flow_model) <= 0.05
    np.testing.assert_allclose(result.noise.sd, TRUE_SD, rtol=0.15)
    scale = np.abs(result.reconciled).max()
    assert result.max_constraint_residual() <= 1e-8 * scale


def test_known_rows_preserved_and_composed_full_rank(flow_data, known_two):
    result = identify_with_known(flow_data, known_two, order_total=4)
    matrix = result.model.matrix
    np.testing.assert_array_equal(matrix[2:], known_two.matrix)
    svals = np.linalg.svd(matrix, compute_uv=False)
    assert svals[-1] > 1e-8 * svals[0]
    # Estimated rows are orthogonal to the known rows in the weighted sense.
    cross = matrix[:2] @ result.noise.sigma @ known_two.matrix.T
    assert np.abs(cross).max() <= 1e-9


def test_zero_block_vectors_span_known_rows(flow_data, flow_noise, known_two):
    result = identify_with_known(flow_data, known_two, noise=flow_noise, order_total=4)
    chol = flow_noise.cholesky_lower()
    from scipy.linalg import solve_triangular

    scaled = solve_triangular(chol, flow_data.measurements, lower=True)
    g = known_two.matrix @ chol
    projector = np.eye(6) - g.T @ np.linalg.solve(g @ g.T, g)
    u, s, _ = np.linalg.svd(projector @ scaled / np.sqrt(flow_data.n_samples))
    assert np.all(s[-2:] <= 1e-10 * s[0])
    angles = subspace_angles(u[:, -2:], g.T)
    assert angles.max() <= 1e-6


def test_known_pca_orthogonality_identity_noise(flow_model, flow_data, known_two):
    result = identify_with_known(
        flow_data, known_two, noise=NoiseModel.identity(6), order_total=4
    )
    cross = result.model.matrix[:2] @ known_two.matrix.T
    assert np.abs(cross).max() <= 1e-9


def test_all_constraints_known_reduces_to_reconciliation(
    flow_model, flow_noise, flow_data
):
    result = identify_with_known(
        flow_data, flow_model, noise=flow_noise, order_total=4
    )
    expected = reconcile_full(flow_model, flow_noise, flow_data)
    np.testing.assert_allclose(
        result.reconciled, expected, rtol=1e-9, atol=1e-9 * np.abs(expected).max()
    )
    assert result.model.n_constraints == 4
    assert int(np.sum(result.singular_values < 1e-10 * result.singular_values[0])) == 4


def test_empty_known_equals_plain_identification(flow_noise, flow_data):
    empty = ConstraintModel(np.zeros((0, 6)), FLOW_NAMES)
    with_known = identify_with_known(flow_data, empty, noise=flow_noise)
    plain = pca_identify(flow_data, flow_noise)
    np.testing.assert_allclose(with_known.reconciled, plain.reconciled, atol=1e-10)
    np.testing.assert_allclose(
        with_known.singular_values, plain.singular_values, atol=1e-12
    )

    with_known_ipca = identify_with_known(flow_data, empty, order_total=4)
    plain_ipca, _ = ipca(flow_data, IpcaConfig(assumed_order=4))
    np.testing.assert_allclose(
        with_known_ipca.noise.sigma, plain_ipca.noise.sigma, rtol=1e-9
    )


def test_known_order_detected_when_noise_given(flow_noise, flow_data, known_two):
    result = identify_with_known(flow_data, known_two, noise=flow_noise)
    assert result.model.n_constraints == 4


def test_more_accurate_than_unconstrained(flow_model, known_two):
    known_alphas, plain_alphas = [], []
    for seed in range(8):
        data = simulate(make_flow_spec(flow_model, seed=seed))
        with_known = identify_with_known(data, known_two, order_total=4)
        plain, _ = ipca(data, IpcaConfig(assumed_order=4))
        known_alphas.append(alpha_metric(with_known.model, flow_model))
        plain_alphas.append(alpha_metric(plain.model, flow_model))
    assert np.median(known_alphas) <= np.median(plain_alphas)


def test_known_rank_deficient_rejected(flow_data):
    bad = ConstraintModel(
        np.vstack([FLOW_MATRIX[0], 2 * FLOW_MATRIX[0]]), FLOW_NAMES
    )
    with pytest.raises(KnownRankDeficient):
        identify_with_known(flow_data, bad, order_total=4)


def test_order_conflict_rejected(flow_data, known_two):
    with pytest.raises(OrderConflict):
        identify_with_known(flow_data, known_two, order_total=1)
