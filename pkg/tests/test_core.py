import numpy as np
import pytest

from pcadr import (
    ConstraintModel,
    DataSet,
    NoiseModel,
    SpectralDecomposition,
    residuals,
    validate_model,
)
from pcadr.core import (
    ConstraintCountNotLessThanVariables,
    NonFiniteEntry,
    RankDeficient,
)
from pcadr.errors import (
    CholeskyFailure,
    DimensionMismatch,
    InvalidModel,
    UndersampledDataWarning,
)

from conftest import FLOW_NAMES, make_flow_spec


# ---------------------------------------------------------------------------
# validate_model
# ---------------------------------------------------------------------------


def test_validate_flow_model_clean(flow_model):
    assert validate_model(flow_model) == []


def test_validate_duplicated_row_is_rank_deficient():
    model = ConstraintModel([[1, -1, 0], [1, -1, 0]], ("a", "b", "c"))
    violations = validate_model(model)
    assert violations == [RankDeficient(rank=1, n_constraints=2)]
    with pytest.raises(InvalidModel):
        model.require_valid()


def test_validate_square_model_rejected():
    model = ConstraintModel(np.eye(3), ("a", "b", "c"))
    violations = validate_model(model)
    assert any(isinstance(v, ConstraintCountNotLessThanVariables) for v in violations)


def test_validate_non_finite_entries_reported():
    model = ConstraintModel([[1.0, np.nan, 0.0]], ("a", "b", "c"))
    violations = validate_model(model)
    assert violations == [NonFiniteEntry(row=0, column=1)]


def test_violation_messages_name_the_invariant():
    model = ConstraintModel([[1, -1, 0], [2, -2, 0]], ("a", "b", "c"))
    (violation,) = validate_model(model)
    assert "rank 1" in str(violation) and "2 rows" in str(violation)


def test_duplicate_names_rejected_at_construction():
    with pytest.raises(DimensionMismatch):
        ConstraintModel([[1, -1]], ("a", "a"))


def test_name_count_must_match_columns():
    with pytest.raises(DimensionMismatch):
        ConstraintModel([[1, -1, 0]], ("a", "b"))


def test_model_matrix_is_immutable(flow_model):
    with pytest.raises(ValueError):
        flow_model.matrix[0, 0] = 7.0


# ---------------------------------------------------------------------------
# residuals
# ---------------------------------------------------------------------------


def test_residuals_zero_on_true_values(flow_model):
    from pcadr import simulate

    data = simulate(make_flow_spec(flow_model, seed=11))
    r = residuals(flow_model, data.true_values)
    scale = np.abs(flow_model.matrix).max() * np.abs(data.true_values).max()
    assert np.abs(r).max() <= 1e-12 * scale


def test_residuals_single_constraint():
    model = ConstraintModel([[1, -1]], ("a", "b"))
    r = residuals(model, np.array([[3.0], [1.0]]))
    assert r.shape == (1, 1)
    assert r[0, 0] == pytest.approx(2.0)


def _triple_loop_residuals(matrix, y):
    m, n = matrix.shape
    out = np.zeros((m, y.shape[1]))
    for k in range(y.shape[1]):
        for i in range(m):
            acc = 0.0
            for j in range(n):
                acc += matrix[i, j] * y[j, k]
            out[i, k] = acc
    return out


def test_residuals_match_triple_loop_oracle_on_noisy_data(flow_model):
    from pcadr import simulate

    data = simulate(make_flow_spec(flow_model, seed=11, n_samples=50))
    r = residuals(flow_model, data)
    expected = _triple_loop_residuals(flow_model.matrix, data.measurements)
    np.testing.assert_allclose(r, expected, rtol=0, atol=1e-12)
    # Residual magnitudes are on the scale of the error SDs, far below the flows.
    assert 1e-3 < np.abs(r).max() < 2.0


def test_residuals_dimension_mismatch(flow_model):
    with pytest.raises(DimensionMismatch):
        residuals(flow_model, np.zeros((3, 5)))


def test_residuals_rejects_misaligned_dataset(flow_model):
    data = DataSet(np.zeros((6, 6)), tuple(reversed(FLOW_NAMES)))
    with pytest.raises(DimensionMismatch):
        residuals(flow_model, data)


# ---------------------------------------------------------------------------
# NoiseModel
# ---------------------------------------------------------------------------


def test_noise_requires_symmetry():
    with pytest.raises(ValueError, match="symmetric"):
        NoiseModel([[1.0, 0.5], [0.2, 1.0]])


def test_noise_requires_positive_definite():
    with pytest.raises(CholeskyFailure):
        NoiseModel([[1.0, 2.0], [2.0, 1.0]])


def test_noise_cholesky_reconstructs():
    rng = np.random.default_rng(0)
    basis = rng.normal(size=(4, 4))
    noise = NoiseModel(basis @ basis.T + 4 * np.eye(4))
    chol = noise.cholesky_lower()
    np.testing.assert_allclose(chol @ chol.T, noise.sigma, rtol=1e-12, atol=1e-12)
    assert np.all(np.diag(chol) > 0)


def test_noise_sd_and_select():
    noise = NoiseModel.from_sd([0.1, 0.2, 0.3])
    np.testing.assert_allclose(noise.sd, [0.1, 0.2, 0.3])
    sub = noise.select([2, 0])
    np.testing.assert_allclose(sub.sigma, np.diag([0.09, 0.01]))


# ---------------------------------------------------------------------------
# DataSet
# ---------------------------------------------------------------------------


def test_dataset_rejects_non_finite():
    with pytest.raises(ValueError):
        DataSet([[1.0, np.inf]], ("a",))


def test_dataset_warns_when_undersampled():
    with pytest.warns(UndersampledDataWarning):
        DataSet(np.zeros((3, 2)), ("a", "b", "c"))


def test_dataset_truth_shape_checked():
    with pytest.raises(DimensionMismatch):
        DataSet(np.zeros((2, 5)), ("a", "b"), true_values=np.zeros((2, 4)))


def test_dataset_select_reorders_and_subsets(flow_data):
    sub = flow_data.select(["F5", "F1"])
    assert sub.variable_names == ("F5", "F1")
    np.testing.assert_array_equal(sub.measurements[0], flow_data.measurements[4])
    np.testing.assert_array_equal(sub.true_values[1], flow_data.true_values[0])


# ---------------------------------------------------------------------------
# SpectralDecomposition
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("seed,n,cols,p", [(0, 4, 30, 2), (1, 6, 100, 3), (2, 5, 5, 5)])
def test_spectral_reconstruction(seed, n, cols, p):
    rng = np.random.default_rng(seed)
    matrix = rng.normal(size=(n, cols))
    decomp = SpectralDecomposition.from_matrix(matrix, p)
    err = np.linalg.norm(decomp.reconstruct() - matrix) / np.linalg.norm(matrix)
    assert err <= 1e-9


def test_spectral_blocks_orthonormal_and_sorted():
    rng = np.random.default_rng(3)
    matrix = rng.normal(size=(5, 40))
    decomp = SpectralDecomposition.from_matrix(matrix, 2)
    left = np.hstack([decomp.left_signal, decomp.left_residual])
    np.testing.assert_allclose(left.T @ left, np.eye(5), atol=1e-10)
    values = decomp.values
    assert np.all(np.diff(values) <= 1e-12) and np.all(values >= 0)
    assert decomp.signal_values.size == 2 and decomp.residual_values.size == 3
