"""Model-quality metrics and RMSE scoring against simulator truth.

Estimated constraint matrices are identifiable only up to row-space rotation,
so all comparisons here are rotation invariant: distances to the true row
space, principal angles between row spaces, and regression matrices (where
the rotation cancels algebraically).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import subspace_angles

from .core import ConstraintModel, orthonormal_row_basis, _frozen_array
from .errors import DimensionMismatch, SingularDependentBlock


def _check_comparable(estimated: ConstraintModel, truth: ConstraintModel):
    if estimated.n_variables != truth.n_variables:
        raise DimensionMismatch(
            f"models cover {estimated.n_variables} and {truth.n_variables} variables"
        )
    if estimated.variable_names != truth.variable_names:
        raise DimensionMismatch("models are labelled over different variables")


def alpha_metric(estimated: ConstraintModel, truth: ConstraintModel) -> float:
    """Sum of orthogonal distances of estimated rows from the true row space.

    Estimated rows are normalized to unit Euclidean length first, so the
    metric is comparable across models whose rows carry different scales
    (whitened-PCA rows are unit norm already, composed models may not be).
    Zero means every estimated row lies exactly in the true row space.
    """
    _check_comparable(estimated, truth)
    basis = orthonormal_row_basis(truth.matrix)
    rows = np.array(estimated.matrix)
    norms = np.linalg.norm(rows, axis=1)
    nonzero = norms > 0
    rows[nonzero] /= norms[nonzero, None]
    off = rows - (rows @ basis.T) @ basis
    return float(np.linalg.norm(off, axis=1).sum())


def subspace_angle(estimated: ConstraintModel, truth: ConstraintModel) -> float:
    """Largest principal angle between the two row spaces, in degrees."""
    _check_comparable(estimated, truth)
    angles = subspace_angles(estimated.matrix.T, truth.matrix.T)
    return float(np.degrees(angles[0])) if angles.size else 0.0


@dataclass(frozen=True, eq=False)
class RegressionComparison:
    """Dependent-on-independent regression matrices from two constraint models.

    Rows follow ``dependent_names`` order; columns follow the independent
    variables in model order.
    """

    dependent_names: tuple[str, ...]
    independent_names: tuple[str, ...]
    true_matrix: np.ndarray
    estimated_matrix: np.ndarray
    max_abs_difference: float

    def __post_init__(self):
        object.__setattr__(self, "true_matrix", _frozen_array(self.true_matrix))
        object.__setattr__(
            self, "estimated_matrix", _frozen_array(self.estimated_matrix)
        )


def _regression_matrix(model: ConstraintModel, dep_idx, ind_idx) -> np.ndarray:
    a_dep = model.matrix[:, dep_idx]
    a_ind = model.matrix[:, ind_idx]
    if a_dep.shape[0] != a_dep.shape[1]:
        raise DimensionMismatch(
            f"{a_dep.shape[1]} dependent variables for {a_dep.shape[0]} constraints"
        )
    # Rank check before solving: a silently ill-conditioned block would
    # produce a garbage comparison.
    if a_dep.size:
        svals = np.linalg.svd(a_dep, compute_uv=False)
        if svals[-1] <= 1e-10 * svals[0]:
            raise SingularDependentBlock(
                "dependent-variable block is singular; choose a different set"
            )
    return -np.linalg.solve(a_dep, a_ind)


def regression_compare(
    estimated: ConstraintModel,
    truth: ConstraintModel,
    dependent_names,
) -> RegressionComparison:
    """Element-wise comparison of the regression matrices of two models.

    Each model is rewritten as ``x_dep = R x_ind``; the rotation ambiguity of
    an estimated model cancels in ``R``, so the matrices may be compared
    entry by entry.
    """
    _check_comparable(estimated, truth)
    dependent_names = tuple(str(v) for v in dependent_names)
    if len(dependent_names) != truth.n_constraints:
        raise DimensionMismatch(
            f"{len(dependent_names)} dependent variables for "
            f"{truth.n_constraints} true constraints"
        )
    if estimated.n_constraints != truth.n_constraints:
        raise DimensionMismatch(
            f"estimated model has {estimated.n_constraints} rows, "
            f"truth has {truth.n_constraints}"
        )
    dep_idx = truth.column_indices(dependent_names)
    ind_idx = np.array(
        [i for i in range(truth.n_variables) if i not in set(dep_idx.tolist())],
        dtype=int,
    )
    independent_names = tuple(truth.variable_names[i] for i in ind_idx)

    r_true = _regression_matrix(truth, dep_idx, ind_idx)
    r_est = _regression_matrix(estimated, dep_idx, ind_idx)
    deviation = float(np.abs(r_true - r_est).max()) if r_true.size else 0.0
    return RegressionComparison(
        dependent_names=dependent_names,
        independent_names=independent_names,
        true_matrix=r_true,
        estimated_matrix=r_est,
        max_abs_difference=deviation,
    )


def rmse_report(estimates: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Per-variable root mean square error between two (n, N) matrices."""
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    if estimates.shape != truth.shape:
        raise DimensionMismatch(
            f"estimate shape {estimates.shape} != truth shape {truth.shape}"
        )
    return np.sqrt(np.mean((estimates - truth) ** 2, axis=1))
