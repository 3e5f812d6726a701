"""Classical data reconciliation against a known constraint model.

Covers fully measured systems, partially measured systems via projection of
the unmeasured-variable columns, and redundancy/observability classification
(algebraic, with an optional graph-based cross-check for flow networks).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .core import (
    ConstraintModel,
    DataSet,
    NoiseModel,
    _frozen_array,
    left_null_basis,
    numerical_rank,
)
from .errors import DimensionMismatch, SingularInnerMatrix

#: Column norms below this fraction of the matrix norm mark a non-redundant variable.
NONREDUNDANT_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class ReconciliationGain:
    """Linear map taking measurements to reconciled estimates.

    ``gain @ y`` is the covariance-weighted projection of ``y`` onto the
    constraint null space: it is idempotent and satisfies
    ``model.matrix @ gain = 0``.
    """

    gain: np.ndarray
    model: ConstraintModel
    noise: NoiseModel

    def __post_init__(self):
        object.__setattr__(self, "gain", _frozen_array(self.gain))

    def estimate_covariance(self) -> np.ndarray:
        """Covariance of the reconciled estimates, ``W @ sigma @ W.T``."""
        return self.gain @ self.noise.sigma @ self.gain.T


def _inner_solver(model: ConstraintModel, noise: NoiseModel):
    """Cholesky solver for the inner matrix ``A @ sigma @ A.T``.

    Raises SingularInnerMatrix when the factorization fails or is numerically
    rank deficient, which signals linearly dependent constraint rows.
    """
    a = model.matrix
    inner = a @ noise.sigma @ a.T
    try:
        factor = cho_factor(inner, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularInnerMatrix(
            "constraint inner matrix is singular; check for dependent rows"
        ) from exc
    diag = np.abs(np.diag(factor[0]))
    if diag.size and (diag.min() / diag.max()) ** 2 < 1e-13:
        raise SingularInnerMatrix(
            "constraint inner matrix is numerically singular; "
            "check for dependent rows"
        )
    return factor


def reconciliation_gain(model: ConstraintModel, noise: NoiseModel) -> ReconciliationGain:
    """Build the reconciliation gain ``I - sigma A^T (A sigma A^T)^-1 A``."""
    if model.n_variables != noise.n_variables:
        raise DimensionMismatch(
            f"model has {model.n_variables} variables, noise has {noise.n_variables}"
        )
    n = model.n_variables
    if model.n_constraints == 0:
        return ReconciliationGain(np.eye(n), model, noise)
    a = model.matrix
    factor = _inner_solver(model, noise)
    w = np.eye(n) - noise.sigma @ a.T @ cho_solve(factor, a)
    return ReconciliationGain(w, model, noise)


def reconcile_full(model: ConstraintModel, noise: NoiseModel, data: DataSet) -> np.ndarray:
    """Reconcile every sample of a fully measured data set.

    Each column of the result minimizes the error-covariance-weighted squared
    adjustment subject to ``model.matrix @ x = 0``.  Returns an (n, N) matrix.
    """
    if data.variable_names != model.variable_names:
        raise DimensionMismatch(
            "data variables do not match model variables; "
            "use DataSet.select() to align them"
        )
    w = reconciliation_gain(model, noise)
    return w.gain @ data.measurements


# ----------------------------------------------------------------------------
# Partially measured systems
# ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ClassificationReport:
    """Variable classification for a partially measured system.

    Attributes:
        measured_redundant: for each measured variable, True when its
            measurement can be cross-checked (and improved) by the reduced
            constraints.
        unmeasured_observable: for each unmeasured variable, True when it is
            uniquely determined by the constraints and the measured variables.
        reduced_model: constraints over the measured variables only
            (``m - projection_rank`` rows).
        projection_rank: rank of the unmeasured-variable column block.
    """

    measured_redundant: dict[str, bool]
    unmeasured_observable: dict[str, bool]
    reduced_model: ConstraintModel
    projection_rank: int


def measured_mask(variable_names, measured_names) -> np.ndarray:
    """Boolean mask over ``variable_names`` marking the measured subset."""
    measured = {str(n) for n in measured_names}
    unknown = measured - set(variable_names)
    if unknown:
        raise DimensionMismatch(f"unknown measured variable names: {sorted(unknown)}")
    return np.array([name in measured for name in variable_names], dtype=bool)


def project_unmeasured(model: ConstraintModel, mask) -> ClassificationReport:
    """Eliminate unmeasured variables and classify every variable.

    The reduced model is ``P @ A_k`` where the rows of ``P`` form an
    orthonormal basis of the left null space of the unmeasured column block
    ``A_u``.  A measured variable is redundant when its reduced column is not
    negligibly small; an unmeasured variable is observable when removing its
    column from ``A_u`` lowers the rank.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (model.n_variables,):
        raise DimensionMismatch(
            f"mask length {mask.size} != {model.n_variables} variables"
        )
    if not mask.any():
        raise DimensionMismatch("at least one variable must be measured")
    measured_names = [n for n, keep in zip(model.variable_names, mask) if keep]
    unmeasured_names = [n for n, keep in zip(model.variable_names, mask) if not keep]
    a_k = model.matrix[:, mask]
    a_u = model.matrix[:, ~mask]

    t = numerical_rank(a_u)
    projector = left_null_basis(a_u)  # (m - t, m), orthonormal rows
    reduced = projector @ a_k
    reduced_model = ConstraintModel(
        reduced.reshape(-1, len(measured_names)), tuple(measured_names), model.provenance
    )

    scale = np.abs(reduced).max() if reduced.size else 0.0
    redundant = {}
    for j, name in enumerate(measured_names):
        col_norm = np.abs(reduced[:, j]).max() if reduced.size else 0.0
        redundant[name] = bool(col_norm > NONREDUNDANT_RTOL * scale) if scale else False

    observable = {}
    for j, name in enumerate(unmeasured_names):
        without = np.delete(a_u, j, axis=1)
        observable[name] = bool(numerical_rank(without) == t - 1)

    return ClassificationReport(
        measured_redundant=redundant,
        unmeasured_observable=observable,
        reduced_model=reduced_model,
        projection_rank=t,
    )


@dataclass(frozen=True, eq=False)
class PartialReconciliation:
    """Reconciled measured variables plus estimates of observable unmeasured ones.

    Unobservable unmeasured variables are absent from ``unmeasured_estimates``
    rather than reported as zero.
    """

    reconciled_measured: np.ndarray
    unmeasured_estimates: dict[str, np.ndarray]
    report: ClassificationReport

    def __post_init__(self):
        object.__setattr__(
            self, "reconciled_measured", _frozen_array(self.reconciled_measured)
        )


def reconcile_partial(
    model: ConstraintModel,
    noise_measured: NoiseModel,
    data_measured: DataSet,
    mask,
) -> PartialReconciliation:
    """Reconcile a partially measured system.

    ``data_measured`` and ``noise_measured`` cover only the measured subset,
    in the model's variable order.  Measured variables are reconciled against
    the reduced constraints; observable unmeasured variables are then solved
    from the original constraints using the reconciled values.
    """
    mask = np.asarray(mask, dtype=bool)
    report = project_unmeasured(model, mask)
    measured_names = report.reduced_model.variable_names
    if data_measured.variable_names != measured_names:
        raise DimensionMismatch(
            f"measured data variables {data_measured.variable_names} do not match "
            f"the masked model variables {measured_names}"
        )
    if noise_measured.n_variables != len(measured_names):
        raise DimensionMismatch(
            f"noise covers {noise_measured.n_variables} variables, "
            f"{len(measured_names)} are measured"
        )

    if report.reduced_model.n_constraints > 0:
        xk_hat = reconcile_full(report.reduced_model, noise_measured, data_measured)
    else:
        xk_hat = np.array(data_measured.measurements)

    estimates: dict[str, np.ndarray] = {}
    a_u = model.matrix[:, ~mask]
    if a_u.shape[1]:
        a_k = model.matrix[:, mask]
        # Consistent by construction: the reconciled values satisfy the
        # reduced constraints, so -A_k xk_hat lies in range(A_u).
        x_u, *_ = np.linalg.lstsq(a_u, -a_k @ xk_hat, rcond=None)
        unmeasured = [n for n, keep in zip(model.variable_names, mask) if not keep]
        for j, name in enumerate(unmeasured):
            if report.unmeasured_observable[name]:
                estimates[name] = x_u[j]

    return PartialReconciliation(xk_hat, estimates, report)


# ----------------------------------------------------------------------------
# Graph-based cross-check for flow networks
# ----------------------------------------------------------------------------


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int):
        self.parent[self.find(i)] = self.find(j)


def _flow_edges(model: ConstraintModel) -> list[tuple[int, int]]:
    """Interpret constraint columns as directed stream edges between nodes.

    Each column must contain exactly one +1 and one -1, or a single +1/-1
    whose other end is attached to an environment node.  Returns one
    (from_node, to_node) pair per stream; the environment node has index m.
    """
    a = model.matrix
    m = model.n_constraints
    env = m
    edges = []
    for j in range(model.n_variables):
        col = a[:, j]
        nz = np.nonzero(col)[0]
        pos = [i for i in nz if col[i] == 1.0]
        neg = [i for i in nz if col[i] == -1.0]
        if len(pos) + len(neg) != len(nz) or len(pos) > 1 or len(neg) > 1 or not nz.size:
            raise ValueError(
                f"column {model.variable_names[j]!r} is not a unit flow incidence "
                "(needs one +1 and/or one -1)"
            )
        to_node = int(pos[0]) if pos else env
        from_node = int(neg[0]) if neg else env
        edges.append((from_node, to_node))
    return edges


def classify_flow_network(model: ConstraintModel, mask) -> tuple[dict, dict]:
    """Graph-merging classification for unit-incidence flow networks.

    Cross-check for :func:`project_unmeasured`: nodes joined by unmeasured
    streams are merged; a measured stream is redundant iff its endpoints stay
    in different merged nodes, and an unmeasured stream is observable iff it
    lies on no cycle of unmeasured streams.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (model.n_variables,):
        raise DimensionMismatch(
            f"mask length {mask.size} != {model.n_variables} variables"
        )
    edges = _flow_edges(model)
    n_nodes = model.n_constraints + 1

    merged = _UnionFind(n_nodes)
    for j, (u, v) in enumerate(edges):
        if not mask[j]:
            merged.union(u, v)
    redundant = {
        model.variable_names[j]: merged.find(edges[j][0]) != merged.find(edges[j][1])
        for j in range(model.n_variables)
        if mask[j]
    }

    unmeasured = [j for j in range(model.n_variables) if not mask[j]]
    observable = {}
    for j in unmeasured:
        uf = _UnionFind(n_nodes)
        for k in unmeasured:
            if k != j:
                uf.union(*edges[k])
        observable[model.variable_names[j]] = uf.find(edges[j][0]) != uf.find(edges[j][1])

    return redundant, observable
