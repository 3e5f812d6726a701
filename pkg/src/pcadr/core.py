"""Core domain types: constraint models, noise models, data sets, decompositions.

Conventions used throughout the package:

* A constraint model is an ``m x n`` coefficient matrix ``A`` describing the
  homogeneous relations ``A x = 0`` between the ``n`` process variables.
* Data matrices are ``n x N``: one column per sample, one row per variable.
* All types are immutable after construction (arrays are copied and marked
  read-only) and therefore safe to share across threads.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, UndersampledDataWarning, CholeskyFailure

#: Relative singular-value cutoff for numerical rank decisions.
RANK_RTOL = 1e-10


class ModelProvenance(enum.Enum):
    """How a constraint model was obtained."""

    FIRST_PRINCIPLES = "first_principles"
    PCA_ESTIMATED = "pca_estimated"
    IPCA_ESTIMATED = "ipca_estimated"
    COMPOSITE = "composite"


class NoiseStructure(enum.Enum):
    """Shape of the measurement-error covariance."""

    SCALED_IDENTITY = "scaled_identity"
    DIAGONAL = "diagonal"
    FULL = "full"


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _check_names(names, n: int) -> tuple[str, ...]:
    names = tuple(str(v) for v in names)
    if len(names) != n:
        raise DimensionMismatch(
            f"expected {n} variable names, got {len(names)}"
        )
    if len(set(names)) != len(names):
        raise DimensionMismatch("variable names must be unique")
    return names


def numerical_rank(matrix: np.ndarray, rtol: float = RANK_RTOL) -> int:
    """Rank of ``matrix`` counting singular values above ``rtol`` times the largest."""
    if matrix.size == 0:
        return 0
    s = np.linalg.svd(matrix, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def left_null_basis(matrix: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Orthonormal rows spanning the left null space of ``matrix``.

    For an ``m x k`` input of rank ``t`` the result is ``(m - t) x m``.
    An empty input (zero columns) yields the full identity basis.
    """
    m = matrix.shape[0]
    if matrix.shape[1] == 0 or matrix.size == 0:
        return np.eye(m)
    u, s, _ = np.linalg.svd(matrix)
    t = int(np.sum(s > rtol * s[0])) if s[0] > 0 else 0
    return u[:, t:].T


def orthonormal_row_basis(matrix: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Orthonormal basis of the row space of ``matrix``, one basis vector per row."""
    if matrix.size == 0:
        return np.zeros((0, matrix.shape[1]))
    _, s, vt = np.linalg.svd(matrix)
    t = int(np.sum(s > rtol * s[0])) if s[0] > 0 else 0
    return vt[:t]


# ----------------------------------------------------------------------------
# Constraint model
# ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConstraintModel:
    """Linear constraint matrix with variable labels.

    Attributes:
        matrix: (m, n) coefficient matrix of the relations ``matrix @ x = 0``.
        variable_names: n unique labels, one per column.
        provenance: how the model was obtained.

    Construction performs structural checks only (shapes, labels, finiteness
    of the label count).  Rank and row-count invariants are reported by
    :func:`validate_model` so that violating candidates can still be built
    and inspected.
    """

    matrix: np.ndarray
    variable_names: tuple[str, ...]
    provenance: ModelProvenance = ModelProvenance.FIRST_PRINCIPLES

    def __post_init__(self):
        matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        object.__setattr__(self, "matrix", _frozen_array(matrix))
        object.__setattr__(
            self, "variable_names", _check_names(self.variable_names, matrix.shape[1])
        )

    @property
    def n_constraints(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_variables(self) -> int:
        return self.matrix.shape[1]

    def column_indices(self, names) -> np.ndarray:
        """Column positions of the given variable names, in the given order."""
        lookup = {name: i for i, name in enumerate(self.variable_names)}
        try:
            return np.array([lookup[str(n)] for n in names], dtype=int)
        except KeyError as exc:
            raise DimensionMismatch(f"unknown variable name {exc.args[0]!r}") from exc

    def require_valid(self) -> "ConstraintModel":
        """Raise :class:`~pcadr.errors.InvalidModel` unless all invariants hold."""
        from .errors import InvalidModel

        violations = validate_model(self)
        if violations:
            raise InvalidModel(violations)
        return self


# Violation records returned by validate_model.  Each one names the invariant
# it breaks and the offending quantities.


@dataclass(frozen=True)
class RankDeficient:
    rank: int
    n_constraints: int

    def __str__(self):
        return (
            f"RankDeficient: constraint rows are linearly dependent "
            f"(rank {self.rank} < {self.n_constraints} rows)"
        )


@dataclass(frozen=True)
class ConstraintCountNotLessThanVariables:
    n_constraints: int
    n_variables: int

    def __str__(self):
        return (
            f"ConstraintCountNotLessThanVariables: {self.n_constraints} constraints "
            f"on {self.n_variables} variables leaves no degrees of freedom"
        )


@dataclass(frozen=True)
class NonFiniteEntry:
    row: int
    column: int

    def __str__(self):
        return f"NonFiniteEntry: matrix[{self.row}, {self.column}] is not finite"


def validate_model(model: ConstraintModel, rank_rtol: float = RANK_RTOL) -> list:
    """Check all constraint-model invariants and return the violations found.

    Returns an empty list iff the model is valid.  Reported violations:

    * ``NonFiniteEntry`` for each NaN/inf coefficient (first per row).
    * ``ConstraintCountNotLessThanVariables`` when ``m >= n``.
    * ``RankDeficient`` when the rows are linearly dependent at the
      ``rank_rtol`` relative singular-value tolerance.
    """
    violations = []
    bad = ~np.isfinite(model.matrix)
    if bad.any():
        for row in np.unique(np.nonzero(bad)[0]):
            col = int(np.nonzero(bad[row])[0][0])
            violations.append(NonFiniteEntry(int(row), col))
        return violations
    m, n = model.matrix.shape
    if m >= n:
        violations.append(ConstraintCountNotLessThanVariables(m, n))
    if m > 0:
        rank = numerical_rank(model.matrix, rank_rtol)
        if rank < m:
            violations.append(RankDeficient(rank, m))
    return violations


# ----------------------------------------------------------------------------
# Noise model
# ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Symmetric positive-definite measurement-error covariance.

    The Cholesky factor (lower triangular, positive diagonal) is computed at
    construction, so every NoiseModel instance is guaranteed usable for
    whitening.  Construction raises :class:`~pcadr.errors.CholeskyFailure`
    when the matrix is not positive definite.
    """

    sigma: np.ndarray
    structure: NoiseStructure = NoiseStructure.FULL
    _chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sigma.shape[0] != sigma.shape[1]:
            raise DimensionMismatch(f"covariance must be square, got {sigma.shape}")
        if not np.all(np.isfinite(sigma)):
            raise ValueError("covariance contains non-finite entries")
        scale = np.abs(sigma).max()
        if scale > 0 and np.abs(sigma - sigma.T).max() > 1e-10 * scale:
            raise ValueError("covariance is not symmetric within 1e-10 relative")
        sigma = 0.5 * (sigma + sigma.T)
        try:
            chol = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError as exc:
            raise CholeskyFailure("covariance is not positive definite") from exc
        object.__setattr__(self, "sigma", _frozen_array(sigma))
        object.__setattr__(self, "_chol", _frozen_array(chol))

    @classmethod
    def identity(cls, n: int) -> "NoiseModel":
        return cls(np.eye(n), NoiseStructure.SCALED_IDENTITY)

    @classmethod
    def scaled_identity(cls, variance: float, n: int) -> "NoiseModel":
        return cls(variance * np.eye(n), NoiseStructure.SCALED_IDENTITY)

    @classmethod
    def from_sd(cls, sds) -> "NoiseModel":
        """Diagonal covariance from per-variable standard deviations."""
        sds = np.asarray(sds, dtype=float)
        return cls(np.diag(sds**2), NoiseStructure.DIAGONAL)

    @property
    def n_variables(self) -> int:
        return self.sigma.shape[0]

    @property
    def sd(self) -> np.ndarray:
        """Per-variable standard deviations (square roots of the diagonal)."""
        return np.sqrt(np.diag(self.sigma))

    def cholesky_lower(self) -> np.ndarray:
        """Lower-triangular factor L with positive diagonal, ``sigma = L @ L.T``."""
        return self._chol

    def select(self, indices) -> "NoiseModel":
        """Covariance restricted to the given variable positions, order preserved."""
        indices = np.asarray(indices, dtype=int)
        return NoiseModel(self.sigma[np.ix_(indices, indices)], self.structure)


# ----------------------------------------------------------------------------
# Data set
# ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DataSet:
    """Measurement matrix with variable labels and optional simulator truth.

    Attributes:
        measurements: (n, N) matrix, one column per sample.
        variable_names: n unique labels.
        true_values: optional (n, N) noise-free values (populated by the
            simulator, used only for scoring).

    Having fewer samples than variables is legal for plain reconciliation but
    degenerate for identification, so it raises
    :class:`~pcadr.errors.UndersampledDataWarning` instead of an error.
    """

    measurements: np.ndarray
    variable_names: tuple[str, ...]
    true_values: np.ndarray | None = None

    def __post_init__(self):
        y = np.atleast_2d(np.asarray(self.measurements, dtype=float))
        if not np.all(np.isfinite(y)):
            raise ValueError("measurements contain non-finite entries")
        object.__setattr__(self, "measurements", _frozen_array(y))
        object.__setattr__(
            self, "variable_names", _check_names(self.variable_names, y.shape[0])
        )
        if self.true_values is not None:
            x = np.atleast_2d(np.asarray(self.true_values, dtype=float))
            if x.shape != y.shape:
                raise DimensionMismatch(
                    f"true values shape {x.shape} != measurements shape {y.shape}"
                )
            if not np.all(np.isfinite(x)):
                raise ValueError("true values contain non-finite entries")
            object.__setattr__(self, "true_values", _frozen_array(x))
        if y.shape[1] < y.shape[0]:
            warnings.warn(
                f"{y.shape[1]} samples for {y.shape[0]} variables: "
                "identification needs at least as many distinct steady states "
                "as variables",
                UndersampledDataWarning,
                stacklevel=2,
            )

    @property
    def n_variables(self) -> int:
        return self.measurements.shape[0]

    @property
    def n_samples(self) -> int:
        return self.measurements.shape[1]

    def select(self, names) -> "DataSet":
        """Subset (and reorder) variables by name."""
        lookup = {name: i for i, name in enumerate(self.variable_names)}
        try:
            idx = [lookup[str(n)] for n in names]
        except KeyError as exc:
            raise DimensionMismatch(f"unknown variable name {exc.args[0]!r}") from exc
        truth = None if self.true_values is None else self.true_values[idx]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UndersampledDataWarning)
            return DataSet(self.measurements[idx], tuple(names), truth)


# ----------------------------------------------------------------------------
# Spectral decomposition
# ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """SVD of a matrix split into retained (signal) and discarded blocks.

    ``left_signal @ diag(signal_values) @ right_signal.T`` is the rank-p
    approximation; adding the residual block reproduces the input exactly.
    """

    left_signal: np.ndarray
    left_residual: np.ndarray
    signal_values: np.ndarray
    residual_values: np.ndarray
    right_signal: np.ndarray
    right_residual: np.ndarray
    retained: int

    def __post_init__(self):
        for name in (
            "left_signal",
            "left_residual",
            "signal_values",
            "residual_values",
            "right_signal",
            "right_residual",
        ):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, retained: int) -> "SpectralDecomposition":
        """Economy SVD of ``matrix`` partitioned after the ``retained`` largest values."""
        matrix = np.asarray(matrix, dtype=float)
        n = matrix.shape[0]
        if not 0 <= retained <= n:
            raise ValueError(f"retained component count {retained} outside [0, {n}]")
        u, s, vt = np.linalg.svd(matrix, full_matrices=False)
        p = retained
        return cls(
            left_signal=u[:, :p],
            left_residual=u[:, p:],
            signal_values=s[:p],
            residual_values=s[p:],
            right_signal=vt[:p].T,
            right_residual=vt[p:].T,
            retained=p,
        )

    @property
    def values(self) -> np.ndarray:
        """Full spectrum, descending."""
        return np.concatenate([self.signal_values, self.residual_values])

    def reconstruct(self) -> np.ndarray:
        return (
            self.left_signal * self.signal_values
        ) @ self.right_signal.T + (
            self.left_residual * self.residual_values
        ) @ self.right_residual.T


# ----------------------------------------------------------------------------
# Identification result
# ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class IdentificationResult:
    """Outcome of a model-identification run.

    Attributes:
        model: estimated constraint matrix.
        noise: error covariance used or estimated.
        reconciled: (n, N) estimates satisfying the identified constraints.
        singular_values: full spectrum of the (scaled, possibly projected)
            data matrix over sqrt(N), descending.
        iterations: outer iterations performed (1 for plain PCA).
        converged: whether the stopping criterion was met.
    """

    model: ConstraintModel
    noise: NoiseModel
    reconciled: np.ndarray
    singular_values: np.ndarray
    iterations: int
    converged: bool

    def __post_init__(self):
        object.__setattr__(self, "reconciled", _frozen_array(self.reconciled))
        object.__setattr__(
            self, "singular_values", _frozen_array(self.singular_values)
        )

    def max_constraint_residual(self) -> float:
        """Largest |A_hat @ X_hat| entry, absolute."""
        return float(np.abs(self.model.matrix @ self.reconciled).max())


def residuals(model: ConstraintModel, data) -> np.ndarray:
    """Constraint residuals ``A @ y`` for every sample.

    ``data`` may be a :class:`DataSet` (variable labels must match the model)
    or a bare (n, N) array.  Returns an (m, N) matrix whose column k is the
    residual vector of sample k.
    """
    if isinstance(data, DataSet):
        if data.variable_names != model.variable_names:
            raise DimensionMismatch(
                "data variables do not match model variables; "
                "use DataSet.select() to align them"
            )
        y = data.measurements
    else:
        y = np.atleast_2d(np.asarray(data, dtype=float))
    if y.shape[0] != model.n_variables:
        raise DimensionMismatch(
            f"model has {model.n_variables} columns, data has {y.shape[0]} rows"
        )
    return model.matrix @ y
