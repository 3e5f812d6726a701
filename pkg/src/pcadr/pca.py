"""Constraint identification and denoising via PCA of whitened data.

The data matrix is whitened with the inverse Cholesky factor of the error
covariance, so that under the measurement model the trailing singular values
of ``Y_s / sqrt(N)`` all converge to one.  The trailing left singular vectors
then estimate the constraint row space and the leading block reconstructs the
reconciled values.

Data are deliberately NOT mean-centered before the SVD: the constraints are
homogeneous (``A x = 0``), and centering would destroy the correspondence
between trailing singular vectors and constraint rows.  This differs from the
usual PCA convention.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from .core import (
    ConstraintModel,
    DataSet,
    IdentificationResult,
    ModelProvenance,
    NoiseModel,
    SpectralDecomposition,
)
from .errors import DimensionMismatch, OrderOutOfRange

#: Default half-width of the unity band used for order detection.
DEFAULT_ORDER_TOLERANCE = 0.1


def detect_order(spectrum, tolerance: float = DEFAULT_ORDER_TOLERANCE) -> int:
    """Estimate the constraint count from a whitened singular-value spectrum.

    Returns the largest ``m`` such that all trailing ``m`` values lie within
    ``[1 - tolerance, 1 + tolerance]`` and their mean lies within
    ``[1 - tolerance/2, 1 + tolerance/2]``; 0 when no trailing value
    qualifies.  Equal values are never split: if the value at the boundary
    ties with the block, the block is extended.
    """
    spectrum = np.asarray(spectrum, dtype=float)
    if spectrum.ndim != 1:
        raise ValueError("spectrum must be a 1-D array of singular values")
    if spectrum.size and np.any(np.diff(spectrum) > 1e-9 * max(spectrum[0], 1.0)):
        raise ValueError("spectrum must be sorted in descending order")
    if np.any(spectrum < 0):
        raise ValueError("singular values must be nonnegative")
    best = 0
    for m in range(1, spectrum.size + 1):
        tail = spectrum[-m:]
        if np.any(np.abs(tail - 1.0) > tolerance):
            break
        if abs(tail.mean() - 1.0) <= tolerance / 2.0:
            best = m
    return best


def pca_denoise(data: DataSet, retained: int) -> np.ndarray:
    """Best rank-``retained`` approximation of the measurements.

    Equivalent to reconciling against the model formed by the discarded left
    singular vectors under identity error covariance.
    """
    n = data.n_variables
    if not 1 <= retained <= n:
        raise OrderOutOfRange(f"retained components {retained} outside [1, {n}]")
    scale = np.sqrt(data.n_samples)
    decomp = SpectralDecomposition.from_matrix(data.measurements / scale, retained)
    return scale * (decomp.left_signal * decomp.signal_values) @ decomp.right_signal.T


def pca_identify(
    data: DataSet,
    noise: NoiseModel,
    order: int | None = None,
) -> IdentificationResult:
    """Identify a constraint model and reconcile the data, noise covariance known.

    The measurements are whitened with the inverse Cholesky factor of
    ``noise``, decomposed by SVD, and split after ``n - order`` components.
    When ``order`` is omitted it is detected from the trailing unity block of
    the whitened spectrum (raising OrderOutOfRange if no block is found).

    The estimated constraint rows are orthonormal in the whitened metric and
    are returned as produced, without sign or rotation normalization.
    """
    n = data.n_variables
    if noise.n_variables != n:
        raise DimensionMismatch(
            f"noise covers {noise.n_variables} variables, data has {n}"
        )
    if data.n_samples < n:
        raise DimensionMismatch(
            f"identification needs at least {n} samples, got {data.n_samples}"
        )
    chol = noise.cholesky_lower()
    scaled = solve_triangular(chol, data.measurements, lower=True)
    root_n = np.sqrt(data.n_samples)

    u, s, vt = np.linalg.svd(scaled / root_n, full_matrices=False)
    if order is None:
        order = detect_order(s)
        if order == 0:
            raise OrderOutOfRange(
                "no trailing unity block in the whitened spectrum; "
                "pass the model order explicitly"
            )
    if not 1 <= order < n:
        raise OrderOutOfRange(f"model order {order} outside [1, {n - 1}]")
    p = n - order

    # Constraint rows: trailing whitened directions pulled back through L.
    u_resid = u[:, p:]
    a_hat = solve_triangular(chol, u_resid, lower=True, trans="T").T
    model = ConstraintModel(a_hat, data.variable_names, ModelProvenance.PCA_ESTIMATED)

    # Reconciled values: truncated reconstruction, un-whitened.
    x_scaled = (u[:, :p] * s[:p]) @ vt[:p]
    reconciled = chol @ (root_n * x_scaled)

    return IdentificationResult(
        model=model,
        noise=noise,
        reconciled=reconciled,
        singular_values=s,
        iterations=1,
        converged=True,
    )
