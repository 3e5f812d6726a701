"""Identification when part of the constraint matrix is known a priori.

The data are projected onto the orthogonal complement of the known constraint
rows (in the whitened space), so that neither the known constraints nor any
combination of them can be re-identified.  The SVD of the projected data then
splits into a signal block, a near-unity block holding the remaining unknown
constraints, and exactly ``m_g`` zero singular values produced by the
projection.  The composed model stacks the estimated rows over the given ones.

With an unknown covariance the projection is rebuilt inside every outer
iteration against the currently-whitened known rows, and the covariance MLE
runs on the composed model.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .core import (
    ConstraintModel,
    DataSet,
    IdentificationResult,
    ModelProvenance,
    NoiseModel,
)
from .errors import (
    DimensionMismatch,
    KnownRankDeficient,
    OrderConflict,
    OrderOutOfRange,
)
from .ipca import (
    SIGMA_STATIONARY_RTOL,
    IpcaConfig,
    check_identifiable,
    estimate_covariance_mle,
)
from .pca import detect_order, pca_identify
from .reconcile import reconcile_full


def _check_known(known: ConstraintModel, data: DataSet):
    if known.variable_names != data.variable_names:
        raise DimensionMismatch(
            "known-constraint variables do not match the data variables"
        )
    if known.n_constraints >= known.n_variables:
        raise KnownRankDeficient(
            f"{known.n_constraints} known constraints on "
            f"{known.n_variables} variables leaves nothing to identify"
        )
    if known.n_constraints:
        svals = np.linalg.svd(known.matrix, compute_uv=False)
        if svals[-1] <= 1e-10 * svals[0]:
            raise KnownRankDeficient("known constraint rows are linearly dependent")


def _projected_svd(data: DataSet, noise: NoiseModel, known: ConstraintModel):
    """Whiten, project out the known rows, and decompose.

    Returns the whitening factor, the left singular vectors and the singular
    values of ``proj @ L^-1 Y / sqrt(N)``.
    """
    chol = noise.cholesky_lower()
    scaled = solve_triangular(chol, data.measurements, lower=True)
    if known.n_constraints:
        g = known.matrix @ chol  # known rows in the whitened coordinates
        gram = cho_factor(g @ g.T, lower=True)
        scaled = scaled - g.T @ cho_solve(gram, g @ scaled)
    u, s, _ = np.linalg.svd(scaled / np.sqrt(data.n_samples), full_matrices=False)
    return chol, u, s


def _compose(
    chol, u, known: ConstraintModel, order_total: int, names
) -> ConstraintModel:
    n = len(names)
    m_g = known.n_constraints
    p = n - order_total
    u_est = u[:, p : n - m_g]
    a_est = solve_triangular(chol, u_est, lower=True, trans="T").T
    matrix = np.vstack([a_est, known.matrix]) if m_g else a_est
    return ConstraintModel(matrix, names, ModelProvenance.COMPOSITE)


def _resolve_order(s, m_g: int, order_total, n: int) -> int:
    if order_total is not None:
        if order_total < m_g:
            raise OrderConflict(
                f"total order {order_total} is smaller than the "
                f"{m_g} known constraints"
            )
        if not m_g <= order_total < n:
            raise OrderOutOfRange(f"total order {order_total} outside [{m_g}, {n - 1}]")
        return int(order_total)
    extra = detect_order(s[: n - m_g]) if n - m_g else 0
    if extra == 0 and m_g == 0:
        raise OrderOutOfRange(
            "no trailing unity block in the projected spectrum; "
            "pass the total order explicitly"
        )
    return m_g + extra


def identify_with_known(
    data: DataSet,
    known: ConstraintModel,
    noise: NoiseModel | None = None,
    order_total: int | None = None,
    config: IpcaConfig | None = None,
) -> IdentificationResult:
    """Identify the constraints not already given, and reconcile.

    With ``noise`` supplied this is a single projected-PCA pass; the order,
    when omitted, is detected from the unity block of the projected spectrum
    (the ``m_g`` projection zeros are excluded from detection).  Without
    ``noise`` the covariance is estimated by the iterative loop, which needs
    an explicit total order (``order_total`` or ``config.assumed_order``).

    The returned spectrum is that of the projected whitened data: its last
    ``m_g`` values are zero up to roundoff.  Estimated rows are orthogonal to
    the known rows in the covariance-weighted sense ``A_est @ sigma @ A_g^T =
    0`` (plain orthogonality when the covariance is the identity).
    Reconciled values are computed against the composed model.
    """
    _check_known(known, data)
    n = data.n_variables
    m_g = known.n_constraints

    if noise is not None:
        if known.n_constraints == 0 and order_total is None:
            return pca_identify(data, noise)
        chol, u, s = _projected_svd(data, noise, known)
        order = _resolve_order(s, m_g, order_total, n)
        model = _compose(chol, u, known, order, data.variable_names)
        reconciled = (
            reconcile_full(model, noise, data)
            if model.n_constraints
            else np.array(data.measurements)
        )
        return IdentificationResult(
            model=model,
            noise=noise,
            reconciled=reconciled,
            singular_values=s,
            iterations=1,
            converged=True,
        )

    return _identify_with_known_ipca(data, known, order_total, config)


def _identify_with_known_ipca(
    data: DataSet,
    known: ConstraintModel,
    order_total: int | None,
    config: IpcaConfig | None,
) -> IdentificationResult:
    n = data.n_variables
    m_g = known.n_constraints
    if config is None:
        if order_total is None:
            raise OrderConflict(
                "the iterative variant needs a total order: pass order_total "
                "or a config with assumed_order"
            )
        config = IpcaConfig(assumed_order=order_total)
    elif order_total is not None and order_total != config.assumed_order:
        raise OrderConflict(
            f"order_total {order_total} disagrees with config.assumed_order "
            f"{config.assumed_order}"
        )
    order = config.assumed_order
    if order < m_g:
        raise OrderConflict(
            f"total order {order} is smaller than the {m_g} known constraints"
        )
    if not max(m_g, 1) <= order < n:
        raise OrderOutOfRange(f"total order {order} outside [{max(m_g, 1)}, {n - 1}]")
    if data.n_samples < n:
        raise DimensionMismatch(f"IPCA needs at least {n} samples, got {data.n_samples}")
    check_identifiable(config.covariance_structure, n, order)

    if m_g == 0:
        from .ipca import ipca

        result, _ = ipca(data, config)
        return result

    noise = NoiseModel.identity(n)
    sigma_change = np.inf
    converged = False
    iterations = config.max_iterations
    model = None
    spectrum = None

    for iteration in range(1, config.max_iterations + 1):
        chol, u, s = _projected_svd(data, noise, known)
        model = _compose(chol, u, known, order, data.variable_names)
        spectrum = s
        block = s[n - order : n - m_g]  # estimated-constraint band, zeros excluded
        spectrum_ok = block.size == 0 or abs(block.mean() - 1.0) <= config.spectrum_tolerance
        if spectrum_ok and sigma_change < SIGMA_STATIONARY_RTOL:
            converged = True
            iterations = iteration
            break
        new_noise = estimate_covariance_mle(
            model,
            data,
            config.covariance_structure,
            init=noise,
            tol=config.inner_optimizer_tolerance,
            seed=config.seed,
        )
        sigma_change = float(
            np.linalg.norm(new_noise.sigma - noise.sigma)
            / max(np.linalg.norm(noise.sigma), 1e-300)
        )
        noise = new_noise

    if not converged:
        # Iteration cap: rebuild against the final covariance so the model,
        # spectrum and estimates are mutually consistent.
        chol, u, spectrum = _projected_svd(data, noise, known)
        model = _compose(chol, u, known, order, data.variable_names)

    reconciled = reconcile_full(model, noise, data)
    return IdentificationResult(
        model=model,
        noise=noise,
        reconciled=reconciled,
        singular_values=spectrum,
        iterations=iterations,
        converged=converged,
    )
