"""Iterative PCA: joint estimation of constraints, error covariance, and estimates.

The loop alternates two steps until the trailing whitened singular values
reach unity:

1. whitened PCA with the current covariance estimate, giving constraint rows;
2. maximum-likelihood covariance estimation from the constraint residuals,
   with the constraint rows held fixed.

The covariance MLE minimizes the negative log-likelihood of the residuals
``r(k) = A y(k)``, namely ``N log det(A sigma A^T) + sum_k r(k)^T
(A sigma A^T)^-1 r(k)``, over a declared covariance structure.  Because the
residuals only expose the m x m residual covariance, at most m(m+1)/2 free
covariance parameters are identifiable.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize, minimize_scalar

from .core import (
    ConstraintModel,
    DataSet,
    IdentificationResult,
    ModelProvenance,
    NoiseModel,
    NoiseStructure,
    _frozen_array,
    orthonormal_row_basis,
)
from .errors import (
    DimensionMismatch,
    NotIdentifiable,
    OptimizerDiverged,
    OrderOutOfRange,
)
from .pca import DEFAULT_ORDER_TOLERANCE, pca_identify

#: Relative change in the covariance estimate below which the outer loop is stationary.
SIGMA_STATIONARY_RTOL = 1e-4


@dataclass(frozen=True)
class IpcaConfig:
    """Settings for one iterative-PCA run.

    Attributes:
        assumed_order: number of constraints m_e to fit.
        covariance_structure: shape of the covariance estimate.  Diagonal
            needs ``n <= m_e (m_e + 1) / 2`` to be identifiable.
        max_iterations: outer iteration cap.
        spectrum_tolerance: allowed deviation of the trailing-spectrum mean
            from one at convergence.
        inner_optimizer_tolerance: relative objective-change stopping rule of
            the covariance optimizer.
        seed: seed for the randomized restarts of the fallback optimizer;
            does not affect runs where the primary optimizer succeeds.
    """

    assumed_order: int
    covariance_structure: NoiseStructure = NoiseStructure.DIAGONAL
    max_iterations: int = 100
    spectrum_tolerance: float = 0.05
    inner_optimizer_tolerance: float = 1e-8
    seed: int = 0


@dataclass(frozen=True, eq=False)
class IterationRecord:
    """Snapshot of one outer iteration.

    ``objective`` is the residual negative log-likelihood evaluated with the
    constraint rows orthonormalized.  The raw likelihood value shifts by
    ``2 N log|det Q|`` under a row transformation ``Q``, so only the
    normalized value is comparable across iterations.
    """

    iteration: int
    objective: float
    trailing_mean: float
    sigma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sigma", _frozen_array(self.sigma))


@dataclass(frozen=True, eq=False)
class ConvergenceTrace:
    """Per-iteration records of the outer loop."""

    records: tuple[IterationRecord, ...]

    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    def trailing_means(self) -> np.ndarray:
        return np.array([r.trailing_mean for r in self.records])


# ----------------------------------------------------------------------------
# Covariance MLE
# ----------------------------------------------------------------------------


def free_parameter_count(structure: NoiseStructure, n_variables: int) -> int:
    if structure is NoiseStructure.SCALED_IDENTITY:
        return 1
    if structure is NoiseStructure.DIAGONAL:
        return n_variables
    return n_variables * (n_variables + 1) // 2


def check_identifiable(structure: NoiseStructure, n_variables: int, order: int):
    """Raise NotIdentifiable when the structure has too many free parameters.

    The residual covariance exposes at most ``order (order + 1) / 2``
    independent numbers.
    """
    params = free_parameter_count(structure, n_variables)
    limit = order * (order + 1) // 2
    if params > limit:
        raise NotIdentifiable(
            f"{structure.value} covariance of {n_variables} variables has "
            f"{params} free parameters but {order} constraints identify at "
            f"most {limit}"
        )


def residual_covariance(model: ConstraintModel, data: DataSet) -> np.ndarray:
    """Sample covariance of the constraint residuals, ``(A Y)(A Y)^T / N``."""
    r = model.matrix @ data.measurements
    return (r @ r.T) / data.n_samples


def mle_objective(model: ConstraintModel, noise: NoiseModel, data: DataSet) -> float:
    """Residual negative log-likelihood for a fixed model and covariance."""
    value, _ = _objective_and_sigma_gradient(
        model.matrix, noise.sigma, residual_covariance(model, data), data.n_samples
    )
    return value


def canonical_objective(model: ConstraintModel, noise: NoiseModel, data: DataSet) -> float:
    """Residual negative log-likelihood with the constraint rows orthonormalized.

    Invariant under row transformations of the model, hence comparable across
    IPCA iterations; this is the value recorded in the convergence trace.
    """
    basis = orthonormal_row_basis(model.matrix)
    a_y = basis @ data.measurements
    resid_cov = (a_y @ a_y.T) / data.n_samples
    value, _ = _objective_and_sigma_gradient(
        basis, noise.sigma, resid_cov, data.n_samples
    )
    return value


def _objective_and_sigma_gradient(a, sigma, resid_cov, n_samples):
    """Objective value and its gradient with respect to the full covariance."""
    inner = a @ sigma @ a.T
    try:
        factor = cho_factor(inner, lower=True)
    except np.linalg.LinAlgError:
        return np.inf, None
    logdet = 2.0 * np.sum(np.log(np.diag(factor[0])))
    inner_inv = cho_solve(factor, np.eye(inner.shape[0]))
    value = n_samples * (logdet + np.trace(inner_inv @ resid_cov))
    kernel = inner_inv - inner_inv @ resid_cov @ inner_inv
    gradient = n_samples * (a.T @ kernel @ a)
    return float(value), gradient


def _diagonal_objective(theta, a, resid_cov, n_samples):
    """Objective and gradient in log-SD coordinates, sigma = diag(exp(2 theta))."""
    variances = np.exp(2.0 * theta)
    value, grad_sigma = _objective_and_sigma_gradient(
        a, np.diag(variances), resid_cov, n_samples
    )
    if grad_sigma is None:
        return np.inf, np.zeros_like(theta)
    return value, 2.0 * variances * np.diag(grad_sigma)


def _tril_parameterization(n):
    rows, cols = np.tril_indices(n)
    diag_mask = rows == cols
    return rows, cols, diag_mask


def _full_objective(params, a, resid_cov, n_samples, tril):
    """Objective and gradient in log-Cholesky coordinates, sigma = C C^T."""
    rows, cols, diag_mask = tril
    n = a.shape[1]
    c = np.zeros((n, n))
    c[rows, cols] = params
    c[np.arange(n), np.arange(n)] = np.exp(params[diag_mask])
    sigma = c @ c.T
    value, grad_sigma = _objective_and_sigma_gradient(a, sigma, resid_cov, n_samples)
    if grad_sigma is None:
        return np.inf, np.zeros_like(params)
    grad_c = 2.0 * grad_sigma @ c
    grad = grad_c[rows, cols]
    grad[diag_mask] *= np.diag(c)
    return value, grad


def _coordinate_descent(fun, theta, tol, rng, max_sweeps=60):
    """Coordinate-wise line search fallback for the covariance optimizer.

    Minimizes each parameter in turn with a bounded scalar search; restarts
    from a jittered point when a sweep makes no progress from a non-finite
    state.
    """
    theta = np.array(theta, dtype=float)
    best = fun(theta)
    if not np.isfinite(best):
        for _ in range(5):
            theta = theta + rng.normal(scale=0.5, size=theta.size)
            best = fun(theta)
            if np.isfinite(best):
                break
        else:
            raise OptimizerDiverged("covariance objective is non-finite everywhere tried")
    for _ in range(max_sweeps):
        previous = best
        for i in range(theta.size):
            def line(t, i=i):
                trial = theta.copy()
                trial[i] = t
                return fun(trial)

            res = minimize_scalar(
                line, bounds=(theta[i] - 3.0, theta[i] + 3.0), method="bounded",
                options={"xatol": 1e-10},
            )
            if np.isfinite(res.fun) and res.fun < best:
                theta[i] = res.x
                best = res.fun
        if abs(previous - best) <= tol * max(1.0, abs(previous)):
            break
    return theta, best


def estimate_covariance_mle(
    model: ConstraintModel,
    data: DataSet,
    structure: NoiseStructure = NoiseStructure.DIAGONAL,
    init: NoiseModel | None = None,
    *,
    tol: float = 1e-8,
    seed: int = 0,
) -> NoiseModel:
    """Maximum-likelihood error covariance from constraint residuals.

    The model is held fixed.  Positivity is enforced by optimizing log
    standard deviations (diagonal) or a log-Cholesky factor (full); the
    scaled-identity variance has a closed form and needs no optimizer.

    Raises NotIdentifiable when the structure has more free parameters than
    the residuals can pin down, and OptimizerDiverged when the residual
    covariance is singular (the objective is then unbounded below).
    """
    if model.n_variables != data.n_variables:
        raise DimensionMismatch(
            f"model has {model.n_variables} variables, data has {data.n_variables}"
        )
    a = model.matrix
    m, n = a.shape
    check_identifiable(structure, n, m)
    resid_cov = residual_covariance(model, data)
    eigvals = np.linalg.eigvalsh(resid_cov)
    if eigvals[-1] <= 0 or eigvals[0] <= 1e-12 * eigvals[-1]:
        raise OptimizerDiverged(
            "residual covariance is singular (noise-free or degenerate data); "
            "the likelihood is unbounded below"
        )
    n_samples = data.n_samples

    if structure is NoiseStructure.SCALED_IDENTITY:
        # Closed form: variance = tr((A A^T)^-1 S_r) / m.
        gram = cho_factor(a @ a.T, lower=True)
        variance = float(np.trace(cho_solve(gram, resid_cov))) / m
        return NoiseModel.scaled_identity(variance, n)

    if init is not None and init.n_variables != n:
        raise DimensionMismatch(
            f"init covariance covers {init.n_variables} variables, expected {n}"
        )

    if structure is NoiseStructure.DIAGONAL:
        start_sd = init.sd if init is not None else np.ones(n)
        theta0 = np.log(np.maximum(start_sd, 1e-8))
        objective = lambda t: _diagonal_objective(t, a, resid_cov, n_samples)
    else:
        tril = _tril_parameterization(n)
        rows, cols, diag_mask = tril
        start = init.cholesky_lower() if init is not None else np.eye(n)
        params0 = start[rows, cols]
        params0[diag_mask] = np.log(np.maximum(np.diag(start), 1e-8))
        theta0 = params0
        objective = lambda t: _full_objective(t, a, resid_cov, n_samples, tril)

    result = minimize(
        objective,
        theta0,
        jac=True,
        method="L-BFGS-B",
        options={"ftol": tol, "gtol": 1e-12, "maxiter": 1000},
    )
    theta = result.x
    best = result.fun
    if not np.isfinite(best):
        raise OptimizerDiverged("covariance objective became non-finite")
    if not result.success:
        rng = np.random.default_rng(seed)
        theta, best = _coordinate_descent(
            lambda t: objective(t)[0], theta, tol, rng
        )
        if not np.isfinite(best):
            raise OptimizerDiverged("covariance optimizer failed to recover")

    if structure is NoiseStructure.DIAGONAL:
        return NoiseModel.from_sd(np.exp(theta))
    rows, cols, diag_mask = tril
    c = np.zeros((n, n))
    c[rows, cols] = theta
    c[np.arange(n), np.arange(n)] = np.exp(theta[diag_mask])
    return NoiseModel(c @ c.T, NoiseStructure.FULL)


# ----------------------------------------------------------------------------
# The outer loop
# ----------------------------------------------------------------------------


def ipca(
    data: DataSet, config: IpcaConfig
) -> tuple[IdentificationResult, ConvergenceTrace]:
    """Alternate whitened PCA and covariance MLE until the spectrum hits unity.

    Starts from an identity covariance (so iteration one is plain PCA).
    Convergence requires the mean of the trailing ``assumed_order`` whitened
    singular values to be within ``spectrum_tolerance`` of one AND the
    covariance estimate to have stopped moving.  On hitting the iteration cap
    the partial result is returned with ``converged=False`` rather than
    discarded; order scans rely on failed fits as evidence.
    """
    n = data.n_variables
    m_e = config.assumed_order
    if not 1 <= m_e < n:
        raise OrderOutOfRange(f"assumed order {m_e} outside [1, {n - 1}]")
    if data.n_samples < n:
        raise DimensionMismatch(
            f"IPCA needs at least {n} samples, got {data.n_samples}"
        )
    check_identifiable(config.covariance_structure, n, m_e)

    noise = NoiseModel.identity(n)
    sigma_change = np.inf
    records: list[IterationRecord] = []
    final: IdentificationResult | None = None

    for iteration in range(1, config.max_iterations + 1):
        step = pca_identify(data, noise, order=m_e)
        trailing_mean = float(step.singular_values[-m_e:].mean())

        if (
            abs(trailing_mean - 1.0) <= config.spectrum_tolerance
            and sigma_change < SIGMA_STATIONARY_RTOL
        ):
            records.append(
                IterationRecord(
                    iteration,
                    canonical_objective(step.model, noise, data),
                    trailing_mean,
                    noise.sigma,
                )
            )
            final = _as_ipca_result(step, noise, iteration, converged=True)
            break

        new_noise = estimate_covariance_mle(
            step.model,
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
        records.append(
            IterationRecord(
                iteration,
                canonical_objective(step.model, new_noise, data),
                trailing_mean,
                new_noise.sigma,
            )
        )
        noise = new_noise

    if final is None:
        # Iteration cap: redo the PCA step so the returned model, estimates
        # and spectrum are all consistent with the final covariance.
        step = pca_identify(data, noise, order=m_e)
        final = _as_ipca_result(step, noise, config.max_iterations, converged=False)

    return final, ConvergenceTrace(tuple(records))


def _as_ipca_result(
    step: IdentificationResult, noise: NoiseModel, iterations: int, converged: bool
) -> IdentificationResult:
    model = dataclasses.replace(step.model, provenance=ModelProvenance.IPCA_ESTIMATED)
    return IdentificationResult(
        model=model,
        noise=noise,
        reconciled=step.reconciled,
        singular_values=step.singular_values,
        iterations=iterations,
        converged=converged,
    )


# ----------------------------------------------------------------------------
# Model-order scan
# ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OrderScanEntry:
    """Evidence gathered for one assumed model order."""

    order: int
    identifiable: bool
    spectrum: np.ndarray | None = None
    converged: bool = False
    iterations: int = 0
    unity_count: int = 0
    consistent: bool = False
    degenerate: bool = False
    alpha: float | None = None
    rmse: np.ndarray | None = None
    result: IdentificationResult | None = None


@dataclass(frozen=True, eq=False)
class OrderScanReport:
    """Per-order IPCA fits plus the order estimated from the unity rule."""

    entries: tuple[OrderScanEntry, ...]
    estimated_order: int | None


def order_scan(
    data: DataSet,
    template: IpcaConfig,
    orders,
    truth_model: ConstraintModel | None = None,
    unity_band: float = DEFAULT_ORDER_TOLERANCE,
) -> OrderScanReport:
    """Fit IPCA at each assumed order and locate where the unity rule breaks.

    An order is consistent when the fit converged and exactly that many
    whitened singular values lie within ``1 +- unity_band``.  Scanning
    upward from the smallest identifiable order, the estimated true order is
    the last consistent one before the first violation.  Non-identifiable or
    degenerate (exactly rank-deficient, noise-free) orders are reported
    inline, never raised.
    """
    from .diagnostics import alpha_metric, rmse_report

    entries = []
    for order in sorted(set(int(m) for m in orders)):
        try:
            check_identifiable(template.covariance_structure, data.n_variables, order)
        except NotIdentifiable:
            entries.append(OrderScanEntry(order=order, identifiable=False))
            continue
        config = dataclasses.replace(template, assumed_order=order)
        try:
            result, _ = ipca(data, config)
        except OptimizerDiverged:
            # Noise-free or exactly rank-deficient data: no covariance can be
            # estimated, the unity pattern is replaced by exact zeros.
            spectrum = np.linalg.svd(
                data.measurements / np.sqrt(data.n_samples), compute_uv=False
            )
            entries.append(
                OrderScanEntry(
                    order=order,
                    identifiable=True,
                    spectrum=spectrum,
                    degenerate=True,
                )
            )
            continue
        spectrum = result.singular_values
        # Whitened singular values sit on a unity scale, so an absolute
        # threshold separates exact rank deficiency from small-but-real values.
        degenerate = bool(spectrum[-1] <= 1e-10)
        unity_count = int(np.sum(np.abs(spectrum - 1.0) <= unity_band))
        consistent = result.converged and not degenerate and unity_count == order
        alpha = (
            alpha_metric(result.model, truth_model) if truth_model is not None else None
        )
        rmse = (
            rmse_report(result.reconciled, data.true_values)
            if data.true_values is not None
            else None
        )
        entries.append(
            OrderScanEntry(
                order=order,
                identifiable=True,
                spectrum=spectrum,
                converged=result.converged,
                iterations=result.iterations,
                unity_count=unity_count,
                consistent=consistent,
                degenerate=degenerate,
                alpha=alpha,
                rmse=rmse,
                result=result,
            )
        )

    estimated = None
    for entry in entries:
        if not entry.identifiable:
            continue
        if entry.consistent:
            estimated = entry.order
        else:
            break
    return OrderScanReport(tuple(entries), estimated)
