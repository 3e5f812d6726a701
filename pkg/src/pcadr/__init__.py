"""Data reconciliation and PCA/IPCA model identification for linear steady-state processes."""

from .core import (
    ConstraintModel,
    DataSet,
    IdentificationResult,
    ModelProvenance,
    NoiseModel,
    NoiseStructure,
    SpectralDecomposition,
    residuals,
    validate_model,
)
from .diagnostics import (
    RegressionComparison,
    alpha_metric,
    regression_compare,
    rmse_report,
    subspace_angle,
)
from .ipca import (
    ConvergenceTrace,
    IpcaConfig,
    OrderScanEntry,
    OrderScanReport,
    estimate_covariance_mle,
    ipca,
    mle_objective,
    order_scan,
)
from .known_constraints import identify_with_known
from .pca import detect_order, pca_denoise, pca_identify
from .reconcile import (
    ClassificationReport,
    PartialReconciliation,
    ReconciliationGain,
    classify_flow_network,
    measured_mask,
    project_unmeasured,
    reconcile_full,
    reconcile_partial,
    reconciliation_gain,
)
from .simulate import SimulationSpec, simulate

__version__ = "0.1.0"

__all__ = [
    "ClassificationReport",
    "ConstraintModel",
    "ConvergenceTrace",
    "DataSet",
    "IdentificationResult",
    "IpcaConfig",
    "ModelProvenance",
    "NoiseModel",
    "NoiseStructure",
    "OrderScanEntry",
    "OrderScanReport",
    "PartialReconciliation",
    "ReconciliationGain",
    "RegressionComparison",
    "SimulationSpec",
    "SpectralDecomposition",
    "alpha_metric",
    "classify_flow_network",
    "detect_order",
    "estimate_covariance_mle",
    "identify_with_known",
    "ipca",
    "measured_mask",
    "mle_objective",
    "order_scan",
    "pca_denoise",
    "pca_identify",
    "project_unmeasured",
    "reconcile_full",
    "reconcile_partial",
    "reconciliation_gain",
    "regression_compare",
    "residuals",
    "rmse_report",
    "simulate",
    "subspace_angle",
    "validate_model",
    "__version__",
]
