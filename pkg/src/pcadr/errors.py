"""Exception types shared across the package."""


class PcadrError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(PcadrError, ValueError):
    """Shapes or variable labels of two objects do not line up."""


class InvalidModel(PcadrError, ValueError):
    """A constraint model violates its invariants.

    Carries the list of violation records produced by ``validate_model``.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class SingularInnerMatrix(PcadrError, RuntimeError):
    """The inner matrix of the reconciliation gain is numerically singular.

    Usually signals a rank-deficient constraint matrix.
    """


class CholeskyFailure(PcadrError, RuntimeError):
    """A covariance matrix is not positive definite."""


class OrderOutOfRange(PcadrError, ValueError):
    """Requested or detected model order is outside [1, n_variables - 1]."""


class NotIdentifiable(PcadrError, ValueError):
    """Covariance structure has more free parameters than residuals can pin down."""


class OptimizerDiverged(PcadrError, RuntimeError):
    """Covariance likelihood is unbounded or the optimizer produced non-finite values."""


class NoConvergence(PcadrError, RuntimeError):
    """Iteration limit reached without meeting the convergence criterion."""


class KnownRankDeficient(PcadrError, ValueError):
    """A user-supplied known constraint block is not full row rank."""


class OrderConflict(PcadrError, ValueError):
    """Total model order is smaller than the number of known constraints."""


class SingularDependentBlock(PcadrError, RuntimeError):
    """The dependent-variable column block of a constraint matrix is singular."""


class SpecValidationError(PcadrError, ValueError):
    """A simulation spec document failed validation.

    ``messages`` holds one human-readable string per offending field.
    """

    def __init__(self, messages):
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


class UndersampledDataWarning(UserWarning):
    """Fewer samples than variables: identification results will be degenerate."""
