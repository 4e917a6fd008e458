"""Exception types raised by the GP backends."""


class FactGPError(Exception):
    """Base class for all errors raised by this package."""


class InputShapeError(FactGPError, ValueError):
    """Array shapes or dimensions do not agree."""


class IllConditionedKernelError(FactGPError, ArithmeticError):
    """Cholesky of a kernel matrix failed even after a jitter retry."""

    def __init__(self, message, jitter=None):
        super().__init__(message)
        self.jitter = jitter


class DegenerateInducingSetError(FactGPError, ArithmeticError):
    """K_ZZ could not be factorized (duplicate or collapsed inducing points)."""


class OptimizationDivergedError(FactGPError, ArithmeticError):
    """An optimizer met a non-finite objective it could not recover from."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []


class ExtrapolationError(FactGPError, ValueError):
    """An input lies outside the interpolation grid."""


class SingularFactorError(FactGPError, ArithmeticError):
    """A Kronecker factor is singular."""

    def __init__(self, message, dimension=None):
        super().__init__(message)
        self.dimension = dimension


class CGBreakdownError(FactGPError, ArithmeticError):
    """Conjugate gradients produced a non-finite residual or a non-positive curvature."""


class IndefiniteMatrixError(FactGPError, ArithmeticError):
    """A hierarchical factorization met a block that is not positive definite."""


class NearSingularUpdateError(FactGPError, ArithmeticError):
    """A Sherman-Morrison-Woodbury core is (numerically) singular."""

    def __init__(self, message, level=None):
        super().__init__(message)
        self.level = level


class AlignmentError(FactGPError, ValueError):
    """Results to be exported do not share a test grid."""


class ConfigError(FactGPError, ValueError):
    """An experiment configuration is invalid."""
