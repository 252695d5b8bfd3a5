"""Exception hierarchy shared by all solver stages."""


class ErgodicMFGError(Exception):
    """Base class for every error raised by this package."""


class ModelError(ErgodicMFGError, ValueError):
    """A coefficient model returned malformed values (wrong shape, non-symmetric diffusion)."""


class MonotonicityError(ErgodicMFGError):
    """The finite-difference stencil would lose nonnegative off-diagonals."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class SingularSystemError(ErgodicMFGError):
    """A kernel or Poisson solve failed, or the chain is reducible."""


class NegativeMassError(ErgodicMFGError):
    """A computed invariant measure carries negative weight beyond rounding."""


class IncompatibleRHS(ErgodicMFGError):
    """The Poisson right-hand side is not orthogonal to the invariant measure."""


class LimitExceeded(ErgodicMFGError):
    """The brute-force oracle was asked to enumerate too many control fields."""


class NonConvergence(ErgodicMFGError):
    """The fixed-point iteration hit its iteration cap.

    The last iterate (with diagnostics attached) and the iteration trace are
    kept on the exception so callers can still inspect or certify them.
    """

    def __init__(self, message, solution=None, trace=None):
        super().__init__(message)
        self.solution = solution
        self.trace = trace if trace is not None else []


class ConfigError(ErgodicMFGError):
    """A scenario document failed to parse or is inconsistent."""
