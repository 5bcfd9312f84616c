"""Exception hierarchy. CLI exit codes map onto these classes."""


class RayforgeError(Exception):
    """Base class for all library errors."""


class PreconditionError(RayforgeError):
    """An operation was called outside its documented domain (exit code 2)."""


class UnsupportedInputError(PreconditionError):
    """Input is structurally valid but outside supported scope (e.g. irrational angle)."""


class NumericalError(RayforgeError):
    """A numerical procedure failed to converge (exit code 3)."""


class SolverFailure(NumericalError):
    """Root finding did not reach the required residual."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class SeedFailure(NumericalError):
    """Newton iteration for a ray seed on the conformal chart failed."""


class TraceFailure(NumericalError):
    """Ray descent corrector diverged; carries the partial trace when available."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class AmbiguousCaptureError(NumericalError):
    """Two cataloged singularities both claim a crash within resolution."""


class BranchTrackingError(NumericalError):
    """Conformal-chart branch choice became ambiguous (potential too low)."""


class NotASingularityError(PreconditionError):
    """order_of called on a point with no critical forward image."""


class IncompleteCatalogWarning(RayforgeError):
    """Crash-angle bracketing could not resolve every singularity."""


class PartnerMatchError(NumericalError):
    """No partner ray matched the arriving continuation at a singularity."""


class InconsistencyError(NumericalError):
    """Two independent computations of the same quantity disagree."""

    def __init__(self, message, candidates=None):
        super().__init__(message)
        self.candidates = candidates


class TheoremViolation(RayforgeError):
    """Numerics contradict a proven statement under its hypotheses (exit code 4)."""
