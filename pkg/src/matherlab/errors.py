"""Exception hierarchy shared by all matherlab modules."""


class MatherlabError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(MatherlabError):
    """Non-finite or otherwise malformed numerical input."""


class AmbiguousLiftError(MatherlabError):
    """A torus step exceeded 1/2 in some coordinate; the lift is not unique."""


class ResolutionError(MatherlabError):
    """A discretization was requested below the minimum supported size."""


class NotTonelliError(MatherlabError):
    """Convexity failed on the validation grid (min Hessian eigenvalue <= 0)."""


class InconsistentDerivativesError(MatherlabError):
    """Analytic derivatives disagree with finite differences beyond tolerance."""


class ConvergenceError(MatherlabError):
    """An iterative solve failed to converge; ``best`` holds the last iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class IllConditionedError(MatherlabError):
    """A linear solve was requested on a matrix with excessive condition number."""


class IntegrationFailureError(MatherlabError):
    """Energy drift exceeded 100x the configured budget during integration."""


class InsufficientDataError(MatherlabError):
    """A trajectory was too short for the requested statistic."""


class DegenerateLoopError(MatherlabError):
    """A loop segment of zero length carries a nonzero share of the period."""


class BelowCriticalError(MatherlabError):
    """Requested energy is not above the strict critical value."""


class BracketingError(MatherlabError):
    """A bisection bracket was non-monotone; ``samples`` holds diagnostics."""

    def __init__(self, message, samples=None):
        super().__init__(message)
        self.samples = samples or []


class RefinementError(MatherlabError):
    """Newton refinement of a periodic orbit diverged; ``residual`` is the last one."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateOrbitError(MatherlabError):
    """Orbit period collapsed below the minimum during refinement."""


class InapplicableError(MatherlabError):
    """Operation preconditions are not met (e.g. no transverse-cycle certificate)."""


class InsufficientSampleError(MatherlabError):
    """Too few valid samples survived rejection/drift filters."""


class ConfigError(MatherlabError):
    """Malformed experiment configuration; ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
