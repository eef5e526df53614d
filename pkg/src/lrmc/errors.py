"""Exception types shared across the package."""


class LrmcError(Exception):
    """Base class for all package-specific errors."""


class DegenerateRankError(LrmcError):
    """A factored matrix has a zero trailing singular value where a
    strictly positive one is required."""


class SvdConvergenceError(LrmcError):
    """The SVD backend failed to produce finite factors.

    Carries the iteration count of the iterative backend, or None when
    the dense LAPACK driver failed.
    """

    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class RankCollapseError(LrmcError):
    """A retraction target has numerical rank below the manifold rank.

    Carries the full spectrum of the small core matrix so callers can
    inspect how the collapse happened.
    """

    def __init__(self, message, spectrum=None):
        super().__init__(message)
        self.spectrum = spectrum


class DegenerateStepsizeError(LrmcError):
    """A stepsize denominator is nonpositive or numerically zero,
    meaning the sampled entries do not see the search direction."""


class InitFailureError(LrmcError):
    """An initialization round could not produce a rank-r iterate."""


class RegimeError(LrmcError):
    """Constants fall outside the regime where a bound is defined."""


class ConfigError(LrmcError):
    """An experiment configuration file is invalid."""
