"""Shared exception and warning types."""


class QuadIdError(Exception):
    """Base class for toolkit errors."""


class ConfigError(QuadIdError):
    """Bad configuration, schema mismatch, or unreadable input file."""


class NumericsError(QuadIdError):
    """Numerical failure: singularity, divergence, or non-convergence."""


class DegeneratePitchError(NumericsError):
    """Pitch angle too close to +/- pi/2 for the Euler-rate map."""


class SingularInertiaError(NumericsError):
    """Generalized inertia matrix is numerically singular."""


class SingularMatrixError(NumericsError):
    """A model coupling matrix is numerically singular."""


class DivergenceError(NumericsError):
    """Simulated vehicle left the valid attitude envelope."""


class TooShortSeriesError(QuadIdError):
    """Operation needs more samples than the series provides."""


class RankDeficiencyWarning(UserWarning):
    """Regression design matrix is rank deficient."""


class NonConvergenceWarning(UserWarning):
    """Iterative solver hit its iteration cap before converging."""
