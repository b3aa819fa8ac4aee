"""Exception hierarchy shared across the toolkit."""


class DataConformError(Exception):
    """Base class for all toolkit errors."""


class NumericalError(DataConformError):
    """An iterative routine failed to converge or produced non-finite values."""


class NotPsdError(DataConformError):
    """A matrix required to be positive semidefinite is not, beyond tolerance."""


class PeViolationError(DataConformError):
    """Trajectory data fails the persistent-excitation rank condition."""

    def __init__(self, message, rank=None, required=None):
        super().__init__(message)
        self.rank = rank
        self.required = required


class DegenerateDataError(DataConformError):
    """An empirical covariance is singular or too ill-conditioned to invert."""


class InstabilityError(DataConformError):
    """The closed loop is not Schur stable where stability is required."""

    def __init__(self, message, spectral_radius=None):
        super().__init__(message)
        self.spectral_radius = spectral_radius


class IllConditionedError(DataConformError):
    """Controller recovery aborted because the design covariance is near singular."""


class ConfigError(DataConformError):
    """A run configuration file is malformed or violates an invariant."""
