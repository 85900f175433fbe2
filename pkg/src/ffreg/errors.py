"""Exception and warning types raised across the package."""

__all__ = [
    "FFRError",
    "InvalidArgumentError",
    "SingularFitError",
    "DegenerateFactorError",
    "MulticollinearityError",
    "NearDegenerateSpectrumError",
    "IngestionError",
    "LeakageError",
    "NearDegenerateEigenvalueWarning",
    "ConvergenceWarning",
    "FallbackWarning",
]


class FFRError(Exception):
    """Base class for every error raised by the package."""


class InvalidArgumentError(FFRError, ValueError):
    """An argument violates a documented precondition."""


class SingularFitError(FFRError):
    """A least-squares basis fit has a rank-deficient design."""


class DegenerateFactorError(FFRError):
    """More factors were requested than numerically positive eigenvalues."""


class MulticollinearityError(FFRError):
    """The generated-regressor second-moment matrix is (near) singular.

    Attributes
    ----------
    condition_number : float
    columns : list of str
        Labels of the columns that load on the weakest direction.
    """

    def __init__(self, message, condition_number=float("inf"), columns=()):
        super().__init__(message)
        self.condition_number = condition_number
        self.columns = list(columns)


class NearDegenerateSpectrumError(FFRError):
    """Two retained eigenvalues are too close for the correction terms."""


class IngestionError(FFRError):
    """Market data failed validation during ingestion."""


class LeakageError(FFRError):
    """A forecast feature is not available before its target day."""


class NearDegenerateEigenvalueWarning(UserWarning):
    """Retained eigenvalues are nearly tied; loadings may be unstable."""


class ConvergenceWarning(UserWarning):
    """An iterative solver stopped at its iteration cap."""


class FallbackWarning(UserWarning):
    """A model fell back to a simpler forecast."""
