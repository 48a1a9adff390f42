from __future__ import annotations


class OccluFuseError(Exception):
    """Base class for every error raised by the library.

    ``exit_code`` is what the CLI returns when the error escapes a command.
    """

    exit_code: int = 3


class ConfigError(OccluFuseError):
    exit_code = 2


# capacitive sensor
class DomainError(OccluFuseError, ValueError):
    pass


class OutOfRangeError(OccluFuseError, ValueError):
    pass


class DegenerateError(OccluFuseError, ValueError):
    pass


class FitConvergenceError(OccluFuseError):
    pass


class RankDeficiencyError(FitConvergenceError):
    pass


# haptic estimator
class HapticEstimationError(OccluFuseError):
    pass


class InsufficientMeasurementsError(HapticEstimationError):
    pass


class NonConvergenceError(HapticEstimationError):
    pass


class DegenerateGeometryError(HapticEstimationError):
    pass


# masks and vision
class DimensionMismatchError(OccluFuseError, ValueError):
    pass


class InfeasibleError(OccluFuseError, ValueError):
    pass


class LostTrackError(OccluFuseError):
    def __init__(self, message: str, score: float | None = None) -> None:
        super().__init__(message)
        self.score = score


class EmptyGridError(OccluFuseError, ValueError):
    pass


# observer
class StepInstabilityError(OccluFuseError):
    pass


class SingularCovarianceError(OccluFuseError):
    pass


class NoMeasurementError(OccluFuseError):
    pass


class FilterInstabilityError(OccluFuseError):
    pass
