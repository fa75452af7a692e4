"""Exception types shared across the package."""


class MotorPrimsError(Exception):
    """Base class for all package errors."""


class ShapeError(MotorPrimsError):
    """Array dimensions are inconsistent with the declared contract."""


class DomainError(MotorPrimsError):
    """A numeric argument is outside its valid domain (e.g. nonpositive std)."""


class NumericError(MotorPrimsError):
    """NaN/Inf encountered where finite values are required."""


class FeasibilityError(MotorPrimsError):
    """A reference trajectory is not dynamically reachable within action bounds."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class ValidationError(MotorPrimsError):
    """A computed quantity failed a construction-time cross-check."""


class TrainingError(MotorPrimsError):
    """Training diverged; carries the step index at which it happened."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class CompatibilityError(MotorPrimsError):
    """Model and environment (or task) dimensions do not match."""


class ConfigError(MotorPrimsError):
    """Experiment configuration failed validation; carries per-field messages."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


class StageError(MotorPrimsError):
    """A pipeline stage failed; carries the stage name and the cause."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
