"""Provides the exception hierarchy of the package."""


class FnlBsdeError(Exception):
    """Base class for all errors raised by the package."""


class ConfigurationError(FnlBsdeError, ValueError):
    """Invalid dimensions, counts or configuration values."""


class ConfigParseError(ConfigurationError):
    """A configuration file could not be parsed."""

    line_number: int | None

    def __init__(self, message: str, *, line_number: int | None = None) -> None:
        """Initializes a `ConfigParseError` instance.

        Args:
            message: The error message.
            line_number: The 1-indexed line of the offending entry, if known.
        """
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ShapeError(FnlBsdeError, ValueError):
    """Array dimensions do not match."""


class DomainError(FnlBsdeError, ValueError):
    """An argument lies outside the domain of a function."""


class TrainingDivergenceError(FnlBsdeError, ArithmeticError):
    """A loss, gradient or parameter became non-finite during training."""

    reason: str
    step: int | None
    iteration: int | None

    def __init__(self, message: str, *, step: int | None = None, iteration: int | None = None) -> None:
        """Initializes a `TrainingDivergenceError` instance.

        Args:
            message: The error message.
            step: The time-step index being optimized.
            iteration: The inner iteration at which the divergence was detected.
        """
        super().__init__(f"{message} (step={step}, iteration={iteration})")
        self.reason = message
        self.step = step
        self.iteration = iteration


class SimulationBlowupError(FnlBsdeError, ArithmeticError):
    """A simulated state became non-finite."""

    step: int

    def __init__(self, message: str, *, step: int) -> None:
        """Initializes a `SimulationBlowupError` instance.

        Args:
            message: The error message.
            step: The Euler step producing the first non-finite state.
        """
        super().__init__(f"{message} (step={step})")
        self.step = step


class RiccatiAccuracyError(FnlBsdeError, ArithmeticError):
    """The Riccati integration failed its mesh-doubling self-check."""
