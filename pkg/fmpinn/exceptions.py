"""Exceptions for the fmpinn package."""

from copy import deepcopy as copy


class FmpinnError(Exception):
    """Base exception for all fmpinn errors."""


class FieldError(FmpinnError):
    """Base exception for configuration field errors.

    Attributes:
        message: The error message.
        field: The flattened name of the field (e.g. 'training.beta').
        value: The offending value.
    """

    def __init__(self, message, field=None, value=None):
        super().__init__(message)
        self.field = field
        self.value = copy(value)


class ValidationError(FieldError):
    """Exception raised when a configuration value fails validation.

    Attributes:
        message: The error message.
        field: The flattened name of the field.
        value: The value that failed validation.
    """


class ConversionError(FieldError):
    """Exception raised when a value cannot be converted to the expected type.

    Attributes:
        message: The error message.
        field: The flattened name of the field.
        value: The value that failed conversion.
    """


class ConfigurationError(FmpinnError):
    """Exception raised for inconsistent configurations, e.g. parameters that
    do not match a network configuration or an unknown problem name."""


class NumericError(FmpinnError):
    """Exception raised when a computation produces a non-finite value or hits
    a domain error (division by zero, log of a non-positive value).

    Attributes:
        message: The error message.
        layer: Index of the network layer where the value appeared, if known.
        epoch: Training epoch during which the error happened, if known.
    """

    def __init__(self, message, layer=None, epoch=None):
        super().__init__(message)
        self.layer = layer
        self.epoch = epoch


class TrainingAborted(NumericError):
    """Exception raised when training stops on a numeric failure.

    Attributes:
        checkpoint: Path of the checkpoint holding the last finite parameters.
        record: The partial run record up to the failure.
    """

    def __init__(self, message, layer=None, epoch=None, checkpoint=None, record=None):
        super().__init__(message, layer=layer, epoch=epoch)
        self.checkpoint = checkpoint
        self.record = record


class SolverError(FmpinnError):
    """Exception raised when the finite-difference linear solve fails.

    Attributes:
        iterations: Number of iterations performed.
        residual: Relative residual reached.
    """

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class CheckFailed(FmpinnError):
    """Exception raised when one or more validation checks fail.

    Attributes:
        failed: Names of the failing checks.
    """

    def __init__(self, message, failed=None):
        super().__init__(message)
        self.failed = list(failed or [])
