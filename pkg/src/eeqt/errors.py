"""Exception hierarchy shared by the simulator modules."""


class EEQTError(Exception):
    """Base class for all simulator errors."""

    exit_code = 1


class UsageError(EEQTError, ValueError):
    """An argument is outside the domain an operation accepts."""

    exit_code = 2


class ConfigurationError(UsageError):
    """A configuration is inconsistent or incomplete."""


class DomainError(UsageError):
    """A physical parameter lies outside its admissible range."""


class ConstructionError(EEQTError):
    """An initial state could not be represented on the requested grid."""

    exit_code = 3

    def __init__(self, message, leakage=None):
        super().__init__(message)
        self.leakage = leakage


class NumericalInstabilityError(EEQTError, ArithmeticError):
    """The damped evolution produced a norm increase."""

    exit_code = 4


class NoDetectionError(EEQTError):
    """The detection probability is too small for a density to be defined."""

    exit_code = 5
