"""Exception types shared across the package."""


class QBufferError(Exception):
    """Base class for every error this package raises deliberately."""


class InputDomainError(QBufferError, ValueError):
    """An argument lies outside the documented domain of an operation."""


class ContractViolationError(QBufferError, ValueError):
    """An internal consistency guarantee failed (non-unitary optic, broken
    power audit, ...). Indicates misuse or a bug rather than bad user input."""


class ScheduleError(QBufferError, ValueError):
    """A drive schedule is structurally invalid or unsafe to run."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class CalibrationError(QBufferError, ValueError):
    """Requested visibility targets cannot be realized by the
    depolarization model."""


class ConfigError(QBufferError, ValueError):
    """A run configuration failed schema validation.

    ``path`` is the dotted location of the offending field, e.g.
    ``topology.storage_length_m``.
    """

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.message = message
