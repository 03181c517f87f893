"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes: usage/configuration problems,
missing or corrupt inputs, and numeric failures each get their own class.
"""


class EHFError(Exception):
    """Base class for all package errors."""


class ConfigurationError(EHFError):
    """Invalid parameters, invalid config files, or inconsistent run setup."""


class DomainError(EHFError):
    """A scalar argument is outside the mathematical domain of an operation."""


class ShapeError(EHFError):
    """Array arguments have inconsistent shapes."""


class StateError(EHFError):
    """An operation was invoked before its prerequisite (e.g. backward without a recorded forward)."""


class ResolutionError(EHFError):
    """A referenced input file or artifact does not exist."""


class IntegrityError(EHFError):
    """A persisted artifact is corrupt or fails its checksum."""


class NumericError(EHFError):
    """A numeric failure such as a NaN loss or a gradient-check breach."""
