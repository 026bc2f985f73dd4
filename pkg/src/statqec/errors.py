"""Shared exception types.

Every guard in the package raises one of these, so callers (and the CLI
exit-code mapping) can tell configuration mistakes apart from inputs that
are structurally impossible or simply too large for an exact method.
"""


class StatqecError(ValueError):
    """Base class for all package-specific errors."""


class ValidationError(StatqecError):
    """Malformed code data: bad indices, failed commutation, dependent logicals."""


class InvalidParameter(StatqecError):
    """A numeric parameter is outside its allowed range."""


class InvalidInput(StatqecError):
    """An input object violates a structural precondition (e.g. boundary spins)."""


class UnsupportedSize(StatqecError):
    """The instance is larger than an exact method's enumeration cutoff."""


class UnsupportedCode(StatqecError):
    """The operation requires structure this code does not have."""


class InconsistentBoundary(StatqecError):
    """Hard constraints admit no solution (corrupted syndrome or frozen layer)."""
