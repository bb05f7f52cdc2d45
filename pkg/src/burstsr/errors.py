"""Exception hierarchy shared by the library and the CLI."""


class BurstSRError(Exception):
    """Base class for all library errors."""


class ConfigError(BurstSRError, ValueError):
    """Invalid or inconsistent configuration (CLI exit code 3)."""


class NumericalError(BurstSRError, ArithmeticError):
    """Numerical failure: singular systems, non-finite values (CLI exit code 4)."""


class DegenerateWarpError(NumericalError):
    """Affine motion with a degenerate or reflecting linear part."""


class RegistrationError(NumericalError):
    """Alignment could not proceed, typically on untextured input."""


class FileFormatError(BurstSRError, OSError):
    """Unreadable or malformed input file (CLI exit code 2)."""
