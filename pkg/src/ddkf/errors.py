"""Exception hierarchy shared by the library and the command line.

Every error carries a machine-readable ``category`` and the process exit code
the CLI uses for it.
"""


class DDKFError(Exception):
    category = "error"
    exit_code = 1


class SchemaError(DDKFError, ValueError):
    category = "schema"
    exit_code = 2


class InsufficientDataError(DDKFError, ValueError):
    category = "insufficient-data"
    exit_code = 3


class DimensionError(DDKFError, ValueError):
    category = "dimension-mismatch"
    exit_code = 4


class ExcitationError(DDKFError, ValueError):
    category = "insufficient-excitation"
    exit_code = 5


class NumericalError(DDKFError, ArithmeticError):
    category = "numerical"
    exit_code = 6


class DareError(NumericalError):
    category = "riccati"
    exit_code = 7


class DataFormatError(DDKFError, ValueError):
    category = "data-format"
    exit_code = 8


def error_payload(error):
    """Machine-readable description of an error for the CLI."""
    category = getattr(error, "category", "error")
    return {"error": category, "message": str(error)}
