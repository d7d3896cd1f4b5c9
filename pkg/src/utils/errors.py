"""
Error types shared by every package module
Each error carries a short category used by the CLI for its one-line report and exit status
"""


class DsuError(Exception):
    """Base class for all library errors"""

    category = "error"
    exit_code = 1


class DimensionError(DsuError, ValueError):
    """Shape or extent mismatch"""

    category = "dimension"
    exit_code = 2


class ContractError(DsuError, ValueError):
    """Violated precondition, unknown identifier or incompatible configuration"""

    category = "contract"
    exit_code = 3


class NumericError(DsuError, ArithmeticError):
    """Non-finite or out-of-range numeric value"""

    category = "numeric"
    exit_code = 4


class DataIOError(DsuError, OSError):
    """Missing, unwritable or corrupt file"""

    category = "io"
    exit_code = 5
