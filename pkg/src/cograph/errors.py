"""Exception taxonomy shared across the toolkit.

The CLI maps these onto its exit-code contract: usage problems exit 2,
data/parsing problems exit 3, numeric failures exit 4.
"""


class UsageError(ValueError):
    """Bad flags, bad configuration, or mismatched run modes."""


class ShapeError(ValueError):
    """Operand shapes are incompatible; message names both shapes."""


class DomainError(ValueError):
    """Input outside an operation's mathematical domain (e.g. log of <= 0)."""


class DataFormatError(ValueError):
    """Malformed dataset file; message carries file path and line number."""


class NumericError(RuntimeError):
    """Non-finite value detected during training or optimization."""
