"""Shared exception types."""


class DataError(ValueError):
    """Malformed input data or files (bad matrix/image files, size mismatches)."""


class NumericalError(RuntimeError):
    """A computation produced non-finite or otherwise invalid numerics."""
