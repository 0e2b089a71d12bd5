"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: DataError -> 2, NumericError -> 3.
"""


class EmbkitError(Exception):
    pass


class DataError(EmbkitError):
    """Malformed or inconsistent input data (files, datasets, vocabularies)."""


class NumericError(EmbkitError):
    """Non-finite values or otherwise unusable numerical state."""
