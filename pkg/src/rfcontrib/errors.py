"""Exception hierarchy shared by every module."""


class RFContribError(Exception):
    """Base class for all package errors."""


class ConfigError(RFContribError, ValueError):
    """Invalid training or plotting configuration."""


class DataError(RFContribError, ValueError):
    """Malformed input data (missing values, ragged rows, empty tables)."""


class SchemaError(RFContribError, ValueError):
    """Query rows do not match the schema a model was trained on."""


class UnseenLevelError(SchemaError):
    def __init__(self, row: int, column: str, level: str):
        self.row = row
        self.column = column
        self.level = level
        super().__init__(f"row {row}: column {column!r} has level {level!r} not seen in training")


class DegenerateError(RFContribError, ValueError):
    """A computation is undefined for the given input (zero counts, constant context)."""


class VariantMismatchError(RFContribError, ValueError):
    """Plain contributions checked against OOB predictions or vice versa."""


class ModelFormatError(RFContribError, ValueError):
    """A persisted model is truncated, corrupted or of a foreign format version."""
