"""Exception hierarchy shared by the simulator."""
from __future__ import annotations


class FedAugmentError(Exception):
    """Base class for all simulator errors."""


class ConfigError(FedAugmentError, ValueError):
    """Invalid experiment configuration."""


class SchemaError(FedAugmentError):
    """Dataset columns do not match the declared schema."""


class ParseError(FedAugmentError):
    """A cell could not be parsed into its declared type."""

    def __init__(self, row: int, column: str, value: str) -> None:
        super().__init__(f"row {row}, column {column!r}: cannot parse {value!r} as a number")
        self.row = row
        self.column = column
        self.value = value


class EncodingError(FedAugmentError):
    """A value is missing from the federation-wide vocabulary."""

    def __init__(self, column: str, value: str) -> None:
        super().__init__(
            f"value {value!r} of column {column!r} is not in the global vocabulary; "
            "the metadata round did not cover every node"
        )
        self.column = column
        self.value = value


class ContractError(FedAugmentError, ValueError):
    """A precondition of an operation was violated."""


__all__ = [
    "FedAugmentError",
    "ConfigError",
    "SchemaError",
    "ParseError",
    "EncodingError",
    "ContractError",
]
