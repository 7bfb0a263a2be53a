"""Input validation and the package's exception hierarchy.

Validators return the checked value (converted to a numpy array where relevant) or raise.
"""

from typing import Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "NsbfmError",
    "DataValidationError",
    "PanelParseError",
    "LinkDomainError",
    "ConfigError",
    "NumericalError",
    "NormalizationError",
    "validate_binary",
    "validate_finite",
    "validate_shape",
    "validate_level",
    "validate_positive_int",
    "is_binary",
]


class NsbfmError(Exception):
    """Base class for errors raised by this package."""


class DataValidationError(NsbfmError, ValueError):
    """Raised when input data is malformed or has inconsistent dimensions."""


class PanelParseError(DataValidationError):
    """Raised when a panel file cannot be parsed.

    Row and column are 1-based, as a spreadsheet would show them.
    """

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        row: Optional[int] = None,
        column: Optional[int] = None,
    ):
        self.path = path
        self.row = row
        self.column = column
        location = []
        if path is not None:
            location.append(str(path))
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"col {column}")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}")


class LinkDomainError(DataValidationError):
    """Raised when a link kernel is evaluated at a non-finite index."""


class ConfigError(NsbfmError, ValueError):
    """Raised for invalid configuration values or command-line usage."""


class NumericalError(NsbfmError, ArithmeticError):
    """Raised when a computation cannot proceed numerically."""


class NormalizationError(NumericalError):
    """Raised when the factor path is rank deficient at normalization."""


def is_binary(values: np.ndarray) -> bool:
    """Check that every entry is exactly 0 or 1."""
    arr = np.asarray(values)
    return bool(np.all((arr == 0) | (arr == 1)))


def validate_binary(values, name: str = "y") -> np.ndarray:
    """Validate a 0/1 array and return it as int8.

    Raises:
        DataValidationError: If any entry is not exactly 0 or 1.
    """
    arr = np.asarray(values)
    if arr.size and not is_binary(arr):
        bad = np.argwhere(~((arr == 0) | (arr == 1)))[0]
        raise DataValidationError(
            f"{name} must be binary; found {arr[tuple(bad)]!r} "
            f"at index {tuple(int(b) for b in bad)}"
        )
    return arr.astype(np.int8)


def validate_finite(values, name: str) -> np.ndarray:
    """Validate that an array has no NaN or infinite entries.

    Raises:
        DataValidationError: If a non-finite value is present.
    """
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise DataValidationError(
            f"{name} contains a non-finite value at index {tuple(int(b) for b in bad)}"
        )
    return arr


def validate_shape(values: np.ndarray, shape: Sequence[Optional[int]], name: str) -> np.ndarray:
    """Validate an array's shape; None in `shape` matches any extent.

    Raises:
        DataValidationError: On a rank or extent mismatch.
    """
    arr = np.asarray(values)
    expected: Tuple[Optional[int], ...] = tuple(shape)
    if arr.ndim != len(expected) or any(
        e is not None and e != a for e, a in zip(expected, arr.shape)
    ):
        shown = tuple("*" if e is None else e for e in expected)
        raise DataValidationError(f"{name} has shape {arr.shape}, expected {shown}")
    return arr


def validate_level(level: float, low: float = 0.0, name: str = "level") -> float:
    """Validate a probability level in the open interval (low, 1).

    Raises:
        ConfigError: If the level is out of range.
    """
    level = float(level)
    if not (low < level < 1.0):
        raise ConfigError(f"{name} must lie in ({low}, 1), got {level}")
    return level


def validate_positive_int(value: int, name: str, minimum: int = 1) -> int:
    """Validate an integer count with a lower bound.

    Raises:
        ConfigError: If the value is below `minimum`.
    """
    value = int(value)
    if value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return value
