"""Error types and input validation utilities.

Every failure the library reports is an ``IHCEError`` subclass so the CLI and the
inspector app can turn it into a one-line message instead of a traceback.
"""

from typing import Iterable, Sequence, Tuple

import numpy as np


class IHCEError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(IHCEError):
    """Raised when a function is called outside its documented contract."""


class DimensionError(ContractError):
    """Raised when operand shapes are incompatible."""


class ConfigurationError(IHCEError):
    """Raised for invalid configuration values or inconsistent settings."""


class RejectedCodeError(IHCEError):
    """Raised when a diagnosis code cannot be parsed or is unknown.

    Attributes:
        raw: The offending raw value
    """

    def __init__(self, raw: str, reason: str = "unparseable code") -> None:
        self.raw = raw
        super().__init__(f"Rejected code {raw!r}: {reason}")


class IngestionError(IHCEError):
    """Raised when corpus or sidecar files cannot be read."""


class UndefinedMetricError(IHCEError):
    """Raised when a metric has no defined value for the given inputs."""


class NonFiniteLossError(IHCEError):
    """Raised when the training loss becomes NaN or infinite."""


def validate_same_shape(name: str, first: Tuple[int, ...], second: Tuple[int, ...]) -> None:
    """Validate that two shapes are identical.

    Args:
        name: Operation name used in the error message
        first: Shape of the first operand
        second: Shape of the second operand

    Raises:
        DimensionError: If the shapes differ

    Example:
        >>> validate_same_shape("add", (2, 3), (2, 3))
        >>> validate_same_shape("add", (2, 3), (3, 2))
        Traceback (most recent call last):
        ...
        DimensionError: add: shape (2, 3) does not match shape (3, 2)
    """
    if tuple(first) != tuple(second):
        raise DimensionError(f"{name}: shape {tuple(first)} does not match shape {tuple(second)}")


def validate_kernel_widths(widths: Sequence[int]) -> None:
    """Validate convolution kernel widths.

    Widths must be positive and odd so that "same" padding of ``floor(s/2)``
    rows keeps the sequence length unchanged.

    Raises:
        ConfigurationError: If the list is empty or any width is even or non-positive
    """
    if len(widths) == 0:
        raise ConfigurationError("At least one kernel width is required")
    for width in widths:
        if width < 1:
            raise ConfigurationError(f"Kernel width must be positive, got {width}")
        if width % 2 == 0:
            raise ConfigurationError(
                f"Kernel width must be odd, got {width}. "
                "Even widths change the output length under same padding"
            )


def validate_positive(name: str, value: float) -> None:
    """Validate that a numeric setting is strictly positive.

    Raises:
        ConfigurationError: If value is not > 0
    """
    if not value > 0:
        raise ConfigurationError(f"{name} must be positive, got {value}")


def validate_probability(name: str, value: float, *, inclusive_low: bool = True) -> None:
    """Validate that a setting lies in [0, 1) (or (0, 1) when inclusive_low is False).

    Raises:
        ConfigurationError: If value is outside the interval
    """
    low_ok = value >= 0 if inclusive_low else value > 0
    if not (low_ok and value < 1):
        bracket = "[0, 1)" if inclusive_low else "(0, 1)"
        raise ConfigurationError(f"{name} must be in {bracket}, got {value}")


def validate_finite(name: str, values: np.ndarray) -> None:
    """Validate that an array holds only finite values.

    Raises:
        ContractError: If any entry is NaN or infinite
    """
    if not np.all(np.isfinite(values)):
        raise ContractError(f"{name} contains non-finite values")


def validate_disjoint_ids(first: Iterable[str], second: Iterable[str]) -> None:
    """Validate that two record id collections do not overlap.

    Raises:
        ConfigurationError: If any id appears in both collections
    """
    overlap = set(first) & set(second)
    if overlap:
        sample = ", ".join(sorted(overlap)[:5])
        raise ConfigurationError(
            f"Train and validation splits share {len(overlap)} record(s): {sample}"
        )
