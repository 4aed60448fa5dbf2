"""
Utility functions for nonlocal-mp.

This module contains helper functions for validation, parsing of config
values, canonical number formatting and other common operations used
throughout the package.
"""

import math
import re
from typing import List, Optional, Sequence, Union

import numpy as np


def validate_fraction_order(s: Union[str, float]) -> bool:
    """
    Validate if s is a fractional order in the open interval (0, 1).

    Args:
        s: Order to validate

    Returns:
        bool: True if 0 < s < 1, False otherwise
    """
    try:
        value = float(s)
    except (ValueError, TypeError):
        return False
    return 0.0 < value < 1.0


def parse_float(number_input: str) -> float:
    """
    Parse a number string and return a float value.

    Args:
        number_input: Number string (e.g., "0.5", "1e-3", "-2")

    Returns:
        float: Parsed value

    Raises:
        ValueError: If the string cannot be parsed
    """
    if number_input is None or not str(number_input).strip():
        raise ValueError("Number cannot be empty")
    try:
        return float(str(number_input).strip())
    except ValueError:
        raise ValueError(f"Invalid number format: {number_input}")


def parse_int(int_input: str) -> int:
    """
    Parse an integer string and return an int value.

    Args:
        int_input: Integer string (e.g., "1", "20")

    Returns:
        int: Parsed value

    Raises:
        ValueError: If the string cannot be parsed
    """
    if int_input is None or not str(int_input).strip():
        raise ValueError("Integer cannot be empty")
    try:
        return int(str(int_input).strip())
    except ValueError:
        raise ValueError(f"Invalid integer format: {int_input}")


def parse_bool(bool_input: str) -> bool:
    """
    Parse a yes/no style string.

    Raises:
        ValueError: If the string is not a recognised boolean
    """
    cleaned = str(bool_input).strip().lower()
    if cleaned in ("1", "true", "yes", "on"):
        return True
    if cleaned in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"Invalid boolean format: {bool_input}")


def parse_point(point_input: Union[str, Sequence[float]], dim: Optional[int] = None) -> np.ndarray:
    """
    Parse a point given as "x1, x2, ..." (or a sequence) into an array.

    Args:
        point_input: Comma or whitespace separated coordinates
        dim: Expected dimension, checked when given

    Returns:
        np.ndarray: Coordinates as a float array

    Raises:
        ValueError: If the point cannot be parsed or has the wrong dimension
    """
    if isinstance(point_input, str):
        parts = [p for p in re.split(r"[,\s]+", point_input.strip()) if p]
        if not parts:
            raise ValueError("Point cannot be empty")
        try:
            coords = [float(p) for p in parts]
        except ValueError:
            raise ValueError(f"Invalid point format: {point_input}")
    else:
        try:
            coords = [float(c) for c in np.atleast_1d(point_input)]
        except (TypeError, ValueError):
            raise ValueError(f"Invalid point format: {point_input}")
    point = np.asarray(coords, dtype=float)
    if dim is not None and point.shape[0] != dim:
        raise ValueError(f"Point {point_input} has dimension {point.shape[0]}, expected {dim}")
    return point


def parse_name_list(names_input: str) -> List[str]:
    """Split "a, b, c" into ["a", "b", "c"]."""
    return [name.strip() for name in str(names_input).split(",") if name.strip()]


def format_float(value: float, digits: int = 12) -> str:
    """
    Format a float in the canonical scientific form used by golden files.

    The mantissa carries `digits` significant digits and the exponent has no
    sign padding or leading zeros.

    Args:
        value: Number to format
        digits: Significant digits

    Returns:
        str: Formatted number (e.g., 1/3 -> "3.33333333333e-1")
    """
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    mantissa, exponent = f"{value:.{digits - 1}e}".split("e")
    return f"{mantissa}e{int(exponent)}"


def log_log_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """
    Least-squares slope of log(ys) against log(xs).

    Raises:
        ValueError: If fewer than two points or any value is not positive
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size < 2 or x.size != y.size:
        raise ValueError("Slope fit needs at least two matching points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("Slope fit needs positive values")
    slope, _ = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope)


GOLDEN_DIGITS = 12
"""Significant digits written to golden JSON files."""
