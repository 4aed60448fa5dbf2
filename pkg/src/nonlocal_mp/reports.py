"""
Result persistence for nonlocal-mp.

This module writes golden JSON files for regression diffing, CSV tables of
lattice values and rich tables for the console.
"""

import json
import logging
import math
import os
from typing import Any, Iterable, Optional, Sequence

import numpy as np
from rich.table import Table

from .utils import format_float, GOLDEN_DIGITS

logger = logging.getLogger(__name__)


def canonical(value: Any) -> Any:
    """
    Plain Python form of a result: objects with to_dict are expanded, numpy
    scalars and arrays become floats, ints, bools and lists.
    """
    if hasattr(value, "to_dict"):
        return canonical(value.to_dict())
    if isinstance(value, dict):
        return {str(k): canonical(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [canonical(v) for v in value]
    if isinstance(value, np.ndarray):
        return [canonical(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value


def _encode(value: Any, indent: int) -> str:
    pad = "  " * (indent + 1)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(key)}: {_encode(value[key], indent + 1)}" for key in sorted(value)]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(value, list):
        if not value:
            return "[]"
        return "[\n" + ",\n".join(pad + _encode(v, indent + 1) for v in value) + "\n" + "  " * indent + "]"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        # JSON has no nan or inf
        return format_float(value, GOLDEN_DIGITS) if math.isfinite(value) else json.dumps(format_float(value))
    if value is None:
        return "null"
    return json.dumps(str(value))


def dumps_golden(results: Any) -> str:
    """
    Canonical JSON text: sorted keys, two-space indent, floats in scientific
    form with 12 significant digits (1/3 -> 3.33333333333e-1).
    """
    return _encode(canonical(results), 0) + "\n"


class ReportGenerator:
    """Writes command results to the output directory."""

    def __init__(self, output_dir: str):
        """
        Initialize the report generator.

        Args:
            output_dir: Directory results are written to
        """
        self.output_dir = output_dir
        self._ensure_output_directory(output_dir)

    def _ensure_output_directory(self, output_dir: str) -> None:
        """Ensure the output directory exists."""
        os.makedirs(output_dir, exist_ok=True)

    def path_for(self, name: str, extension: str) -> str:
        return os.path.join(self.output_dir, f"{name}.{extension}")

    def emit_golden(self, results: Any, path: Optional[str] = None, name: str = "results") -> str:
        """
        Write results as canonical JSON.

        Args:
            results: Dicts, lists, numbers and objects with to_dict
            path: Target file; output_dir/<name>.json by default
            name: File stem used when no path is given

        Returns:
            str: The written path

        Raises:
            OSError: If the file cannot be written
        """
        path = path or self.path_for(name, "json")
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(dumps_golden(results))
        logger.info("Results saved to %s", path)
        return path

    def write_lattice_csv(self, points: np.ndarray, values: Sequence[float],
                          errors: Optional[Sequence[float]] = None, path: Optional[str] = None,
                          name: str = "values") -> str:
        """
        Write a lattice table with columns x1..xn, value, error_estimate.

        Args:
            points: (N, n) node coordinates
            values: One value per node
            errors: One error estimate per node (zeros when omitted)
            path: Target file; output_dir/<name>.csv by default
            name: File stem used when no path is given

        Returns:
            str: The written path
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        values = np.asarray(values, dtype=float).reshape(-1)
        errors = np.zeros_like(values) if errors is None else np.asarray(errors, dtype=float).reshape(-1)
        if not (points.shape[0] == values.shape[0] == errors.shape[0]):
            raise ValueError("Points, values and error estimates must have the same length")
        header = ",".join([f"x{k + 1}" for k in range(points.shape[1])] + ["value", "error_estimate"])
        path = path or self.path_for(name, "csv")
        table = np.column_stack([points, values, errors])
        np.savetxt(path, table, delimiter=",", header=header, comments="", fmt="%.12e")
        logger.info("Lattice table saved to %s", path)
        return path

    def write_rows_csv(self, header: Sequence[str], rows: Iterable[Sequence[Any]], path: Optional[str] = None,
                       name: str = "rows") -> str:
        """Write arbitrary rows (for example a jump log) as CSV."""
        path = path or self.path_for(name, "csv")
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(",".join(header) + "\n")
            for row in rows:
                f.write(",".join(_csv_cell(cell) for cell in row) + "\n")
        logger.info("Table saved to %s", path)
        return path


def _csv_cell(cell: Any) -> str:
    if isinstance(cell, (bool, np.bool_)):
        return "true" if cell else "false"
    if isinstance(cell, (float, np.floating)):
        return format_float(cell)
    if isinstance(cell, (tuple, list, np.ndarray)):
        return " ".join(_csv_cell(c) for c in np.atleast_1d(cell))
    return str(cell)


def summary_table(title: str, results: dict) -> Table:
    """Two-column rich table of the scalar entries of a result dict."""
    table = Table(title=title, show_header=True, header_style="bold magenta")
    table.add_column("Quantity", style="cyan", no_wrap=True)
    table.add_column("Value", style="white")
    for key in sorted(results):
        value = results[key]
        if isinstance(value, dict) or (isinstance(value, (list, tuple)) and len(value) > 6):
            continue
        if isinstance(value, (float, np.floating)):
            text = f"{float(value):.6g}"
        else:
            text = str(value)
        table.add_row(key, text)
    return table
