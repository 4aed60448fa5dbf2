"""
nonlocal-mp: numerical checks of maximum principles for nonlocal operators
with general interaction sets.
"""

__version__ = "0.1.0"

from .errors import ConfigError, NumericalError, PropertyViolation, exit_code_for
from .geometry import (DomainSpec, InteractionSet, Lattice, ball, box, build_grid, complement, difference,
                       dirichlet_preset, full_space, restricted_preset, semirestricted_preset, union)
from .grid_function import FarField, FormValue, GridFunction
from .quadrature import FracParams, QuadratureScheme, kernel_constant

__all__ = [
    "__version__",
    "ConfigError", "NumericalError", "PropertyViolation", "exit_code_for",
    "DomainSpec", "InteractionSet", "Lattice", "ball", "box", "build_grid", "complement", "difference",
    "dirichlet_preset", "full_space", "restricted_preset", "semirestricted_preset", "union",
    "FarField", "FormValue", "GridFunction",
    "FracParams", "QuadratureScheme", "kernel_constant",
]
