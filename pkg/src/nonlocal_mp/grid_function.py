"""
Lattice functions with a declared far-field model.

A GridFunction samples u on the nodes of a Lattice and describes u beyond the
lattice box by one of three models that admit closed-form tail integrals:
compact support, a constant, or power decay c|x|^(-q).
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .geometry import DomainSpec, Lattice

logger = logging.getLogger(__name__)

FARFIELD_KINDS = ("compact_support", "constant", "power_decay")


@dataclass(frozen=True)
class FarField:
    """
    Behaviour of a function outside its lattice box.

    Attributes:
        kind: compact_support, constant or power_decay
        c: The constant value, or the power-decay amplitude
        q: Decay exponent (power_decay only)
    """
    kind: str = "compact_support"
    c: float = 0.0
    q: float = 0.0

    def __post_init__(self):
        """Validate data after initialization."""
        if self.kind not in FARFIELD_KINDS:
            raise ValueError(f"Unknown far-field model: {self.kind}")
        if not np.isfinite(self.c):
            raise ValueError("Far-field amplitude must be finite")
        if self.kind == "power_decay" and not self.q > 0:
            raise ValueError(f"Power decay exponent must be positive, got {self.q}")

    @classmethod
    def compact(cls) -> "FarField":
        return cls("compact_support")

    @classmethod
    def constant(cls, c: float) -> "FarField":
        return cls("constant", float(c))

    @classmethod
    def power(cls, c: float, q: float) -> "FarField":
        return cls("power_decay", float(c), float(q))

    def coefficients(self) -> Tuple[float, float, float]:
        """(a, b, q) with far value a + b|y|^(-q)."""
        if self.kind == "constant":
            return self.c, 0.0, 0.0
        if self.kind == "power_decay":
            return 0.0, self.c, self.q
        return 0.0, 0.0, 0.0

    def value(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        if self.kind == "constant":
            return np.full(pts.shape[0], self.c)
        if self.kind == "power_decay":
            radius = np.linalg.norm(pts, axis=1)
            with np.errstate(divide="ignore"):
                return self.c * np.where(radius > 0, radius, np.inf) ** (-self.q)
        return np.zeros(pts.shape[0])

    def infimum(self) -> float:
        """Infimum of the model over the exterior of a large ball."""
        if self.kind == "constant":
            return self.c
        if self.kind == "power_decay":
            # c > 0 approaches 0 from above; c < 0 is unbounded below near the box
            return 0.0 if self.c >= 0 else -np.inf
        return 0.0

    def truncated(self, sign: str) -> "FarField":
        """Model of u+ (sign="plus") or u- (sign="minus")."""
        if sign not in ("plus", "minus"):
            raise ValueError(f"Sign must be plus or minus, got {sign}")
        if self.kind == "compact_support":
            return self
        c = max(self.c, 0.0) if sign == "plus" else max(-self.c, 0.0)
        return FarField(self.kind, c, self.q)

    def scaled(self, factor: float) -> "FarField":
        return FarField(self.kind, self.c * factor, self.q)

    def plus(self, other: "FarField") -> "FarField":
        """Model of a sum."""
        if self.kind == "compact_support":
            return other
        if other.kind == "compact_support":
            return self
        if self.kind == other.kind == "constant":
            return FarField.constant(self.c + other.c)
        if self.kind == other.kind == "power_decay":
            if self.q == other.q:
                return FarField.power(self.c + other.c, self.q)
            # the slower decay dominates; the faster one is dropped from the tail
            return self if self.q < other.q else other
        raise ValueError("Cannot add a constant far field to a power-decay far field")

    def times(self, other: "FarField") -> "FarField":
        """Model of a pointwise product."""
        if self.kind == "compact_support" or other.kind == "compact_support":
            return FarField.compact()
        if self.kind == other.kind == "constant":
            return FarField.constant(self.c * other.c)
        if self.kind == other.kind == "power_decay":
            return FarField.power(self.c * other.c, self.q + other.q)
        amplitude = self.c * other.c
        q = self.q if self.kind == "power_decay" else other.q
        return FarField.power(amplitude, q)


@dataclass(frozen=True)
class FormValue:
    """A computed quadrature value and its refinement-based error estimate."""
    value: float
    error_estimate: float = 0.0

    def __post_init__(self):
        """Validate data after initialization."""
        if not self.error_estimate >= 0:
            raise ValueError(f"Error estimate must be nonnegative, got {self.error_estimate}")

    def to_dict(self):
        return {"value": float(self.value), "error_estimate": float(self.error_estimate)}


class GridFunction:
    """
    A function sampled on a lattice together with its far-field model.

    Args:
        lattice: The lattice the values live on
        values: One finite value per lattice node
        farfield: Model used outside the lattice box
    """

    def __init__(self, lattice: Lattice, values: np.ndarray, farfield: Optional[FarField] = None):
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.shape[0] != lattice.size:
            raise ValueError(f"Expected {lattice.size} values, got {values.shape[0]}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Grid function values must be finite")
        self.lattice = lattice
        self.values = values
        self.farfield = farfield if farfield is not None else FarField.compact()
        self._interpolator = None

    @classmethod
    def from_callable(cls, lattice: Lattice, func: Callable[[np.ndarray], np.ndarray],
                      farfield: Optional[FarField] = None) -> "GridFunction":
        """Sample func, called on the (N, n) array of lattice points."""
        values = np.asarray(func(lattice.points), dtype=float).reshape(-1)
        return cls(lattice, values, farfield)

    @classmethod
    def constant(cls, lattice: Lattice, c: float) -> "GridFunction":
        return cls(lattice, np.full(lattice.size, float(c)), FarField.constant(c))

    @classmethod
    def zeros(cls, lattice: Lattice) -> "GridFunction":
        return cls(lattice, np.zeros(lattice.size))

    @classmethod
    def indicator(cls, lattice: Lattice, domain: DomainSpec) -> "GridFunction":
        """
        Indicator of a region, sampled as cell fractions.

        Nodes on the boundary of the region carry the fraction of their cell
        inside it, so integrals of the indicator are second-order accurate.
        """
        values = lattice.weights(domain) / np.maximum(lattice.box_weights(), 1e-300)
        values = np.clip(values, 0.0, 1.0)
        farfield = FarField.constant(1.0) if domain.is_cobounded else FarField.compact()
        return cls(lattice, values, farfield)

    @classmethod
    def bump(cls, lattice: Lattice, center, width: float, height: float = 1.0) -> "GridFunction":
        """
        Smooth bump height * exp(1 - 1/(1 - t^2)), t = |x - center|/width, zero for t >= 1.
        """
        if not width > 0:
            raise ValueError(f"Bump width must be positive, got {width}")
        center = np.asarray(center, dtype=float).reshape(-1)
        t2 = np.sum((lattice.points - center) ** 2, axis=1) / width ** 2
        values = np.zeros(lattice.size)
        inside = t2 < 1.0
        values[inside] = height * np.exp(1.0 - 1.0 / (1.0 - t2[inside]))
        return cls(lattice, values)

    @property
    def dim(self) -> int:
        return self.lattice.dim

    def with_values(self, values: np.ndarray, farfield: Optional[FarField] = None) -> "GridFunction":
        return GridFunction(self.lattice, values, self.farfield if farfield is None else farfield)

    def _grid_interpolator(self) -> RegularGridInterpolator:
        if self._interpolator is None:
            axes = tuple(self.lattice.lo[k] + self.lattice.h * np.arange(m)
                         for k, m in enumerate(self.lattice.shape))
            grid = self.values.reshape(self.lattice.shape)
            self._interpolator = RegularGridInterpolator(axes, grid, method="linear", bounds_error=False)
        return self._interpolator

    def interpolate(self, points: np.ndarray) -> np.ndarray:
        """Multilinear interpolation inside the box, far-field model outside."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise ValueError(f"Dimension mismatch: points have {pts.shape[1]} coordinates, expected {self.dim}")
        inside = self.lattice.in_box(pts)
        result = self.farfield.value(pts)
        if np.any(inside):
            if min(self.lattice.shape) < 2:
                result[inside] = self.values[self.lattice.indices_of(pts[inside])]
            else:
                result[inside] = self._grid_interpolator()(pts[inside])
        return result

    def __call__(self, x) -> float:
        point = np.asarray(x, dtype=float)
        index = self.lattice.try_index(point)
        if index is not None:
            return float(self.values[index])
        return float(self.interpolate(point[None, :])[0])

    def coarsen(self) -> "GridFunction":
        """Restriction to every other node."""
        return GridFunction(self.lattice.coarsen(), self.values[self.lattice.coarse_indices()], self.farfield)

    def positive_part(self) -> "GridFunction":
        return GridFunction(self.lattice, np.maximum(self.values, 0.0), self.farfield.truncated("plus"))

    def negative_part(self) -> "GridFunction":
        return GridFunction(self.lattice, np.maximum(-self.values, 0.0), self.farfield.truncated("minus"))

    def _check_compatible(self, other: "GridFunction"):
        if other.lattice is not self.lattice and (
                other.lattice.shape != self.lattice.shape or other.lattice.h != self.lattice.h
                or not np.allclose(other.lattice.lo, self.lattice.lo)):
            raise ValueError("Grid functions live on different lattices")

    def __add__(self, other):
        if isinstance(other, GridFunction):
            self._check_compatible(other)
            return GridFunction(self.lattice, self.values + other.values, self.farfield.plus(other.farfield))
        return GridFunction(self.lattice, self.values + float(other),
                            self.farfield.plus(FarField.constant(float(other))))

    __radd__ = __add__

    def __neg__(self):
        return GridFunction(self.lattice, -self.values, self.farfield.scaled(-1.0))

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, GridFunction):
            self._check_compatible(other)
            return GridFunction(self.lattice, self.values * other.values, self.farfield.times(other.farfield))
        factor = float(other)
        return GridFunction(self.lattice, self.values * factor, self.farfield.scaled(factor))

    __rmul__ = __mul__

    def __repr__(self):
        return (f"GridFunction(size={self.lattice.size}, h={self.lattice.h:g}, "
                f"farfield={self.farfield.kind})")
