"""
Kernel constants, far-field tails and singular integrals against |x-y|^-(n+2s).

All integrals are midpoint sums over lattice cells weighted by the fraction of
each cell inside the integration region. Near a singular point the lattice sum
is corrected with exact cube moments of |z|^(2-n-2s); outside the lattice box
co-bounded regions are completed with the closed-form power-law tail.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy import integrate, special

from .errors import NumericalError
from .geometry import DomainSpec, Lattice, ball, complement
from .grid_function import FarField, GridFunction
from .utils import validate_fraction_order

logger = logging.getLogger(__name__)

CORRECTION_MODES = ("symmetric_pair", "taylor", "none")


def _check_order(n: int, s: float):
    if int(n) != n or n < 1:
        raise ValueError(f"Dimension n must be a positive integer, got {n}")
    if not validate_fraction_order(s):
        raise ValueError(f"s must lie in (0, 1), got {s}")


def kernel_constant(n: int, s: float) -> float:
    """
    Normalisation constant C_{n,s} of the fractional Laplacian.

    Args:
        n: Dimension
        s: Order in (0, 1)

    Returns:
        float: s 2^(2s) Gamma(n/2 + s) / (pi^(n/2) Gamma(1 - s))

    Raises:
        ValueError: If s is outside (0, 1) or n is not a positive integer
    """
    _check_order(n, s)
    return float(s * 2.0 ** (2 * s) * special.gamma(n / 2 + s) / (math.pi ** (n / 2) * special.gamma(1 - s)))


def bar_p_exponent(n: int, s: float) -> float:
    """
    Sobolev exponent p-bar > 2: 4 when n = 1 <= 2s, else 2n/(n - 2s).
    """
    _check_order(n, s)
    if n == 1 and 2 * s >= 1:
        return 4.0
    return 2.0 * n / (n - 2 * s)


@dataclass(frozen=True)
class FracParams:
    """
    Dimension and order with the derived constants used throughout.

    Attributes:
        n: Dimension
        s: Order in (0, 1)
        c_ns: Kernel constant C_{n,s}
        pbar: Sobolev exponent
        beta: pbar/2 - 1
        eta: 2^((pbar/4)(n + 2s + 1) + beta)
    """
    n: int
    s: float
    c_ns: float = field(init=False)
    pbar: float = field(init=False)
    beta: float = field(init=False)
    eta: float = field(init=False)

    def __post_init__(self):
        """Validate data after initialization."""
        _check_order(self.n, self.s)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "s", float(self.s))
        pbar = bar_p_exponent(self.n, self.s)
        beta = pbar / 2 - 1
        object.__setattr__(self, "c_ns", kernel_constant(self.n, self.s))
        object.__setattr__(self, "pbar", pbar)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "eta", 2.0 ** ((pbar / 4) * (self.n + 2 * self.s + 1) + beta))

    @property
    def exponent(self) -> float:
        """Kernel exponent n + 2s."""
        return self.n + 2 * self.s

    def to_dict(self):
        return {"n": self.n, "s": self.s, "c_ns": self.c_ns, "pbar": self.pbar,
                "beta": self.beta, "eta": self.eta}


@dataclass(frozen=True)
class QuadratureScheme:
    """
    Singular-integral settings.

    Attributes:
        delta: Radius of the near field around a singular point (None means 2h)
        truncation_radius: Nodes farther than this from x use the far-field model
        refinement_levels: Number of coarsenings used for error estimates
        correction_mode: symmetric_pair, taylor or none
    """
    delta: Optional[float] = None
    truncation_radius: float = math.inf
    refinement_levels: int = 1
    correction_mode: str = "symmetric_pair"

    def __post_init__(self):
        """Validate data after initialization."""
        if self.delta is not None and not self.delta > 0:
            raise ValueError(f"Singular cutoff delta must be positive, got {self.delta}")
        if not self.truncation_radius > (self.delta or 0.0):
            raise ValueError("Truncation radius must exceed the singular cutoff")
        if int(self.refinement_levels) != self.refinement_levels or self.refinement_levels < 1:
            raise ValueError(f"Refinement levels must be at least 1, got {self.refinement_levels}")
        if self.correction_mode not in CORRECTION_MODES:
            raise ValueError(f"Unknown correction mode: {self.correction_mode}")

    def cutoff(self, h: float) -> float:
        return 2.0 * h if self.delta is None else self.delta

    def near_steps(self, h: float) -> int:
        """Half-width of the near-field cube in cells."""
        return max(1, int(round(self.cutoff(h) / h)))


def riesz_kernel(x, y, p: FracParams, coeff: Optional[Callable] = None) -> float:
    """
    C_{n,s} A(x, y) |x - y|^-(n+2s), with A = 1 when no coefficient is given.

    Raises:
        ValueError: If x = y or the dimensions differ from p.n
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape[0] != p.n or y.shape[0] != p.n:
        raise ValueError(f"Points must have dimension {p.n}")
    distance = float(np.linalg.norm(x - y))
    if distance == 0.0:
        raise ValueError("Kernel is singular at x = y")
    a = 1.0 if coeff is None else float(coeff(x, y))
    return p.c_ns * a * distance ** (-p.exponent)


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere in R^n."""
    return 2.0 * math.pi ** (n / 2) / special.gamma(n / 2)


def farfield_powerlaw_integral(x0, r: float, p_exp: float, n: int) -> float:
    """
    Integral of |y - x0|^-p_exp over |y - x0| > r.

    Returns:
        float: sphere_area(n) r^(n - p_exp) / (p_exp - n)

    Raises:
        ValueError: If r is not positive
        NumericalError: If p_exp <= n (the tail diverges)
    """
    if np.atleast_1d(x0).shape[0] != n:
        raise ValueError(f"Center must have dimension {n}")
    if not r > 0:
        raise ValueError(f"Radius must be positive, got {r}")
    if p_exp <= n:
        raise NumericalError(f"Power-law tail diverges for exponent {p_exp} <= {n}")
    return sphere_area(n) * r ** (n - p_exp) / (p_exp - n)


@lru_cache(maxsize=64)
def cube_moment(n: int, gamma: float) -> float:
    """
    Integral of |z|^gamma over the cube [-1, 1]^n (gamma > -n).

    Splitting the cube into 2n pyramids over its faces reduces it to
    2n/(gamma + n) times the integral of (1 + |t|^2)^(gamma/2) over a face.
    """
    if gamma <= -n:
        raise NumericalError(f"Cube moment diverges for exponent {gamma}")
    factor = 2.0 * n / (gamma + n)
    if n == 1:
        return factor
    if n == 2:
        face, _ = integrate.quad(lambda t: (1 + t * t) ** (gamma / 2), -1, 1, epsabs=1e-14, epsrel=1e-13)
        return factor * face
    if n == 3:
        face, _ = integrate.dblquad(lambda t2, t1: (1 + t1 * t1 + t2 * t2) ** (gamma / 2), -1, 1, -1, 1,
                                    epsabs=1e-13, epsrel=1e-12)
        return factor * face
    raise ValueError(f"Cube moments are available for n <= 3, got {n}")


@dataclass
class KernelRow:
    """
    Quadrature weights for y -> integral over a region of f(y)|x - y|^-(n+2s) dy.

    The integral of f is weights . f plus tau times the Laplacian of f at x,
    grad . (gradient of f at x), and the far-field terms outside the box.
    The constant C_{n,s} is not included.
    """
    lattice: Lattice
    x: np.ndarray
    exponent: float
    index: Optional[int]
    weights: np.ndarray
    tau: float = 0.0
    grad: np.ndarray = None
    mode: str = "none"
    outer: bool = False
    far_mask: Optional[np.ndarray] = None
    _outer_cache: dict = field(default_factory=dict, repr=False)

    def outer_power(self, q: float = 0.0) -> float:
        """Kernel mass outside the lattice box against |y - x|^-q."""
        if not self.outer:
            return 0.0
        if q not in self._outer_cache:
            self._outer_cache[q] = box_exterior_integral(self.lattice, self.x, self.exponent + q)
        return self._outer_cache[q]

    @property
    def outer_mass(self) -> float:
        return self.outer_power(0.0)

    def _stencil(self, f: np.ndarray) -> Tuple[float, np.ndarray]:
        """Second-difference Laplacian and centered gradient of f at x."""
        h = self.lattice.h
        center = f[self.index]
        laplacian = 0.0
        gradient = np.zeros(self.lattice.dim)
        for axis in range(self.lattice.dim):
            forward = self.lattice.neighbor(self.index, axis, 1)
            backward = self.lattice.neighbor(self.index, axis, -1)
            if forward is None or backward is None:
                raise ValueError("Point is too close to the lattice edge for the near-field correction")
            laplacian += (f[forward] + f[backward] - 2.0 * center) / h ** 2
            gradient[axis] = (f[forward] - f[backward]) / (2.0 * h)
        return laplacian, gradient

    def apply(self, f_values: np.ndarray, far: Optional[FarField] = None) -> float:
        """Integral of f over the region (without C_{n,s})."""
        a, b, q = (far or FarField.compact()).coefficients()
        return self._apply(np.asarray(f_values, dtype=float), a, b, q)

    def _apply(self, f: np.ndarray, a: float, b: float, q: float) -> float:
        # far value of f is a + b|y|^-q
        if self.far_mask is not None and np.any(self.far_mask):
            radius = np.linalg.norm(self.lattice.points[self.far_mask], axis=1)
            f = f.copy()
            f[self.far_mask] = a + (b * radius ** (-q) if b != 0.0 else 0.0)
        total = float(self.weights @ f)
        if self.index is not None and (self.tau != 0.0 or np.any(self.grad)):
            laplacian, gradient = self._stencil(f)
            total += self.tau * laplacian + float(self.grad @ gradient)
        if self.outer:
            if a != 0.0:
                total += a * self.outer_mass
            if b != 0.0:
                total += b * self.outer_power(q)
        return total

    def linear_form(self, far: Optional[FarField] = None) -> Tuple[np.ndarray, float]:
        """
        Coefficients c and constant k with operator_value(u) = c . u + k for
        every u carrying the far-field model `far`.
        """
        if self.index is None:
            raise ValueError("Operator rows need x on the lattice")
        a, b, q = (far or FarField.compact()).coefficients()
        coef = -self.weights.copy()
        constant = 0.0
        if self.far_mask is not None and np.any(self.far_mask):
            radius = np.linalg.norm(self.lattice.points[self.far_mask], axis=1)
            constant -= float(self.weights[self.far_mask] @ (a + (b * radius ** (-q) if b != 0.0 else 0.0)))
            coef[self.far_mask] = 0.0
        coef[self.index] += float(np.sum(self.weights))
        h = self.lattice.h
        if self.tau != 0.0 or np.any(self.grad):
            for axis in range(self.lattice.dim):
                forward = self.lattice.neighbor(self.index, axis, 1)
                backward = self.lattice.neighbor(self.index, axis, -1)
                if forward is None or backward is None:
                    raise ValueError("Point is too close to the lattice edge for the near-field correction")
                coef[forward] -= self.tau / h ** 2 + self.grad[axis] / (2 * h)
                coef[backward] -= self.tau / h ** 2 - self.grad[axis] / (2 * h)
                coef[self.index] += 2 * self.tau / h ** 2
        if self.outer:
            coef[self.index] += self.outer_mass
            constant -= a * self.outer_mass + (b * self.outer_power(q) if b != 0.0 else 0.0)
        return coef, constant

    def operator_value(self, u: GridFunction) -> float:
        """P.V. integral of u(x) - u(y) over the region (without C_{n,s})."""
        if self.index is None:
            raise ValueError("Operator rows need x on the lattice")
        center = u.values[self.index]
        a, b, q = u.farfield.coefficients()
        return self._apply(center - u.values, center - a, -b, q)


def kernel_row(lattice: Lattice, x, region: DomainSpec, p: FracParams,
               scheme: Optional[QuadratureScheme] = None,
               coeff: Optional[Callable] = None) -> KernelRow:
    """
    Build the quadrature row for integrals over region seen from x.

    When x lies in the region the integral is singular and x must be a lattice
    node; the near field then uses the symmetric pairing of y and 2x - y if the
    whole near cube lies in the region, and a second-order Taylor correction
    otherwise.

    Raises:
        ValueError: If the region is not resolved by the lattice, or x is a
            singular point off the lattice
    """
    scheme = scheme or QuadratureScheme()
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != lattice.dim or region.dim != lattice.dim:
        raise ValueError("Dimension mismatch between point, region and lattice")
    if not lattice.covers(region):
        raise ValueError("Lattice box does not cover the finite part of the region")
    h = lattice.h
    n = lattice.dim
    exponent = p.exponent
    cell = lattice.cell_volume
    z = lattice.points - x
    dist = np.linalg.norm(z, axis=1)
    frac = lattice.weights(region)
    coefficient = np.ones(lattice.size) if coeff is None else np.array([coeff(x, y) for y in lattice.points])
    index = lattice.try_index(x)
    singular = region.contains(x)
    if singular and index is None:
        raise ValueError(f"Singular integral at {tuple(x)} needs x on the lattice")
    with np.errstate(divide="ignore"):
        kern = np.where(dist > 0, dist, np.inf) ** (-exponent)
    if np.any((frac > 0) & (dist == 0) & ~singular):
        raise ValueError("Integration region touches the evaluation point")
    weights = frac * coefficient * kern * cell
    tau = 0.0
    grad = np.zeros(n)
    mode = "none"
    if singular:
        weights[index] = 0.0
        m = scheme.near_steps(h)
        near = np.max(np.abs(z), axis=1) <= m * h * (1 + 1e-9)
        near[index] = False
        gamma = 2.0 - exponent
        moment = cube_moment(n, gamma)
        a_center = coefficient[index]
        complete = np.sum(near) == (2 * m + 1) ** n - 1 and np.all(frac[near] == 1.0)
        if scheme.correction_mode == "symmetric_pair" and complete:
            mode = "symmetric_pair"
            exact = ((m + 0.5) * h) ** (2 - 2 * p.s) * moment
            discrete = np.sum(dist[near] ** gamma) * cell
            tau = a_center * (exact - discrete) / (2 * n)
        elif scheme.correction_mode in ("symmetric_pair", "taylor"):
            if scheme.correction_mode == "symmetric_pair":
                logger.debug("Near field at %s leaves the region, using Taylor correction", tuple(x))
            mode = "taylor"
            weights[near] = 0.0
            center_moment = frac[index] * (h / 2) ** (2 - 2 * p.s) * moment
            ring = np.sum(frac[near] * dist[near] ** gamma) * cell
            tau = a_center * (center_moment + ring) / (2 * n)
            grad = a_center * np.sum((frac[near] * kern[near])[:, None] * z[near], axis=0) * cell
        else:
            weights[near] = 0.0
    far_mask = None
    if math.isfinite(scheme.truncation_radius):
        far_mask = dist > scheme.truncation_radius
    row = KernelRow(lattice=lattice, x=x, exponent=exponent, index=index, weights=weights,
                    tau=tau, grad=grad, mode=mode, far_mask=far_mask)
    if region.is_cobounded:
        if not lattice.inscribed_distance(x) > 0:
            raise ValueError(f"Point {tuple(x)} is not inside the lattice box")
        row.outer = True
    return row


def box_exterior_integral(lattice: Lattice, x, exponent: float) -> float:
    """
    Integral of |y - x|^-exponent over the exterior of the lattice box.

    Exact in one dimension. Otherwise the closed-form tail beyond the largest
    ball around x inside the box, minus the lattice sum over the part of that
    tail lying in the box.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    lo, hi = lattice.bounding_box
    if exponent <= lattice.dim:
        raise NumericalError(f"Power-law tail diverges for exponent {exponent} <= {lattice.dim}")
    if lattice.dim == 1:
        left, right = x[0] - lo[0], hi[0] - x[0]
        if not (left > 0 and right > 0):
            raise ValueError(f"Point {tuple(x)} is not inside the lattice box")
        return (left ** (1 - exponent) + right ** (1 - exponent)) / (exponent - 1)
    radius = lattice.inscribed_distance(x)
    if not radius > 0:
        raise ValueError(f"Point {tuple(x)} is not inside the lattice box")
    exact = farfield_powerlaw_integral(x, radius, exponent, lattice.dim)
    shell = lattice.weights(complement(ball(x, radius)), cache=False)
    mask = shell > 0
    dist = np.linalg.norm(lattice.points[mask] - x, axis=1)
    return exact - float(np.sum(shell[mask] * dist ** (-exponent))) * lattice.cell_volume


def singular_integral(f: Union[GridFunction, Callable], x, region: DomainSpec, p: FracParams,
                      q: Optional[QuadratureScheme] = None, lattice: Optional[Lattice] = None,
                      farfield: Optional[FarField] = None) -> float:
    """
    Integral over region of f(y)|x - y|^-(n+2s) dy, without the constant C_{n,s}.

    Args:
        f: A GridFunction, or a callable on (N, n) point arrays
        x: Evaluation point
        region: Integration region
        p: Fractional parameters
        q: Quadrature scheme
        lattice: Lattice for callables (GridFunctions bring their own)
        farfield: Far-field model of f outside the lattice box

    Raises:
        ValueError: If f does not vanish at a singular x, or no lattice is available
    """
    if isinstance(f, GridFunction):
        lattice = f.lattice
        values = f.values
        farfield = f.farfield if farfield is None else farfield
    else:
        if lattice is None:
            raise ValueError("A lattice is needed to integrate a callable")
        values = np.asarray(f(lattice.points), dtype=float).reshape(-1)
    row = kernel_row(lattice, x, region, p, q)
    if region.contains(row.x):
        scale = max(np.max(np.abs(values)), 1.0)
        if abs(values[row.index]) > 1e-12 * scale:
            raise ValueError("Singular integrand must vanish at the evaluation point")
    return row.apply(values, farfield)
