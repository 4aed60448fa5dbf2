"""
Pointwise and distributional realizations of the nonlocal operators.

Every pointwise operator is C_{n,s} times a principal-value kernel row over
one integration region; the presets differ only in how that region is chosen
from x. The spectral powers on an interval and the Fourier multiplier oracle
are independent discretizations used for cross-checks.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import fft, special

from .config_manager import worker_count
from .forms import _bilinear, _check_test_support, _with_estimate
from .geometry import DomainSpec, InteractionSet, Lattice, difference, full_space
from .grid_function import FormValue, GridFunction
from .quadrature import FracParams, QuadratureScheme, kernel_row

logger = logging.getLogger(__name__)

OPERATOR_TAGS = ("dirichlet", "regional", "semirestricted", "general",
                 "spectral_dirichlet_1d", "spectral_neumann_1d")

# Oracle inputs must vanish to this relative level on the box surface.
ORACLE_EDGE_TOLERANCE = 1e-10
ORACLE_PADDING = 4


def _check_interior(u: GridFunction, x: np.ndarray, region: DomainSpec, q: QuadratureScheme) -> int:
    lattice = u.lattice
    index = lattice.try_index(x)
    if index is None:
        raise ValueError(f"Point {tuple(x)} is not a lattice point")
    margin = (q.near_steps(lattice.h) + 1) * lattice.h
    if lattice.inscribed_distance(x) < margin - 1e-12:
        raise ValueError(f"Point {tuple(x)} is too close to the lattice edge")
    if region.kind != "full_space" and region.boundary_distances(x[None, :])[0] < 2 * lattice.h - 1e-12:
        raise ValueError(f"Point {tuple(x)} is boundary-adjacent")
    return index


def _pointwise(u: GridFunction, x, region: DomainSpec, p: FracParams,
               q: Optional[QuadratureScheme] = None) -> float:
    q = q or QuadratureScheme()
    x = np.asarray(x, dtype=float).reshape(-1)
    _check_interior(u, x, region, q)
    row = kernel_row(u.lattice, x, region, p, q)
    return p.c_ns * row.operator_value(u)


def dirichlet_pointwise(u: GridFunction, x, p: FracParams, q: Optional[QuadratureScheme] = None) -> float:
    """
    (-Delta)^s u(x): C_{n,s} P.V. integral over R^n of (u(x) - u(y))|x - y|^-(n+2s).

    Raises:
        ValueError: If x is not an interior lattice point
    """
    return _pointwise(u, x, full_space(u.dim), p, q)


def regional_pointwise(u: GridFunction, x, omega: DomainSpec, p: FracParams,
                       q: Optional[QuadratureScheme] = None) -> float:
    """
    Regional operator: the same integral restricted to y in Omega.

    Raises:
        ValueError: If x is not in Omega or is boundary-adjacent
    """
    if not omega.contains(x):
        raise ValueError(f"Point {tuple(np.atleast_1d(x))} is outside Omega")
    return _pointwise(u, x, omega, p, q)


def semirestricted_pointwise(u: GridFunction, x, omega: DomainSpec, p: FracParams,
                             q: Optional[QuadratureScheme] = None) -> float:
    """
    The full-space operator at x in Omega, and the integral over Omega at x outside.

    Raises:
        ValueError: If x is within 2h of the boundary of Omega
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if omega.boundary_distances(x[None, :])[0] < 2 * u.lattice.h - 1e-12:
        raise ValueError(f"Point {tuple(x)} is boundary-adjacent")
    region = full_space(u.dim) if omega.contains(x) else omega
    return _pointwise(u, x, region, p, q)


def general_pointwise(u: GridFunction, x, z: InteractionSet, p: FracParams,
                      q: Optional[QuadratureScheme] = None) -> float:
    """
    Strong form of L_Z: the principal-value integral over the x-section {y : (x, y) in Z}.

    Raises:
        ValueError: If the x-section is empty or x is boundary-adjacent
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    section = z.section(x)
    if section is None:
        raise ValueError(f"The section of Z at {tuple(x)} is empty")
    return _pointwise(u, x, section, p, q)


@dataclass(frozen=True)
class OperatorKind:
    """
    Operator selector.

    Attributes:
        tag: dirichlet, regional, semirestricted, general, spectral_dirichlet_1d or spectral_neumann_1d
        omega: Domain for regional and semirestricted
        interaction: Interaction set for general
        modes: Mode count for the spectral powers
    """
    tag: str
    omega: Optional[DomainSpec] = None
    interaction: Optional[InteractionSet] = None
    modes: int = 0

    def __post_init__(self):
        """Validate data after initialization."""
        if self.tag not in OPERATOR_TAGS:
            raise ValueError(f"Unknown operator: {self.tag}")
        if self.tag in ("regional", "semirestricted") and self.omega is None:
            raise ValueError(f"The {self.tag} operator needs a domain")
        if self.tag == "general" and self.interaction is None:
            raise ValueError("The general operator needs an interaction set")
        if self.tag.startswith("spectral") and self.modes < 1:
            raise ValueError("Spectral operators need at least one mode")

    @property
    def is_spectral(self) -> bool:
        return self.tag.startswith("spectral")

    def pointwise(self) -> Callable:
        """(u, x, p, q) -> value for the nonlocal kinds."""
        if self.tag == "dirichlet":
            return dirichlet_pointwise
        if self.tag == "regional":
            return lambda u, x, p, q=None: regional_pointwise(u, x, self.omega, p, q)
        if self.tag == "semirestricted":
            return lambda u, x, p, q=None: semirestricted_pointwise(u, x, self.omega, p, q)
        if self.tag == "general":
            return lambda u, x, p, q=None: general_pointwise(u, x, self.interaction, p, q)
        raise ValueError(f"The {self.tag} operator has no pointwise kernel form")


def admissible_nodes(lattice: Lattice, region: Optional[DomainSpec], q: Optional[QuadratureScheme] = None) -> np.ndarray:
    """
    Nodes where pointwise evaluation is allowed: inside the region, at least
    2h from its boundary and far enough from the lattice edge for the near field.
    """
    q = q or QuadratureScheme()
    pts = lattice.points
    margin = (q.near_steps(lattice.h) + 1) * lattice.h
    lo, hi = lattice.bounding_box
    mask = np.all((pts - lo >= margin - 1e-12) & (hi - pts >= margin - 1e-12), axis=1)
    if region is not None and region.kind != "full_space":
        mask &= region.contains_points(pts) & (region.boundary_distances(pts) >= 2 * lattice.h - 1e-12)
    return np.flatnonzero(mask)


def evaluate_on_lattice(u: GridFunction, operator: Callable, p: FracParams,
                        q: Optional[QuadratureScheme] = None, nodes: Optional[Sequence[int]] = None,
                        threads: int = 0) -> np.ndarray:
    """
    Evaluate a pointwise operator at many nodes with a thread pool.

    Results keep the order of `nodes`, so reductions over them are deterministic.
    """
    if nodes is None:
        nodes = admissible_nodes(u.lattice, None, q)
    points = [u.lattice.points[i] for i in nodes]
    with ThreadPoolExecutor(max_workers=worker_count(threads)) as pool:
        values = list(pool.map(lambda x: operator(u, x, p, q), points))
    return np.asarray(values, dtype=float)


def complement_regional_pairing(u: GridFunction, phi: GridFunction, g: DomainSpec,
                                z: InteractionSet, p: FracParams) -> FormValue:
    """
    (C_{n,s}/2) times the integral over G x ((U1 u U2) minus G) of
    (u(x) - u(y))(phi(x) - phi(y))|x - y|^-(n+2s).

    Raises:
        ValueError: If phi is not compactly supported in G
    """
    _check_test_support(phi, g, "G")
    union = z.union
    if union == g:
        return FormValue(0.0, 0.0)
    outside = difference(union, g)
    return _with_estimate(lambda v, w: _bilinear(v, w, g, outside, None, p), u, phi)


def _interval(u: GridFunction):
    if u.dim != 1:
        raise ValueError("Spectral powers are defined on one-dimensional lattices only")
    lo, hi = u.lattice.bounding_box
    return float(lo[0]), float(hi[0]), u.lattice.size - 1


def spectral_coefficients(u: GridFunction, bc: str) -> np.ndarray:
    """
    Discrete sine (Dirichlet) or cosine (Neumann) coefficients of u.

    Dirichlet coefficients are indexed k = 1..N-1 over the interior nodes,
    Neumann k = 0..N over all nodes. Both transforms diagonalize the
    trapezoid inner product, so sin(k pi x) and cos(k pi x) map to single modes.
    """
    _interval(u)
    if bc == "dirichlet":
        return fft.dst(u.values[1:-1], type=1)
    if bc == "neumann":
        return fft.dct(u.values, type=1)
    raise ValueError(f"Boundary condition must be dirichlet or neumann, got {bc}")


def spectral_eigenvalues(u: GridFunction, bc: str) -> np.ndarray:
    """Eigenvalues of -Delta on the interval aligned with spectral_coefficients."""
    a, b, intervals = _interval(u)
    length = b - a
    if bc == "dirichlet":
        k = np.arange(1, intervals)
    elif bc == "neumann":
        k = np.arange(0, intervals + 1)
    else:
        raise ValueError(f"Boundary condition must be dirichlet or neumann, got {bc}")
    return (k * np.pi / length) ** 2


def spectral_1d(u: GridFunction, bc: str, s: float, modes: int) -> GridFunction:
    """
    Spectral power of the Dirichlet or Neumann Laplacian on the lattice interval.

    Each eigen-coefficient is multiplied by lambda_k^s and the first `modes`
    modes are resynthesized. The Neumann constant mode (lambda = 0) is kept
    for s = 0 and dropped otherwise, so negative s inverts the operator on
    the complement of the constants.

    Args:
        u: Function on a one-dimensional lattice; the interval is its box
        bc: dirichlet or neumann
        s: Power (s = 1 gives the discrete-spectrum Laplacian, s < 0 its inverse powers)
        modes: Number of modes kept

    Raises:
        ValueError: If modes exceeds what the lattice resolves
    """
    _, _, intervals = _interval(u)
    limit = intervals - 1 if bc == "dirichlet" else intervals + 1
    if modes < 1 or modes > limit:
        raise ValueError(f"Mode count {modes} exceeds the lattice limit {limit}")
    coefficients = spectral_coefficients(u, bc)
    eigenvalues = spectral_eigenvalues(u, bc)
    positive = eigenvalues > 0
    multiplier = np.where(positive, eigenvalues, 1.0) ** s
    multiplier[~positive] = 1.0 if s == 0 else 0.0
    multiplier[modes:] = 0.0
    scaled = coefficients * multiplier
    values = np.zeros(u.lattice.size)
    if bc == "dirichlet":
        values[1:-1] = fft.idst(scaled, type=1)
    else:
        values = fft.idct(scaled, type=1)
    return GridFunction(u.lattice, values)


def _image_sum(x: np.ndarray, periods: np.ndarray, exponent: float, images: int = 2) -> np.ndarray:
    """Sum over nonzero lattice shifts k of |x - k * periods|^-exponent."""
    if x.shape[1] == 1:
        period = periods[0]
        t = x[:, 0] / period
        return period ** (-exponent) * (special.zeta(exponent, 1 - t) + special.zeta(exponent, 1 + t))
    grids = np.meshgrid(*([np.arange(-images, images + 1)] * x.shape[1]), indexing="ij")
    shifts = np.stack([g.reshape(-1) for g in grids], axis=1)
    shifts = shifts[np.any(shifts != 0, axis=1)] * periods
    total = np.zeros(x.shape[0])
    for shift in shifts:
        total += np.linalg.norm(x - shift, axis=1) ** (-exponent)
    return total


def fourier_symbol_oracle(u: GridFunction, p: FracParams) -> GridFunction:
    """
    (-Delta)^s u through the multiplier |xi|^(2s) on a zero-padded FFT grid.

    The periodic images of u introduced by the FFT are removed to leading
    order by adding C_{n,s} * mass * sum_{k != 0} |x - k L|^-(n+2s).

    Raises:
        ValueError: If u does not vanish on the surface of its lattice box
    """
    lattice = u.lattice
    if lattice.dim != p.n:
        raise ValueError("Lattice dimension does not match n")
    scale = float(np.max(np.abs(u.values)))
    if scale == 0.0:
        return GridFunction(lattice, np.zeros(lattice.size))
    multi = np.stack(np.unravel_index(np.arange(lattice.size), lattice.shape), axis=1)
    surface = np.any((multi == 0) | (multi == np.asarray(lattice.shape) - 1), axis=1)
    if np.max(np.abs(u.values[surface])) >= ORACLE_EDGE_TOLERANCE * scale:
        raise ValueError("Function support is too close to the lattice box edge for the Fourier oracle")
    padded_shape = tuple(ORACLE_PADDING * m for m in lattice.shape)
    grid = np.zeros(padded_shape)
    grid[tuple(slice(0, m) for m in lattice.shape)] = u.values.reshape(lattice.shape)
    freqs = np.meshgrid(*[2 * np.pi * fft.fftfreq(m, d=lattice.h) for m in padded_shape], indexing="ij")
    symbol = sum(f ** 2 for f in freqs) ** p.s
    result = np.real(fft.ifftn(fft.fftn(grid) * symbol))
    values = result[tuple(slice(0, m) for m in lattice.shape)].reshape(-1)
    mass = float(np.sum(u.values)) * lattice.cell_volume
    periods = np.asarray(padded_shape, dtype=float) * lattice.h
    if abs(mass) > 1e-14 * scale * lattice.cell_volume:
        centroid = np.sum(u.values[:, None] * lattice.points, axis=0) * lattice.cell_volume / mass
    else:
        centroid = 0.5 * (lattice.lo_array + lattice.hi_array)
    values = values + p.c_ns * mass * _image_sum(lattice.points - centroid, periods, p.exponent)
    return GridFunction(lattice, values)
