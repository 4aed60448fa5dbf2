"""
Discrete s-harmonic extensions and the annular barrier.

The Dirichlet problem (-Delta)^s u = 0 in Omega with u prescribed outside is
solved by collocation: one kernel row per unknown node, the same rows that
dirichlet_pointwise evaluates, so the solved function is harmonic to solver
accuracy in the pointwise sense as well.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .errors import NumericalError
from .forms import pairing
from .geometry import DomainSpec, InteractionSet, Lattice, ball, build_grid, difference, full_space
from .grid_function import GridFunction
from .operators import OperatorKind, admissible_nodes, evaluate_on_lattice
from .quadrature import FracParams, QuadratureScheme, kernel_row
from .utils import log_log_slope

logger = logging.getLogger(__name__)

MIN_ANNULUS_CELLS = 16
RESIDUAL_TOLERANCE = 1e-10
SHELL_COUNT = 5


def harmonic_extension(lattice: Lattice, omega: DomainSpec, exterior: GridFunction, p: FracParams,
                       q: Optional[QuadratureScheme] = None) -> GridFunction:
    """
    Solve (-Delta)^s u = 0 at the nodes of Omega, with u = exterior elsewhere.

    Args:
        lattice: Lattice with enough halo around Omega for the near field
        omega: Region of the unknowns
        exterior: Data outside Omega (values inside Omega are ignored) and far-field model
        p: Fractional parameters
        q: Quadrature scheme

    Returns:
        GridFunction: The extension, with the far-field model of the data

    Raises:
        ValueError: If exterior lives on another lattice or Omega has no nodes
        NumericalError: If the collocation system is singular or the residual is too large
    """
    q = q or QuadratureScheme()
    if exterior.lattice is not lattice:
        raise ValueError("Exterior data must live on the solve lattice")
    unknown = np.flatnonzero(omega.contains_points(lattice.points))
    if unknown.size == 0:
        raise ValueError("Omega contains no lattice nodes")
    known = np.ones(lattice.size, dtype=bool)
    known[unknown] = False
    data = np.where(known, exterior.values, 0.0)
    whole = full_space(lattice.dim)
    matrix = np.empty((unknown.size, unknown.size))
    rhs = np.empty(unknown.size)
    for row_index, node in enumerate(unknown):
        row = kernel_row(lattice, lattice.points[node], whole, p, q)
        coef, constant = row.linear_form(exterior.farfield)
        matrix[row_index] = coef[unknown]
        rhs[row_index] = -(constant + float(coef[known] @ data[known]))
    try:
        solution = linalg.solve(matrix, rhs)
    except linalg.LinAlgError as e:
        raise NumericalError(f"Collocation system is singular: {e}")
    residual = float(np.max(np.abs(matrix @ solution - rhs)))
    scale = max(1.0, float(np.max(np.abs(rhs))), float(np.max(np.abs(matrix))) * float(np.max(np.abs(solution))))
    logger.debug("Harmonic extension: %d unknowns, residual %.3g (scale %.3g)", unknown.size, residual, scale)
    if not np.all(np.isfinite(solution)) or residual > RESIDUAL_TOLERANCE * scale:
        raise NumericalError(f"Collocation solve did not converge: residual {residual:.3g}")
    values = data.copy()
    values[unknown] = solution
    return GridFunction(lattice, values, exterior.farfield)


def barrier_lattice(x0, r: float, R: float, q: QuadratureScheme, h: Optional[float] = None) -> Lattice:
    """
    Raises:
        ValueError: If the radii are out of order or h leaves fewer than 16 cells across the annulus
    """
    if not 0 < r < R:
        raise ValueError(f"Barrier radii must satisfy 0 < r < R, got r={r}, R={R}")
    h = (R - r) / MIN_ANNULUS_CELLS if h is None else h
    if (R - r) / h < MIN_ANNULUS_CELLS - 1e-9:
        raise ValueError(f"Barrier needs at least {MIN_ANNULUS_CELLS} cells across the annulus, got {(R - r) / h:g}")
    halo = max(4, q.near_steps(h) + 2) * h
    return build_grid(ball(x0, R), h, halo=halo)


def build_barrier(x0, r: float, R: float, p: FracParams, q: Optional[QuadratureScheme] = None,
                  h: Optional[float] = None) -> GridFunction:
    """
    Barrier Phi: 1 on the closed ball B_r(x0), 0 outside B_R(x0), and discrete
    s-harmonic in between.

    Args:
        x0: Center
        r: Inner radius
        R: Outer radius
        p: Fractional parameters
        q: Quadrature scheme
        h: Spacing, (R - r)/16 by default

    Raises:
        ValueError: If 0 < r < R fails or the lattice is too coarse
        NumericalError: If the collocation solve fails
    """
    q = q or QuadratureScheme()
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    lattice = barrier_lattice(x0, r, R, q, h)
    radius = np.linalg.norm(lattice.points - x0, axis=1)
    data = GridFunction(lattice, (radius <= r).astype(float))
    # nodes on the inner sphere stay clamped
    annulus = difference(ball(x0, R), ball(x0, r + 1e-9 * lattice.h))
    return harmonic_extension(lattice, annulus, data, p, q)


@dataclass
class BarrierReport:
    """
    Data checks for a barrier on B_R(x0) minus B_r(x0).

    Attributes:
        phi: The checked function
        inner_radius: r
        outer_radius: R
        fitted_c: Largest c with Phi >= c(R - |x - x0|)^s at the nodes of B_R
        max_operator_value: Max of L_Z Phi over interior annulus nodes
        data_ok: Clamps hold, fitted_c > 0 and max_operator_value <= tolerance
        clamp_ok: Phi = 1 on the closed B_r and 0 outside the open B_R, exactly
        tolerance: Three times the pairing error estimate, plus 1e-9
        boundary_exponent: Log-log slope of Phi against R - |x - x0| near the outer sphere
    """
    phi: GridFunction
    inner_radius: float
    outer_radius: float
    fitted_c: float
    max_operator_value: float
    data_ok: bool
    clamp_ok: bool = True
    tolerance: float = 0.0
    boundary_exponent: float = float("nan")

    def __post_init__(self):
        """Validate data after initialization."""
        if not 0 < self.inner_radius < self.outer_radius:
            raise ValueError("Barrier radii must satisfy 0 < r < R")

    def to_dict(self):
        return {"inner_radius": self.inner_radius, "outer_radius": self.outer_radius,
                "fitted_c": self.fitted_c, "max_operator_value": self.max_operator_value,
                "data_ok": self.data_ok, "clamp_ok": self.clamp_ok, "tolerance": self.tolerance,
                "boundary_exponent": self.boundary_exponent}


def boundary_exponent(phi: GridFunction, x0, r: float, R: float, distances: Optional[Sequence[float]] = None) -> float:
    """
    Slope of log Phi against log(R - |x - x0|) along the first axis, over
    geometric shells between 4h and (R - r)/8.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    h = phi.lattice.h
    if distances is None:
        distances = np.geomspace(4 * h, (R - r) / 8, SHELL_COUNT)
    distances = np.asarray(distances, dtype=float)
    direction = np.zeros(phi.dim)
    direction[0] = 1.0
    points = x0 + (R - distances)[:, None] * direction
    values = phi.interpolate(points)
    if np.any(values <= 0):
        return float("nan")
    return log_log_slope(distances, values)


def verify_barrier(phi: GridFunction, x0, r: float, R: float, z: InteractionSet, p: FracParams,
                   q: Optional[QuadratureScheme] = None, threads: int = 0) -> BarrierReport:
    """
    Check the barrier data: the clamps, the lower bound c(R - |x|)^s and the
    sign of L_Z Phi on the annulus.

    Raises:
        ValueError: If the lattice does not cover B_R(x0) with room for the near field
    """
    q = q or QuadratureScheme()
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    lattice = phi.lattice
    h = lattice.h
    if not lattice.covers(ball(x0, R + (q.near_steps(h) + 1) * h)):
        raise ValueError("Barrier lattice does not cover B_R(x0) and its near-field halo")
    radius = np.linalg.norm(lattice.points - x0, axis=1)
    clamp_ok = bool(np.all(phi.values[radius <= r] == 1.0) and np.all(phi.values[radius >= R] == 0.0))
    inside = radius < R
    fitted_c = float(np.min(phi.values[inside] / (R - radius[inside]) ** p.s))
    annulus = difference(ball(x0, R), ball(x0, r))
    nodes = admissible_nodes(lattice, annulus, q)
    if nodes.size == 0:
        raise ValueError("Annulus has no interior lattice nodes")
    operator = OperatorKind("general", interaction=z).pointwise()
    values = evaluate_on_lattice(phi, operator, p, q, nodes, threads)
    max_value = float(np.max(values))
    middle = x0.copy()
    middle[0] += 0.5 * (r + R)
    bump = GridFunction.bump(lattice, middle, 0.25 * (R - r))
    tolerance = 3.0 * pairing(phi, bump, z, p).error_estimate + 1e-9
    exponent = boundary_exponent(phi, x0, r, R)
    data_ok = clamp_ok and fitted_c > 0 and max_value <= tolerance
    logger.debug("Barrier check: fitted c %g, max operator %g, tolerance %g", fitted_c, max_value, tolerance)
    return BarrierReport(phi=phi, inner_radius=r, outer_radius=R, fitted_c=fitted_c,
                         max_operator_value=max_value, data_ok=data_ok, clamp_ok=clamp_ok,
                         tolerance=tolerance, boundary_exponent=exponent)


def z_monotonicity_defect(phi: GridFunction, z: InteractionSet, zprime: InteractionSet, bump: GridFunction,
                          p: FracParams, with_error: bool = False):
    """
    <L_Z' phi, bump> - <L_Z phi, bump> for Z inside Z'; nonnegative when phi >= 0.

    Raises:
        ValueError: If Z is not contained in Z' or the bump is negative somewhere
    """
    if np.any(bump.values < 0):
        raise ValueError("Test bump must be nonnegative")
    if z == zprime:
        return (0.0, 0.0) if with_error else 0.0
    if not z.is_subset_of(zprime, phi.lattice):
        raise ValueError("Z is not contained in Z'")
    larger = pairing(phi, bump, zprime, p)
    smaller = pairing(phi, bump, z, p)
    defect = larger.value - smaller.value
    if with_error:
        return defect, larger.error_estimate + smaller.error_estimate
    return defect
