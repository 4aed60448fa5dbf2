"""
Quadratic and bilinear nonlocal forms.

Energies and pairings are double midpoint sums over lattice cell pairs, with
cell fractions standing in for the indicator of each region. Pairs with one
point outside the lattice box are completed from the far-field models.
Every form reports the change under one coarsening as its error estimate.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from .geometry import (DomainSpec, InteractionSet, Lattice, ball, box, build_grid, difference,
                       full_space, hull_boxes, intersection)
from .grid_function import FarField, FormValue, GridFunction
from .quadrature import FracParams, QuadratureScheme, box_exterior_integral, cube_moment, kernel_row, sphere_area

logger = logging.getLogger(__name__)

ROW_BLOCK = 256


@dataclass(frozen=True)
class PairTerm:
    """One rank-one piece coef * a_i * b_j of the pair-weight matrix."""
    coef: float
    a: np.ndarray
    b: np.ndarray


def _pair_terms(lattice: Lattice, region_a: DomainSpec, region_b: DomainSpec,
                z: Optional[InteractionSet]) -> Tuple[List[PairTerm], np.ndarray]:
    """
    Cell-pair weights of (A x B) n Z as a sum of rank-one terms, and the
    weight of pairs with one point outside the lattice box.

    The indicator of Z is 1_U1(x)1_U2(y) + 1_U2(x)1_U1(y) - 1_U12(x)1_U12(y).
    """
    if z is None:
        a = lattice.weights(region_a)
        b = lattice.weights(region_b)
        terms = [PairTerm(1.0, a, b)]
        outer = np.zeros(lattice.size)
        if region_b.is_cobounded:
            outer = outer + a
        if region_a.is_cobounded:
            outer = outer + b
        return terms, outer
    u1, u2 = z.u1, z.u2
    both = intersection(u1, u2)
    if u1 == u2:
        a = lattice.weights(intersection(region_a, u1))
        b = lattice.weights(intersection(region_b, u1))
        terms = [PairTerm(1.0, a, b)]
        far1 = far2 = u1.is_cobounded
        a1 = a2 = a12 = a
        b1 = b2 = b12 = b
    else:
        a1 = lattice.weights(intersection(region_a, u1))
        a2 = lattice.weights(intersection(region_a, u2))
        a12 = lattice.weights(intersection(region_a, both))
        b1 = lattice.weights(intersection(region_b, u1))
        b2 = lattice.weights(intersection(region_b, u2))
        b12 = lattice.weights(intersection(region_b, both))
        terms = [PairTerm(1.0, a1, b2), PairTerm(1.0, a2, b1), PairTerm(-1.0, a12, b12)]
        far1, far2 = u1.is_cobounded, u2.is_cobounded
    outer = np.zeros(lattice.size)
    if region_b.is_cobounded:
        outer = outer + a1 * far2 + a2 * far1 - a12 * (far1 and far2)
    if region_a.is_cobounded:
        outer = outer + b2 * far1 + b1 * far2 - b12 * (far1 and far2)
    return terms, outer


def _support_rows(values: np.ndarray, farfield: FarField) -> Optional[np.ndarray]:
    """Nodes where a function differs from its far constant, or None when all count."""
    if farfield.kind == "power_decay":
        return None
    a, _, _ = farfield.coefficients()
    return values != a


def _double_sum(lattice: Lattice, terms: Sequence[PairTerm], u: np.ndarray, phi: np.ndarray,
                exponent: float, support: Optional[np.ndarray] = None) -> float:
    """
    Sum over ordered node pairs i != j of W_ij (u_i - u_j)(phi_i - phi_j)|x_i - x_j|^-exponent.

    Rows are restricted to the support S of phi (pairs with both ends outside S
    vanish); the pairs (i outside S, j in S) are folded in with a and b swapped.
    """
    pts = lattice.points
    rows = np.arange(lattice.size) if support is None else np.flatnonzero(support)
    outside = None if support is None else ~support
    total = 0.0
    for start in range(0, rows.shape[0], ROW_BLOCK):
        idx = rows[start:start + ROW_BLOCK]
        dist = np.linalg.norm(pts[idx][:, None, :] - pts[None, :, :], axis=2)
        with np.errstate(divide="ignore"):
            kern = np.where(dist > 0, dist, np.inf) ** (-exponent)
        f = (u[idx][:, None] - u[None, :]) * (phi[idx][:, None] - phi[None, :]) * kern
        for term in terms:
            total += term.coef * float(term.a[idx] @ (f @ term.b))
            if outside is not None:
                total += term.coef * float(term.b[idx] @ (f @ (term.a * outside)))
    return total * lattice.cell_volume ** 2


def _diagonal_sum(lattice: Lattice, terms: Sequence[PairTerm], u: np.ndarray, phi: np.ndarray,
                  s: float) -> float:
    """Self-cell contribution, from the gradients of u and phi and the exact cube moment."""
    weight = sum(term.coef * term.a * term.b for term in terms)
    if not np.any(weight):
        return 0.0
    n = lattice.dim
    h = lattice.h
    grad_u = _gradients(lattice, u)
    grad_phi = _gradients(lattice, phi)
    dot = np.sum(grad_u * grad_phi, axis=1)
    moment = (h / 2) ** (2 - 2 * s) * cube_moment(n, 2 - n - 2 * s)
    return float(np.sum(weight * dot)) / n * moment * lattice.cell_volume


def _gradients(lattice: Lattice, values: np.ndarray) -> np.ndarray:
    grid = values.reshape(lattice.shape)
    if min(lattice.shape) < 2:
        return np.zeros((lattice.size, lattice.dim))
    parts = np.gradient(grid, lattice.h)
    if lattice.dim == 1:
        parts = [parts]
    return np.stack([g.reshape(-1) for g in parts], axis=1)


def _outer_sum(lattice: Lattice, outer: np.ndarray, u: GridFunction, phi: GridFunction,
               exponent: float) -> float:
    """Pairs with one end outside the lattice box, from the far-field models."""
    if not np.any(outer):
        return 0.0
    a_u, b_u, q_u = u.farfield.coefficients()
    a_p, b_p, q_p = phi.farfield.coefficients()
    if b_u != 0.0 and b_p != 0.0:
        raise ValueError("Forms of two power-decay far fields are not supported")
    du = u.values - a_u
    dp = phi.values - a_p
    nodes = np.flatnonzero((outer != 0) & ((du * dp != 0) | (b_u != 0 and dp.any()) | (b_p != 0 and du.any())))
    total = 0.0
    for i in nodes:
        x = lattice.points[i]
        value = du[i] * dp[i] * box_exterior_integral(lattice, x, exponent)
        if b_p != 0.0:
            value -= du[i] * b_p * box_exterior_integral(lattice, x, exponent + q_p)
        if b_u != 0.0:
            value -= dp[i] * b_u * box_exterior_integral(lattice, x, exponent + q_u)
        total += outer[i] * value
    return total * lattice.cell_volume


def _bilinear(u: GridFunction, phi: GridFunction, region_a: DomainSpec, region_b: DomainSpec,
              z: Optional[InteractionSet], p: FracParams) -> float:
    lattice = u.lattice
    for region in (region_a, region_b):
        if not lattice.covers(region):
            raise ValueError("Lattice box does not cover the finite part of the region")
    terms, outer = _pair_terms(lattice, region_a, region_b, z)
    support = _support_rows(phi.values, phi.farfield)
    other = _support_rows(u.values, u.farfield)
    if support is None or (other is not None and other.sum() < support.sum()):
        support = other
    total = _double_sum(lattice, terms, u.values, phi.values, p.exponent, support)
    total += _diagonal_sum(lattice, terms, u.values, phi.values, p.s)
    total += _outer_sum(lattice, outer, u, phi, p.exponent)
    return 0.5 * p.c_ns * total


def _with_estimate(compute, u: GridFunction, phi: GridFunction) -> FormValue:
    value = compute(u, phi)
    if min(u.lattice.shape) < 5:
        return FormValue(value, 0.0)
    coarse = compute(u.coarsen(), phi.coarsen())
    return FormValue(value, abs(value - coarse))


def weighted_l1_norm(u: GridFunction, p: FracParams) -> FormValue:
    """
    Integral of |u(x)| / (1 + |x|^(n+2s)) over R^n.

    The lattice part uses the box weights; the exterior of the box is the
    radial integral of the far-field model minus its in-box share.
    """
    def compute(v: GridFunction) -> float:
        lattice = v.lattice
        pts = lattice.points
        radius = np.linalg.norm(pts, axis=1)
        density = 1.0 / (1.0 + radius ** p.exponent)
        total = float(np.sum(lattice.box_weights() * np.abs(v.values) * density)) * lattice.cell_volume
        if v.farfield.kind == "compact_support":
            return total
        a, b, q = v.farfield.coefficients()
        origin = np.zeros(lattice.dim)
        rho = lattice.inscribed_distance(origin)
        if not rho > 0:
            raise ValueError("Lattice box must contain the origin for non-compact far fields")
        tail, _ = integrate.quad(
            lambda r: sphere_area(lattice.dim) * r ** (lattice.dim - 1) * abs(a + b * r ** (-q)) / (1 + r ** p.exponent),
            rho, np.inf, limit=200)
        shell = lattice.weights(difference(full_space(lattice.dim), ball(origin, rho)), cache=False)
        far = np.abs(a + b * np.where(radius > 0, radius, np.inf) ** (-q)) if b else np.full(lattice.size, abs(a))
        in_box = float(np.sum(shell * far * density)) * lattice.cell_volume
        return total + tail - in_box

    value = compute(u)
    if min(u.lattice.shape) < 5:
        return FormValue(value, 0.0)
    return FormValue(value, abs(value - compute(u.coarsen())))


def energy(u: GridFunction, region_a: DomainSpec, region_b: DomainSpec,
           z: Optional[InteractionSet], p: FracParams) -> FormValue:
    """
    (C_{n,s}/2) times the double integral of (u(x) - u(y))^2 |x - y|^-(n+2s)
    over (A x B) n Z.

    Args:
        u: Function on a lattice covering A and B
        region_a: First factor A
        region_b: Second factor B
        z: Interaction set filtering the pairs, or None for all of A x B
        p: Fractional parameters

    Returns:
        FormValue: Energy and refinement error estimate
    """
    return _with_estimate(lambda v, w: _bilinear(v, w, region_a, region_b, z, p), u, u)


def _check_test_support(phi: GridFunction, region: DomainSpec, what: str = "Omega"):
    if phi.farfield.kind != "compact_support":
        raise ValueError("Test functions must have compact support")
    lattice = phi.lattice
    nonzero = phi.values != 0
    inside = region.contains_points(lattice.points) & (region.boundary_distances(lattice.points) > 0.5 * lattice.h)
    if np.any(nonzero & ~inside):
        raise ValueError(f"Test function support touches the boundary of {what}")


def pairing(u: GridFunction, phi: GridFunction, z: InteractionSet, p: FracParams) -> FormValue:
    """
    Distributional pairing <L_Z u, phi>:
    (C_{n,s}/2) times the integral over Z of (u(x) - u(y))(phi(x) - phi(y))|x - y|^-(n+2s).

    Raises:
        ValueError: If phi is not compactly supported in Omega
    """
    _check_test_support(phi, z.omega)
    whole = full_space(z.dim)
    return _with_estimate(lambda v, w: _bilinear(v, w, whole, whole, z, p), u, phi)


def psi(phi: GridFunction, x, y, p: FracParams) -> float:
    """
    (phi(x) - phi(y))^2 / |x - y|^(n+2s).

    Raises:
        ValueError: If x = y
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    distance = float(np.linalg.norm(x - y))
    if distance == 0.0:
        raise ValueError("Psi is undefined at x = y")
    return (phi(x) - phi(y)) ** 2 / distance ** p.exponent


def _killing_lattice(g: DomainSpec, z: InteractionSet, h: Optional[float]) -> Lattice:
    core = g.core_box()
    if core is None:
        raise ValueError("G must be bounded")
    union = z.union
    if union.is_bounded:
        core = hull_boxes([core, union.core_box()])
    if h is None:
        h = float(np.min(core[1] - core[0])) / 128
    return build_grid(box(core[0], core[1]), h, halo=2 * h, interaction=z, g=g)


def killing_measure(x, g: DomainSpec, z: InteractionSet, p: FracParams, h: Optional[float] = None,
                    lattice: Optional[Lattice] = None) -> float:
    """
    Relative killing measure C_{n,s} times the integral over (U1 u U2) minus G
    of |x - y|^-(n+2s).

    Args:
        x: Point of G (need not be a lattice node)
        g: The region G inside U1 n U2
        z: Interaction set
        p: Fractional parameters
        h: Spacing of the lattice built when none is given
        lattice: Lattice covering G and the finite part of U1 u U2

    Raises:
        ValueError: If x is not in G
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if not g.contains(x):
        raise ValueError(f"Point {tuple(x)} is outside G")
    if not (z.u1.contains(x) and z.u2.contains(x)):
        raise ValueError("G must lie inside U1 and U2")
    union = z.union
    if union == g:
        return 0.0
    lattice = lattice or _killing_lattice(g, z, h)
    row = kernel_row(lattice, x, difference(union, g), p, QuadratureScheme(correction_mode="none"))
    return p.c_ns * row.apply(np.ones(lattice.size), FarField.constant(1.0))


def killing_measure_field(lattice: Lattice, g: DomainSpec, z: InteractionSet, p: FracParams) -> np.ndarray:
    """
    Killing measure at the lattice nodes of G whose own cell misses the
    complement of G.

    Nodes whose cell meets (U1 u U2) minus G get 0: the kernel row is singular
    there. Integrals of this field against |u|^2 are only exact for u that
    vanishes on those cells, which energy_decomposition_residual enforces.
    """
    values = np.zeros(lattice.size)
    if z.union == g:
        return values
    region = difference(z.union, g)
    ones = np.ones(lattice.size)
    scheme = QuadratureScheme(correction_mode="none")
    nodes = g.contains_points(lattice.points) & (lattice.weights(region) == 0)
    for i in np.flatnonzero(nodes):
        row = kernel_row(lattice, lattice.points[i], region, p, scheme)
        values[i] = p.c_ns * row.apply(ones, FarField.constant(1.0))
    return values


def energy_decomposition_residual(u: GridFunction, g: DomainSpec, z: InteractionSet, p: FracParams) -> float:
    """
    E(u; Z) - [E(u; G x G) + integral over G of M_G^Z |u|^2] for u supported in G.

    Raises:
        ValueError: If u does not vanish outside the closure of G, or on the
            cells of G that meet (U1 u U2) minus G
    """
    lattice = u.lattice
    weight_g = lattice.weights(g)
    if u.farfield.kind != "compact_support" or np.any((u.values != 0) & (weight_g == 0)):
        raise ValueError("Function must vanish outside G")
    if z.union != g and np.any((u.values != 0) & (lattice.weights(difference(z.union, g)) > 0)):
        raise ValueError("Function must vanish on the cells of G that meet the complement of G")
    whole = full_space(lattice.dim)
    total = energy(u, whole, whole, z, p).value
    inner = energy(u, g, g, None, p).value
    killing = killing_measure_field(lattice, g, z, p)
    killed = float(np.sum(weight_g * killing * u.values ** 2)) * lattice.cell_volume
    return total - (inner + killed)


def relative_tail(u: GridFunction, x0, r: float, z: InteractionSet, p: FracParams) -> float:
    """
    r^(2s) times the integral over (U1 u U2) outside B_r(x0) of u+(x)|x - x0|^-(n+2s).

    Raises:
        ValueError: If r is not positive
    """
    if not r > 0:
        raise ValueError(f"Radius must be positive, got {r}")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    inner = ball(x0, r)
    union = z.union
    if union == inner:
        return 0.0
    positive = truncate(u, "plus")
    if not np.any(positive.values) and positive.farfield.c == 0.0:
        return 0.0
    row = kernel_row(u.lattice, x0, difference(union, inner), p, QuadratureScheme(correction_mode="none"))
    return r ** (2 * p.s) * row.apply(positive.values, positive.farfield)


def truncate(u: GridFunction, sign: str) -> GridFunction:
    """
    Positive (sign="plus") or negative (sign="minus") part, so u = u+ - u-.

    Raises:
        ValueError: If sign is neither plus nor minus
    """
    if sign == "plus":
        return u.positive_part()
    if sign == "minus":
        return u.negative_part()
    raise ValueError(f"Sign must be plus or minus, got {sign}")
