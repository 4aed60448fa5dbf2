"""
Local boundedness of subsolutions by De Giorgi iteration.

The iteration is run after rescaling the ball B_r(x0) to the unit ball. Its
levels k_j rise to k-tilde while the radii r_j shrink to 1, and the L2 norms
alpha_j of the truncations (u - k_j)+ over B_{r_j} are recorded together with
the pointwise relations the contraction argument relies on.
"""

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from .barrier import harmonic_extension
from .errors import NumericalError
from .forms import _check_test_support, _gradients, energy, pairing, relative_tail
from .geometry import DomainSpec, InteractionSet, Lattice, ball, box, build_grid, dirichlet_preset
from .grid_function import FarField, GridFunction
from .operators import complement_regional_pairing
from .quadrature import FracParams, QuadratureScheme, _check_order, bar_p_exponent, cube_moment
from .smp import bump_family, supersolution_residuals

logger = logging.getLogger(__name__)

__all__ = ["bar_p_exponent", "schedule", "level_norms", "rescale", "caccioppoli_gap", "caccioppoli_pairs",
           "localized_sobolev_gap", "DeGiorgiTrace", "degiorgi_bound", "torsion_constant",
           "SubsolutionProfile", "BoundaryLoad", "subsolution_family", "torsion_family", "calibrate_c_hat",
           "calibrate_sobolev_constant"]

JMAX = 20
# alpha_j below this fraction of k-tilde ends the iteration
ALPHA_FLOOR = 1e-14
C_HAT_SAFETY = 2.0
MAX_DOUBLINGS = 64
# calibration members live on Omega = B_{2+h}
LOAD_RADIUS = 2.0


def schedule(j: int, tilde_k: float) -> Tuple[float, float, float, float]:
    """
    Radii and levels of step j: (r_j, k_j, r~_j, k~_j).

    Raises:
        ValueError: If j is negative or tilde_k is not positive
    """
    if int(j) != j or j < 0:
        raise ValueError(f"Step index must be a nonnegative integer, got {j}")
    if not tilde_k > 0:
        raise ValueError(f"Level k-tilde must be positive, got {tilde_k}")
    r_j = 1.0 + 2.0 ** (-j)
    r_next = 1.0 + 2.0 ** (-(j + 1))
    k_j = tilde_k * (1.0 - 2.0 ** (-j))
    k_next = tilde_k * (1.0 - 2.0 ** (-(j + 1)))
    return r_j, k_j, 0.5 * (r_j + r_next), 0.5 * (k_j + k_next)


def _ball_mass(lattice: Lattice, values: np.ndarray, x0, radius: float) -> float:
    return float(np.sum(lattice.weights(ball(x0, radius)) * values)) * lattice.cell_volume


def level_norms(u: GridFunction, x0, tilde_k: float, jmax: int = JMAX) -> List[float]:
    """
    alpha_j, the L2 norm over B_{r_j}(x0) of (u - k_j)+, for j = 0..jmax.

    The list stops early at the first alpha_j below 1e-14 * k-tilde.

    Raises:
        ValueError: If the lattice does not cover B_2(x0)
    """
    lattice = u.lattice
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if not lattice.covers(ball(x0, 2.0)):
        raise ValueError("Lattice does not cover B_2(x0)")
    alphas = []
    for j in range(jmax + 1):
        r_j, k_j, _, _ = schedule(j, tilde_k)
        w = np.maximum(u.values - k_j, 0.0)
        alpha = math.sqrt(max(_ball_mass(lattice, w ** 2, x0, r_j), 0.0))
        alphas.append(alpha)
        if alpha < ALPHA_FLOOR * tilde_k:
            break
    return alphas


def rescale(u: GridFunction, x0, r: float) -> GridFunction:
    """
    u in the coordinates y = (x - x0)/r.

    Raises:
        ValueError: If r is not positive, or a power-decay far field would need
            re-centering
    """
    if not r > 0:
        raise ValueError(f"Radius must be positive, got {r}")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    farfield = u.farfield
    if farfield.kind == "power_decay":
        if np.any(x0 != 0):
            raise ValueError("Power-decay far fields can only be rescaled about the origin")
        farfield = FarField.power(farfield.c * r ** (-farfield.q), farfield.q)
    return GridFunction(u.lattice.rescaled(x0, r), u.values, farfield)


def _psi_sum(lattice: Lattice, weight: np.ndarray, w: np.ndarray, phi: np.ndarray, p: FracParams) -> float:
    """(C_{n,s}/2) times the sum of w(x)w(y)(phi(x) - phi(y))^2 |x - y|^-(n+2s) over cell pairs."""
    pts = lattice.points
    rows = np.flatnonzero((weight > 0) & (w != 0))
    total = 0.0
    for start in range(0, rows.shape[0], 256):
        idx = rows[start:start + 256]
        dist = np.linalg.norm(pts[idx][:, None, :] - pts[None, :, :], axis=2)
        with np.errstate(divide="ignore"):
            kern = np.where(dist > 0, dist, np.inf) ** (-p.exponent)
        f = (phi[idx][:, None] - phi[None, :]) ** 2 * kern
        total += float((weight[idx] * w[idx]) @ (f @ (weight * w)))
    total *= lattice.cell_volume ** 2
    grad = _gradients(lattice, phi)
    moment = (lattice.h / 2) ** (2 - 2 * p.s) * cube_moment(lattice.dim, 2 - p.exponent)
    total += float(np.sum(weight ** 2 * w ** 2 * np.sum(grad ** 2, axis=1))) / lattice.dim * moment * lattice.cell_volume
    return 0.5 * p.c_ns * total


def caccioppoli_gap(w: GridFunction, phi: GridFunction, g: DomainSpec, z: InteractionSet,
                    p: FracParams, with_error: bool = False):
    """
    Right side minus left side of the Caccioppoli inequality for the cut-off
    truncation phi w+:

        <L_Z w, phi^2 w+> + (C_{n,s}/2) sum over G x G of w+(x)w+(y)Psi_phi
        - integral over G of w+ phi^2 (regional operator of (U1 u U2) minus G) w+
        - E(phi w+; G x G)

    Args:
        w: Function in the weighted L1 class
        phi: Cut-off compactly supported in G
        g: Region G inside Omega
        z: Interaction set
        p: Fractional parameters
        with_error: Also return the combined error estimate of the four terms

    Raises:
        ValueError: If phi is not compactly supported in G
    """
    _check_test_support(phi, g, "G")
    lattice = w.lattice
    w_plus = w.positive_part()
    test = phi * phi * w_plus
    cut = phi * w_plus
    paired = pairing(w, test, z, p)
    psi_term = _psi_sum(lattice, lattice.weights(g), w_plus.values, phi.values, p)
    regional = complement_regional_pairing(w_plus, test, g, z, p)
    cut_energy = energy(cut, g, g, None, p)
    gap = paired.value + psi_term - 2.0 * regional.value - cut_energy.value
    logger.debug("Caccioppoli terms: pairing %g, psi %g, regional %g, energy %g",
                 paired.value, psi_term, regional.value, cut_energy.value)
    if with_error:
        error = paired.error_estimate + 2.0 * regional.error_estimate + cut_energy.error_estimate
        return gap, error
    return gap


def caccioppoli_pairs(lattice: Lattice, g: DomainSpec, count: int, seed: int = 0) -> List[Tuple[GridFunction, GridFunction]]:
    """
    Random (w, phi): w a signed sum of bumps minus a level, phi a bump
    compactly supported in G.

    Raises:
        ValueError: If G is unbounded or too thin for a cut-off of four cells
    """
    if not g.is_bounded:
        raise ValueError("G must be bounded")
    rng = np.random.default_rng(seed)
    lo, hi = g.core_box()
    pts = lattice.points
    h = lattice.h
    depth = np.where(g.contains_points(pts), g.boundary_distances(pts), 0.0)
    centers = np.flatnonzero(depth > 5 * h)
    if centers.size == 0:
        raise ValueError("G has no room for a cut-off on this lattice")
    size = float(np.min(hi - lo))
    pairs = []
    for _ in range(count):
        w = GridFunction.zeros(lattice)
        for _ in range(int(rng.integers(1, 4))):
            center = rng.uniform(lo - 0.25 * size, hi + 0.25 * size)
            w = w + float(rng.uniform(-1.0, 2.0)) * GridFunction.bump(lattice, center, float(rng.uniform(0.2, 0.6)) * size)
        w = w - float(rng.uniform(0.0, 0.5))
        node = int(rng.choice(centers))
        reach = float(depth[node]) - h
        phi = GridFunction.bump(lattice, pts[node], float(rng.uniform(4 * h, max(reach, 4 * h))))
        pairs.append((w, phi))
    return pairs


def localized_sobolev_gap(u: GridFunction, r: float, rho: float, p: FracParams, c_sob: float) -> float:
    """
    E(u; B_r x B_r) + (r - rho)^(-2s) int_{B_r} u^2 - c_sob (int_{B_rho} |u|^pbar)^(2/pbar)
    for u vanishing outside B_rho (balls centered at the origin).

    Raises:
        ValueError: If 1 < rho < r <= 2 fails, or u does not vanish outside B_rho
    """
    if not 1.0 < rho < r <= 2.0:
        raise ValueError(f"Radii must satisfy 1 < rho < r <= 2, got rho={rho}, r={r}")
    if not c_sob > 0:
        raise ValueError(f"Sobolev constant must be positive, got {c_sob}")
    lattice = u.lattice
    origin = np.zeros(lattice.dim)
    inner = ball(origin, rho)
    if u.farfield.kind != "compact_support" or np.any((u.values != 0) & (lattice.weights(inner) == 0)):
        raise ValueError("Function must vanish outside B_rho")
    if not np.any(u.values):
        return 0.0
    outer = ball(origin, r)
    seminorm = energy(u, outer, outer, None, p).value
    l2 = _ball_mass(lattice, u.values ** 2, origin, r)
    lp = _ball_mass(lattice, np.abs(u.values) ** p.pbar, origin, rho)
    return seminorm + (r - rho) ** (-2 * p.s) * l2 - c_sob * lp ** (2.0 / p.pbar)


@dataclass
class DeGiorgiTrace:
    """
    Record of one De Giorgi iteration in rescaled coordinates.

    Attributes:
        params: Fractional parameters
        tilde_k: Final level Tail + (c_hat int_{B_2} u+^2)^(1/2)
        tail: Relative nonlocal tail of u+ at (0, 1)
        alpha: L2 norms of the truncations
        radii, tilde_radii: r_j and r~_j
        levels, tilde_levels: k_j and k~_j
        c_hat: Constant used
        bound: Right side of the sup bound, equal to tilde_k
        induction_ok: sqrt(c_hat) alpha_j / tilde_k <= eta^(-j/beta) per step
        tww_ok: w~_j <= w_j and w~_j <= 2^(j+2) w_j^2 / tilde_k at every node, per step
        tww0_ok: w_{j+1}^2 (tilde_k / 2^(j+2))^(pbar-2) <= w~_j^pbar at every node, per step
        sup_value: Max of u over the nodes of B_1
        bound_ok: sup_value <= bound + tolerance
    """
    params: FracParams
    tilde_k: float
    tail: float
    alpha: List[float] = field(default_factory=list)
    radii: List[float] = field(default_factory=list)
    tilde_radii: List[float] = field(default_factory=list)
    levels: List[float] = field(default_factory=list)
    tilde_levels: List[float] = field(default_factory=list)
    c_hat: float = 1.0
    bound: float = 0.0
    induction_ok: List[bool] = field(default_factory=list)
    tww_ok: List[bool] = field(default_factory=list)
    tww0_ok: List[bool] = field(default_factory=list)
    sup_value: float = 0.0
    bound_ok: bool = True

    def to_dict(self):
        data = asdict(self)
        data["params"] = self.params.to_dict()
        return data


def _check_subsolution(u: GridFunction, z: InteractionSet, p: FracParams, bumps: Sequence[GridFunction],
                       threads: int = 0):
    for value in supersolution_residuals(u, z.omega, z, p, bumps, threads):
        if value.value > value.error_estimate + 1e-12:
            raise ValueError(f"Function is not a subsolution: pairing {value.value:g} against a test bump")


def degiorgi_bound(u: GridFunction, x0, r: float, z: InteractionSet, p: FracParams, c_hat: float,
                   bumps: Optional[Sequence[GridFunction]] = None, jmax: int = JMAX, threads: int = 0) -> DeGiorgiTrace:
    """
    Sup bound on B_r(x0) for a subsolution by De Giorgi iteration.

    Args:
        u: Subsolution, with finite weighted L1 norm
        x0: Center
        r: Radius, with B_2r(x0) inside Omega
        z: Interaction set
        p: Fractional parameters
        c_hat: The constant in the bound
        bumps: Nonnegative test functions u is checked against; bump_family of Omega by
            default, and an empty sequence skips the check for members built as solutions
        jmax: Last iteration index
        threads: Workers for the subsolution check

    Returns:
        DeGiorgiTrace: The iteration record with bound = Tail + (c_hat r^-n int_{B_2r} u+^2)^(1/2)

    Raises:
        ValueError: If B_2r(x0) is not inside Omega, or u fails the subsolution check
    """
    if not c_hat > 0:
        raise ValueError(f"Constant c_hat must be positive, got {c_hat}")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    omega = z.omega
    if not r > 0:
        raise ValueError(f"Radius must be positive, got {r}")
    if not omega.contains(x0) or omega.boundary_distances(x0[None, :])[0] < 2 * r * (1 - 1e-12):
        raise ValueError(f"Ball B_{2 * r:g}({tuple(x0)}) is not contained in Omega")
    if bumps is None:
        bumps = bump_family(u.lattice, omega)
    if bumps:
        _check_subsolution(u, z, p, bumps, threads)
    scaled = rescale(u, x0, r)
    zs = z.rescaled(x0, r)
    lattice = scaled.lattice
    origin = np.zeros(lattice.dim)
    if not lattice.covers(ball(origin, 2.0)):
        raise ValueError("Lattice does not cover B_2(x0)")
    positive = scaled.positive_part()
    tail = relative_tail(scaled, origin, 1.0, zs, p)
    alpha0_sq = _ball_mass(lattice, positive.values ** 2, origin, 2.0)
    tilde_k = tail + math.sqrt(c_hat * alpha0_sq)
    inner_nodes = lattice.weights(ball(origin, 1.0)) > 0
    sup_value = float(np.max(scaled.values[inner_nodes])) if np.any(inner_nodes) else -math.inf
    scale = max(float(np.max(np.abs(scaled.values))), 1.0)
    tolerance = 1e-9 * scale
    trace = DeGiorgiTrace(params=p, tilde_k=tilde_k, tail=tail, c_hat=c_hat, bound=tilde_k,
                          sup_value=sup_value, bound_ok=sup_value <= tilde_k + tolerance)
    if not tilde_k > 0:
        logger.debug("u+ vanishes near B_2, bound is 0")
        return trace
    trace.alpha = level_norms(scaled, origin, tilde_k, jmax)
    values = scaled.values
    for j, alpha in enumerate(trace.alpha):
        r_j, k_j, tr_j, tk_j = schedule(j, tilde_k)
        _, k_next, _, _ = schedule(j + 1, tilde_k)
        trace.radii.append(r_j)
        trace.levels.append(k_j)
        trace.tilde_radii.append(tr_j)
        trace.tilde_levels.append(tk_j)
        trace.induction_ok.append(math.sqrt(c_hat) * alpha / tilde_k <= p.eta ** (-j / p.beta) * (1 + 1e-12))
        w_j = np.maximum(values - k_j, 0.0)
        tw_j = np.maximum(values - tk_j, 0.0)
        w_next = np.maximum(values - k_next, 0.0)
        trace.tww_ok.append(bool(np.all(tw_j <= w_j) and np.all(tw_j <= 2.0 ** (j + 2) * w_j ** 2 / tilde_k)))
        gap = (tilde_k / 2.0 ** (j + 2)) ** (p.pbar - 2)
        trace.tww0_ok.append(bool(np.all(w_next ** 2 * gap <= tw_j ** p.pbar)))
    logger.debug("De Giorgi: tail %g, k-tilde %g, %d steps, sup %g", tail, tilde_k, len(trace.alpha), sup_value)
    return trace


def torsion_constant(n: int, s: float) -> float:
    """
    (-Delta)^s (R^2 - |x|^2)+^s inside B_R: 2^(2s) Gamma(1+s) Gamma(n/2+s) / Gamma(n/2).
    """
    _check_order(n, s)
    return float(2.0 ** (2 * s) * special.gamma(1 + s) * special.gamma(n / 2 + s) / special.gamma(n / 2))


@dataclass(frozen=True)
class SubsolutionProfile:
    """
    u = c - a (R^2 - |x|^2)+^s. Inside B_R, (-Delta)^s u = -a times the torsion
    constant, so u is a subsolution in every Omega inside B_R.

    Its sup over B_1 never exceeds its tail at (0, 1): the profile grows with
    |x| and equals c outside B_R.
    """
    c: float
    a: float
    radius: float

    def __post_init__(self):
        """Validate data after initialization."""
        if not (self.a > 0 and self.radius > 0):
            raise ValueError("Profile amplitude and radius must be positive")

    @property
    def extent(self) -> float:
        return self.radius

    def on(self, lattice: Lattice, s: float) -> GridFunction:
        """
        Raises:
            ValueError: If the lattice does not cover B_R
        """
        origin = np.zeros(lattice.dim)
        if not lattice.covers(ball(origin, self.radius)):
            raise ValueError(f"Lattice does not cover B_{self.radius:g}")

        def profile(pts):
            return self.c - self.a * np.maximum(self.radius ** 2 - np.sum(pts ** 2, axis=1), 0.0) ** s

        return GridFunction.from_callable(lattice, profile, FarField.constant(self.c))

    def build(self, lattice: Lattice, omega: DomainSpec, p: FracParams,
              q: Optional[QuadratureScheme] = None) -> GridFunction:
        """
        Raises:
            ValueError: If Omega is not inside B_R
        """
        if not omega.is_bounded or np.any(np.abs(np.asarray(omega.core_box())) > self.radius / math.sqrt(lattice.dim)):
            raise ValueError(f"Omega must lie inside B_{self.radius:g}")
        return self.on(lattice, p.s)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class BoundaryLoad:
    """
    Data `amplitude` on the cap of points within `width` outside Omega and
    within `angle` of `direction`, extended s-harmonically into Omega and then
    lowered by `shift` times its minimum over B_1.

    The extension solves the collocation system of harmonic_extension, so it is
    a solution in Omega. Lowering by a constant keeps it one and clears u+ on
    the side of B_2 facing away from the cap. With the cap just outside B_2 the
    sup over B_1 can exceed the tail.
    """
    direction: Tuple[float, ...]
    width: float
    angle: float
    amplitude: float
    shift: float

    def __post_init__(self):
        """Validate data after initialization."""
        if not (self.width > 0 and self.amplitude > 0 and 0 < self.angle <= math.pi):
            raise ValueError("Load width, amplitude and angle must be positive (angle at most pi)")
        if not 0.0 <= self.shift < 1.0:
            raise ValueError(f"Load shift must lie in [0, 1), got {self.shift}")
        if abs(float(np.linalg.norm(self.direction)) - 1.0) > 1e-9:
            raise ValueError("Load direction must be a unit vector")

    @property
    def extent(self) -> float:
        return LOAD_RADIUS + self.width

    def build(self, lattice: Lattice, omega: DomainSpec, p: FracParams,
              q: Optional[QuadratureScheme] = None) -> GridFunction:
        """
        Raises:
            ValueError: If the direction does not match the lattice dimension
            NumericalError: If the collocation solve fails
        """
        if len(self.direction) != lattice.dim:
            raise ValueError(f"Load direction has dimension {len(self.direction)}, lattice has {lattice.dim}")
        pts = lattice.points
        norms = np.linalg.norm(pts, axis=1)
        outside = ~omega.contains_points(pts)
        near = np.where(outside, omega.boundary_distances(pts), np.inf) <= self.width
        facing = pts @ np.asarray(self.direction) >= math.cos(self.angle) * norms
        data = GridFunction(lattice, self.amplitude * (outside & near & facing).astype(float))
        u = harmonic_extension(lattice, omega, data, p, q)
        inner = lattice.weights(ball(np.zeros(lattice.dim), 1.0)) > 0
        level = max(float(np.min(u.values[inner])), 0.0)
        return u - self.shift * level if self.shift > 0 and level > 0 else u

    def to_dict(self):
        data = asdict(self)
        data["direction"] = [float(c) for c in self.direction]
        return data


def subsolution_family(seed: int, count: int, n: int = 1) -> List[BoundaryLoad]:
    """
    Random boundary loads: a cap of width in [1/16, 1/4] and half-angle in
    [pi/6, pi/2] around a random direction, amplitude in [0.5, 2] and shift
    in [0, 0.9].
    """
    rng = np.random.default_rng(seed)
    family = []
    for _ in range(count):
        direction = rng.normal(size=n)
        direction /= np.linalg.norm(direction)
        family.append(BoundaryLoad(direction=tuple(float(c) for c in direction),
                                   width=float(rng.uniform(1.0 / 16, 0.25)),
                                   angle=float(rng.uniform(math.pi / 6, math.pi / 2)),
                                   amplitude=float(rng.uniform(0.5, 2.0)),
                                   shift=float(rng.uniform(0.0, 0.9))))
    return family


def torsion_family(seed: int, count: int, radius_range: Tuple[float, float] = (2.5, 4.0)) -> List[SubsolutionProfile]:
    """
    Random profiles c - a(R^2 - |x|^2)+^s with R in radius_range, a in [0.5, 2]
    and c = a R^2 t, t in [1, 1.5], so that u >= 0 for every s in (0, 1).
    """
    rng = np.random.default_rng(seed)
    family = []
    for _ in range(count):
        radius = float(rng.uniform(*radius_range))
        a = float(rng.uniform(0.5, 2.0))
        shift = float(rng.uniform(1.0, 1.5))
        family.append(SubsolutionProfile(c=a * max(radius ** 2, 1.0) * shift, a=a, radius=radius))
    return family


def family_hash(items: Sequence) -> str:
    payload = json.dumps([item.to_dict() if hasattr(item, "to_dict") else item for item in items], sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def calibration_lattice(n: int, radius: float, h: float) -> Lattice:
    return build_grid(box(-radius * np.ones(n), radius * np.ones(n)), h)


def calibration_setup(family: Sequence, p: FracParams, h: float,
                      q: Optional[QuadratureScheme] = None) -> Tuple[InteractionSet, List[GridFunction]]:
    """
    The Dirichlet interaction set of Omega = B_{2+h} and the members of a
    family built on a lattice covering all of them.
    """
    lattice = calibration_lattice(p.n, max(member.extent for member in family) + 0.5, h)
    omega = ball(np.zeros(p.n), LOAD_RADIUS + h)
    return dirichlet_preset(omega), [member.build(lattice, omega, p, q) for member in family]


def calibrate_c_hat(p: FracParams, seed: int = 0, count: int = 20, h: float = 1.0 / 32,
                    safety: float = C_HAT_SAFETY, family: Optional[Sequence] = None,
                    q: Optional[QuadratureScheme] = None) -> Tuple[float, str]:
    """
    Smallest c_hat making the sup bound hold on B_1 over a subsolution family,
    times a safety factor, then doubled until every member also passes the
    induction flags.

    For each member the bound Tail + sqrt(c_hat) A is increasing in c_hat, so
    the smallest admissible value is ((sup - Tail)/A)^2 when sup exceeds the
    tail. Members whose tail already bounds the sup say nothing about c_hat.

    Args:
        p: Fractional parameters
        seed: Seed of subsolution_family
        count: Family size
        h: Lattice spacing
        safety: Factor applied to the smallest admissible value
        family: Members to use instead of subsolution_family(seed, count, n)

    Returns:
        (c_hat, family hash)

    Raises:
        NumericalError: If no member has its sup above its tail, or a binding
            member has no mass on B_2
    """
    family = subsolution_family(seed, count, p.n) if family is None else list(family)
    z, members = calibration_setup(family, p, h, q)
    origin = np.zeros(p.n)
    needed = []
    for member, u in zip(family, members):
        # members are solutions by construction
        trace = degiorgi_bound(u, origin, 1.0, z, p, c_hat=1.0, bumps=(), jmax=0)
        excess = trace.sup_value - trace.tail
        if excess <= 0:
            continue
        mass = trace.tilde_k - trace.tail
        if not mass > 0:
            raise NumericalError("Calibration member has no mass on B_2")
        needed.append((excess / mass) ** 2)
        logger.debug("Calibration member %s needs c_hat %g", member, needed[-1])
    if not needed:
        raise NumericalError(f"No calibration member has its sup on B_1 above its tail for n={p.n}, s={p.s:g}; "
                             "the family does not determine c_hat")
    c_hat = safety * max(needed)
    for _ in range(MAX_DOUBLINGS):
        traces = [degiorgi_bound(u, origin, 1.0, z, p, c_hat, bumps=()) for u in members]
        if all(trace.bound_ok and all(trace.induction_ok) for trace in traces):
            logger.info("Calibrated c_hat %g for n=%d, s=%g from %d binding member(s)", c_hat, p.n, p.s, len(needed))
            return c_hat, family_hash(family)
        c_hat *= 2.0
    raise NumericalError(f"Induction flags still fail at c_hat {c_hat:g}")


def sobolev_bump_family(seed: int, count: int, n: int, rho: float) -> List[dict]:
    rng = np.random.default_rng(seed)
    family = []
    for _ in range(count):
        width = float(rng.uniform(0.2, 0.6))
        direction = rng.normal(size=n)
        direction /= np.linalg.norm(direction)
        offset = float(rng.uniform(0.0, rho - width)) * direction
        family.append({"center": offset.tolist(), "width": width})
    return family


def calibrate_sobolev_constant(p: FracParams, seed: int = 0, count: int = 100, h: float = 1.0 / 32,
                               r: float = 2.0, rho: float = 1.5) -> Tuple[float, str]:
    """
    Largest c_sob keeping the localized Sobolev gap nonnegative over a bump family.

    Returns:
        (c_sob, family hash)

    Raises:
        NumericalError: If the family yields no finite constant
    """
    family = sobolev_bump_family(seed, count, p.n, rho)
    lattice = calibration_lattice(p.n, r, h)
    origin = np.zeros(p.n)
    outer = ball(origin, r)
    best = math.inf
    for member in family:
        u = GridFunction.bump(lattice, member["center"], member["width"])
        seminorm = energy(u, outer, outer, None, p).value
        l2 = _ball_mass(lattice, u.values ** 2, origin, r)
        lp = _ball_mass(lattice, np.abs(u.values) ** p.pbar, origin, rho) ** (2.0 / p.pbar)
        if lp > 0:
            best = min(best, (seminorm + (r - rho) ** (-2 * p.s) * l2) / lp)
    if not math.isfinite(best):
        raise NumericalError("Sobolev calibration family is empty on this lattice")
    return best, family_hash(family)
