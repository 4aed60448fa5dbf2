"""
Numerical checks of the strong maximum principle for L_Z.

A supersolution is certified by pairing it against a family of nonnegative
test bumps; the conclusion is checked by comparing its minimum over a compact
set K with its infimum over U1 u U2 (lattice nodes plus the far-field model).
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config_manager import worker_count
from .errors import NumericalError
from .forms import pairing
from .geometry import (PRESETS, DomainSpec, InteractionSet, Lattice, ball, build_grid, dirichlet_preset,
                       semirestricted_preset)
from .grid_function import GridFunction
from .operators import (admissible_nodes, dirichlet_pointwise, evaluate_on_lattice, spectral_1d,
                        spectral_coefficients)
from .quadrature import FracParams, QuadratureScheme

logger = logging.getLogger(__name__)

VERDICTS = ("consistent", "hypothesis_failed", "violation_found")
BUMP_WIDTHS = (4, 8, 16)
LSC_TOLERANCE = 1e-6
NONCONSTANT_TOLERANCE = 1e-12
EPSILON_SAFETY = 0.9


def bump_family(lattice: Lattice, omega: DomainSpec, widths: Sequence[int] = BUMP_WIDTHS,
                stride: int = 1) -> List[GridFunction]:
    """
    Smooth bumps of width 4h, 8h and 16h centered at every `stride`-th lattice
    node whose bump stays compactly inside Omega.
    """
    pts = lattice.points
    inside = omega.contains_points(pts)
    distance = omega.boundary_distances(pts)
    bumps = []
    for cells in widths:
        width = cells * lattice.h
        centers = np.flatnonzero(inside & (distance > width + lattice.h))
        for index in centers[::stride]:
            bumps.append(GridFunction.bump(lattice, pts[index], width))
    return bumps


def supersolution_residuals(u: GridFunction, omega: DomainSpec, z: InteractionSet, p: FracParams,
                            bumps: Sequence[GridFunction], threads: int = 0) -> List:
    """Pairings <L_Z u, bump> for every bump, in order."""
    for bump in bumps:
        if np.any(bump.values < 0):
            raise ValueError("Test bumps must be nonnegative")
    with ThreadPoolExecutor(max_workers=worker_count(threads)) as pool:
        return list(pool.map(lambda bump: pairing(u, bump, z, p), bumps))


def verify_supersolution(u: GridFunction, omega: DomainSpec, z: InteractionSet, p: FracParams,
                         bumps: Sequence[GridFunction], threads: int = 0,
                         with_error: bool = False) -> Union[float, Tuple[float, float]]:
    """
    Minimum over the bumps of <L_Z u, bump>. A value above minus the pairing
    error estimate certifies L_Z u >= 0 in Omega at lattice resolution.

    Raises:
        ValueError: If a bump is negative or not compactly supported in Omega
    """
    if not bumps:
        raise ValueError("Supersolution check needs at least one test bump")
    if omega != z.omega:
        logger.debug("Bump domain differs from the Omega of Z")
    residuals = supersolution_residuals(u, omega, z, p, bumps, threads)
    values = np.array([r.value for r in residuals])
    errors = np.array([r.error_estimate for r in residuals])
    lowest = int(np.argmin(values))
    if with_error:
        return float(values[lowest]), float(np.max(errors))
    return float(values[lowest])


@dataclass(frozen=True)
class MPReport:
    """
    Outcome of a maximum-principle check.

    Attributes:
        supersolution_min_residual: Min over test bumps of <L_Z u, bump>
        global_inf: Infimum of u over U1 u U2, lattice nodes and far-field model
        inf_location: Node where it is attained, or "far_field"
        interior_strict_margin: min over K of u minus global_inf
        lsc_violations: Count from the discrete lower-semicontinuity proxy
        verdict: consistent, hypothesis_failed or violation_found
    """
    supersolution_min_residual: float
    global_inf: float
    inf_location: Union[Tuple[float, ...], str]
    interior_strict_margin: float
    lsc_violations: int
    verdict: str

    def __post_init__(self):
        """Validate data after initialization."""
        if self.verdict not in VERDICTS:
            raise ValueError(f"Unknown verdict: {self.verdict}")

    def to_dict(self):
        data = asdict(self)
        if not isinstance(self.inf_location, str):
            data["inf_location"] = [float(c) for c in self.inf_location]
        return data


def lsc_scan(u: GridFunction, omega: DomainSpec, tolerance: float = LSC_TOLERANCE) -> int:
    """
    Count the nodes of Omega where u jumps up from a neighbor.

    x is flagged when, for one of the 3^n - 1 neighbor directions e, the step
    u(x) - u(x + e) exceeds 2|u(x + e) - u(x + 2e)| + 2|u(x - e) - u(x)| plus
    tolerance * (max u - min u): an upward step toward x that neither adjacent
    difference along e explains. Sampled quadratics never trigger it; at a jump
    only the node on the upper side is flagged. Nodes without both neighbors
    along e are skipped for that direction.
    """
    lattice = u.lattice
    grid = u.values.reshape(lattice.shape)
    spread = float(np.max(u.values) - np.min(u.values))
    if spread == 0.0:
        return 0
    allowance = tolerance * spread
    inside = omega.contains_points(lattice.points).reshape(lattice.shape)
    flagged = np.zeros(lattice.shape, dtype=bool)
    directions = np.stack(np.meshgrid(*([np.arange(-1, 2)] * lattice.dim), indexing="ij"), axis=-1).reshape(-1, lattice.dim)
    directions = directions[np.any(directions != 0, axis=1)]
    shape = np.asarray(lattice.shape)
    for e in directions:
        # nodes x with x - e and x + 2e still on the lattice
        lo = np.maximum(np.maximum(-2 * e, e), 0)
        hi = shape - np.maximum(np.maximum(2 * e, -e), 0)
        if np.any(hi <= lo):
            continue
        base = tuple(slice(a, b) for a, b in zip(lo, hi))
        one = tuple(slice(a + d, b + d) for a, b, d in zip(lo, hi, e))
        two = tuple(slice(a + 2 * d, b + 2 * d) for a, b, d in zip(lo, hi, e))
        back = tuple(slice(a - d, b - d) for a, b, d in zip(lo, hi, e))
        jump = grid[base] - grid[one]
        explained = 2.0 * (np.abs(grid[one] - grid[two]) + np.abs(grid[back] - grid[base])) + allowance
        flagged[base] |= jump > explained
    return int(np.sum(flagged & inside))


def _global_inf(u: GridFunction, z: InteractionSet) -> Tuple[float, Union[Tuple[float, ...], str]]:
    lattice = u.lattice
    union = z.union
    nodes = np.flatnonzero(lattice.weights(union) > 0)
    lattice_min = math.inf
    location: Union[Tuple[float, ...], str] = "far_field"
    if nodes.size:
        best = nodes[int(np.argmin(u.values[nodes]))]
        lattice_min = float(u.values[best])
        location = tuple(float(c) for c in lattice.points[best])
    if union.is_cobounded:
        far = u.farfield.infimum()
        if far < lattice_min:
            return far, "far_field"
    return lattice_min, location


def smp_report(u: GridFunction, omega: DomainSpec, z: InteractionSet, compact_k: DomainSpec, p: FracParams,
               bumps: Optional[Sequence[GridFunction]] = None, threads: int = 0) -> MPReport:
    """
    Check the strong maximum principle for u on Omega.

    Args:
        u: Candidate supersolution
        omega: Domain of the equation
        z: Interaction set (any preset or a general one)
        compact_k: Compact set K inside Omega
        p: Fractional parameters
        bumps: Test bumps; the default family of bump_family otherwise

    Raises:
        ValueError: If K is not compactly contained in Omega or holds no node
    """
    lattice = u.lattice
    pts = lattice.points
    if not compact_k.is_bounded:
        raise ValueError("K must be bounded")
    in_k = compact_k.contains_points(pts)
    if not np.any(in_k):
        raise ValueError("K contains no lattice nodes")
    if np.any(in_k & ~(omega.contains_points(pts) & (omega.boundary_distances(pts) > lattice.h))):
        raise ValueError("K is not compactly contained in Omega")
    scale = max(float(np.max(np.abs(u.values))), abs(u.farfield.c), 1.0)
    values = u.values
    if z.union.is_cobounded and u.farfield.kind != "compact_support":
        values = np.append(values, u.farfield.c)
    nonconstant = float(np.max(values) - np.min(values)) > NONCONSTANT_TOLERANCE * scale
    if bumps is None:
        bumps = bump_family(lattice, omega)
    residual, error = verify_supersolution(u, omega, z, p, bumps, threads, with_error=True)
    tolerance = error + NONCONSTANT_TOLERANCE * scale
    global_inf, location = _global_inf(u, z)
    margin = float(np.min(u.values[in_k])) - global_inf
    if not nonconstant or residual < -tolerance:
        verdict = "hypothesis_failed"
    elif margin <= 0:
        verdict = "violation_found"
    else:
        verdict = "consistent"
    logger.debug("MP check (%s): residual %g, margin %g, verdict %s", z.name, residual, margin, verdict)
    return MPReport(supersolution_min_residual=residual, global_inf=global_inf, inf_location=location,
                    interior_strict_margin=margin, lsc_violations=lsc_scan(u, omega), verdict=verdict)


def corollary_reports(u: GridFunction, omega: DomainSpec, compact_k: DomainSpec, p: FracParams,
                      bumps: Optional[Sequence[GridFunction]] = None, threads: int = 0) -> Dict[str, MPReport]:
    """MP reports for the dirichlet, restricted and semirestricted presets."""
    if bumps is None:
        bumps = bump_family(u.lattice, omega)
    return {name: smp_report(u, omega, preset(omega), compact_k, p, bumps, threads)
            for name, preset in PRESETS.items()}


def _smooth_step(t: np.ndarray) -> np.ndarray:
    """1 for t <= 0, 0 for t >= 1, smooth in between."""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore"):
        rise = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        fall = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return fall / (rise + fall)


@dataclass
class CounterexampleResult:
    """
    A supersolution of the full-space operator whose minimum over Omega is
    attained inside Omega.

    Attributes:
        epsilon: Size of the dent
        f: u - epsilon psi
        report: MP report under the dirichlet preset
        semirestricted_report: MP report under the semirestricted preset. Test bumps live in
            Omega, where both presets pair alike, so it matches the dirichlet report
        argmin: Interior node of the minimum over Omega
        interior_min: min over Omega of f, equal to 1 - epsilon max psi
        min_residual: Smallest pointwise (-Delta)^s f over interior test nodes
        neumann_margin: min over K of f minus min over Omega of f (0: the regional conclusion fails)
    """
    epsilon: float
    f: GridFunction
    report: MPReport
    semirestricted_report: MPReport
    argmin: Tuple[float, ...]
    interior_min: float
    min_residual: float
    neumann_margin: float

    def to_dict(self):
        return {"epsilon": self.epsilon, "report": self.report.to_dict(),
                "semirestricted_report": self.semirestricted_report.to_dict(), "argmin": list(self.argmin),
                "interior_min": self.interior_min, "min_residual": self.min_residual,
                "neumann_margin": self.neumann_margin}


def build_counterexample(omega: DomainSpec, p: FracParams, q: Optional[QuadratureScheme] = None,
                         h: Optional[float] = None, transition: Optional[float] = None,
                         threads: int = 0) -> CounterexampleResult:
    """
    u = 1 on Omega decaying smoothly to 0 outside, dented by epsilon psi with
    psi a bump at the center of Omega.

    (-Delta)^s u is positive in Omega, so a small dent keeps f = u - epsilon psi
    a pointwise supersolution there. The largest admissible epsilon is the
    smallest ratio (-Delta)^s u / (-Delta)^s psi over nodes where the latter is
    positive; 0.9 of it (capped at 1) is returned.

    Raises:
        ValueError: If Omega is unbounded
        NumericalError: If (-Delta)^s u is not positive on the test nodes
    """
    if not omega.is_bounded:
        raise ValueError("Counterexample needs a bounded Omega")
    q = q or QuadratureScheme()
    lo, hi = omega.core_box()
    size = float(np.min(hi - lo))
    h = size / 64 if h is None else h
    transition = max(8 * h, 0.25 * size) if transition is None else transition
    halo = transition + (q.near_steps(h) + 2) * h
    lattice = build_grid(omega, h, halo=halo)
    pts = lattice.points
    outside_distance = np.where(omega.contains_points(pts), 0.0, omega.boundary_distances(pts))
    u = GridFunction(lattice, _smooth_step(outside_distance / transition))
    center = 0.5 * (lo + hi)
    if not omega.contains(center):
        raise ValueError("Omega must contain the center of its bounding box")
    reach = omega.distance_to_boundary(center)
    psi = GridFunction.bump(lattice, center, 0.5 * reach)
    nodes = admissible_nodes(lattice, omega, q)
    base = evaluate_on_lattice(u, dirichlet_pointwise, p, q, nodes, threads)
    dent = evaluate_on_lattice(psi, dirichlet_pointwise, p, q, nodes, threads)
    if np.any(base <= 0):
        raise NumericalError("Smoothed indicator has a nonpositive operator value; refine the lattice")
    ratios = base[dent > 0] / dent[dent > 0]
    epsilon = min(1.0, EPSILON_SAFETY * float(np.min(ratios))) if ratios.size else 1.0
    f = u - epsilon * psi
    residuals = base - epsilon * dent
    in_omega = np.flatnonzero(omega.contains_points(pts))
    argmin_index = in_omega[int(np.argmin(f.values[in_omega]))]
    interior_min = float(f.values[argmin_index])
    compact_k = ball(center, 0.5 * reach)
    bumps = bump_family(lattice, omega, stride=2)
    report = smp_report(f, omega, dirichlet_preset(omega), compact_k, p, bumps, threads)
    semirestricted = smp_report(f, omega, semirestricted_preset(omega), compact_k, p, bumps, threads)
    neumann_margin = float(np.min(f.values[compact_k.contains_points(pts)])) - interior_min
    logger.debug("Counterexample: epsilon %g, interior min %g", epsilon, interior_min)
    return CounterexampleResult(epsilon=epsilon, f=f, report=report, semirestricted_report=semirestricted,
                                argmin=tuple(float(c) for c in pts[argmin_index]),
                                interior_min=interior_min, min_residual=float(np.min(residuals)),
                                neumann_margin=neumann_margin)


@dataclass(frozen=True)
class SpectralMPResult:
    """
    Attributes:
        bc: dirichlet or neumann
        hypothesis_ok: The spectral power of u is nonnegative (Dirichlet: on the interior)
        trivial: u vanishes (Dirichlet) or is constant (Neumann)
        margin: min over K of u minus 0 (Dirichlet) or minus min u (Neumann)
        holds: not hypothesis_ok, or trivial, or margin > 0
    """
    bc: str
    hypothesis_ok: bool
    trivial: bool
    margin: float
    holds: bool

    def to_dict(self):
        return asdict(self)


def spectral_mp_check(u: GridFunction, bc: str, s: float, compact_k: DomainSpec,
                      modes: Optional[int] = None, tolerance: float = 1e-10) -> SpectralMPResult:
    """
    Maximum principle for the spectral powers on an interval: a function with
    nonnegative spectral power vanishes (Dirichlet) or is constant (Neumann),
    or else stays strictly above its infimum on every compact K.

    Raises:
        ValueError: If K holds no interior node
    """
    lattice = u.lattice
    intervals = lattice.size - 1
    modes = (intervals - 1 if bc == "dirichlet" else intervals + 1) if modes is None else modes
    power = spectral_1d(u, bc, s, modes)
    scale = max(float(np.max(np.abs(u.values))), 1.0)
    in_k = compact_k.contains_points(lattice.points)
    in_k[[0, -1]] = False
    if not np.any(in_k):
        raise ValueError("K contains no interior lattice nodes")
    if bc == "dirichlet":
        hypothesis_ok = bool(np.all(power.values[1:-1] >= -tolerance * scale))
        trivial = bool(np.max(np.abs(spectral_coefficients(u, bc))) <= tolerance * scale * lattice.size)
        margin = float(np.min(u.values[in_k]))
    else:
        hypothesis_ok = bool(np.all(power.values >= -tolerance * scale))
        trivial = float(np.max(u.values) - np.min(u.values)) <= tolerance * scale
        margin = float(np.min(u.values[in_k]) - np.min(u.values))
    return SpectralMPResult(bc=bc, hypothesis_ok=hypothesis_ok, trivial=trivial, margin=margin,
                            holds=(not hypothesis_ok) or trivial or margin > 0)


def spectral_family(lattice: Lattice, bc: str, s: float, count: int, seed: int = 0) -> List[GridFunction]:
    """
    Functions with nonnegative spectral power: each is the inverse power of a
    random nonnegative combination of interior bumps, plus a random constant
    for the Neumann condition.
    """
    rng = np.random.default_rng(seed)
    lo, hi = lattice.bounding_box
    length = float(hi[0] - lo[0])
    intervals = lattice.size - 1
    modes = intervals - 1 if bc == "dirichlet" else intervals + 1
    family = []
    for _ in range(count):
        source = GridFunction.zeros(lattice)
        for _ in range(int(rng.integers(1, 4))):
            width = float(rng.uniform(0.1, 0.25)) * length
            center = float(rng.uniform(lo[0] + width, hi[0] - width))
            source = source + float(rng.uniform(0.2, 1.0)) * GridFunction.bump(lattice, [center], width)
        u = spectral_1d(source, bc, -s, modes)
        if bc == "neumann":
            u = u + float(rng.uniform(-1.0, 1.0))
        family.append(u)
    return family
