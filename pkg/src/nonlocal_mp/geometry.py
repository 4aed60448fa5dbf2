"""
Regions, interaction sets and quadrature lattices.

A DomainSpec is an immutable description of an open region of R^n built from
balls, boxes and the whole space with complement, union and difference. An
InteractionSet holds the pair (U1, U2) and the domain Omega, and induces the
symmetric set of interacting pairs Z = (U1 x U2) u (U2 x U1). A Lattice is a
uniform node-centered grid over a bounding box carrying per-node region flags.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

DOMAIN_KINDS = ("ball", "box", "full_space", "complement", "union", "difference")

# Sub-cell samples per dimension used to estimate the fraction of a cell inside a region.
SUBCELL_SAMPLES = 4


@dataclass(frozen=True)
class DomainSpec:
    """
    Immutable description of a region in R^n.

    Attributes:
        kind: One of ball, box, full_space, complement, union, difference.
        dim: Spatial dimension n.
        center: Ball center.
        radius: Ball radius.
        lo: Lower box corner.
        hi: Upper box corner.
        operands: Nested specs for complement, union and difference.
    """
    kind: str
    dim: int
    center: Tuple[float, ...] = ()
    radius: float = 0.0
    lo: Tuple[float, ...] = ()
    hi: Tuple[float, ...] = ()
    operands: Tuple["DomainSpec", ...] = ()

    def __post_init__(self):
        """Validate data after initialization."""
        if self.kind not in DOMAIN_KINDS:
            raise ValueError(f"Unknown domain kind: {self.kind}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"Dimension must be a positive integer, got {self.dim}")
        if self.kind == "ball":
            if len(self.center) != self.dim:
                raise ValueError("Ball center dimension does not match dim")
            if not self.radius > 0:
                raise ValueError(f"Ball radius must be positive, got {self.radius}")
        elif self.kind == "box":
            if len(self.lo) != self.dim or len(self.hi) != self.dim:
                raise ValueError("Box corner dimension does not match dim")
            if not all(a < b for a, b in zip(self.lo, self.hi)):
                raise ValueError(f"Box corners must satisfy lo < hi, got {self.lo} and {self.hi}")
        elif self.kind == "complement" and len(self.operands) != 1:
            raise ValueError("Complement takes exactly one operand")
        elif self.kind == "difference" and len(self.operands) != 2:
            raise ValueError("Difference takes exactly two operands")
        elif self.kind == "union" and len(self.operands) < 1:
            raise ValueError("Union needs at least one operand")
        for operand in self.operands:
            if operand.dim != self.dim:
                raise ValueError(f"Operand dimension {operand.dim} does not match {self.dim}")

    def _as_points(self, x) -> np.ndarray:
        points = np.asarray(x, dtype=float)
        if points.ndim == 1:
            points = points[None, :]
        if points.shape[-1] != self.dim:
            raise ValueError(f"Dimension mismatch: point has {points.shape[-1]} coordinates, domain has {self.dim}")
        return points

    def contains_points(self, points: np.ndarray) -> np.ndarray:
        """Vectorized open-region membership for an (N, n) array of points."""
        pts = self._as_points(points)
        if self.kind == "ball":
            return np.linalg.norm(pts - np.asarray(self.center), axis=1) < self.radius
        if self.kind == "box":
            return np.all((pts > np.asarray(self.lo)) & (pts < np.asarray(self.hi)), axis=1)
        if self.kind == "full_space":
            return np.ones(pts.shape[0], dtype=bool)
        if self.kind == "complement":
            return ~self.operands[0].contains_points(pts)
        if self.kind == "union":
            inside = np.zeros(pts.shape[0], dtype=bool)
            for operand in self.operands:
                inside |= operand.contains_points(pts)
            return inside
        first, second = self.operands
        return first.contains_points(pts) & ~second.contains_points(pts)

    def contains(self, x) -> bool:
        """True iff x lies in the region."""
        point = np.asarray(x, dtype=float)
        if point.ndim != 1 or point.shape[0] != self.dim:
            raise ValueError(f"Dimension mismatch: point has shape {point.shape}, domain has dim {self.dim}")
        return bool(self.contains_points(point[None, :])[0])

    def boundary_distances(self, points: np.ndarray) -> np.ndarray:
        """
        Unsigned distance to the boundary for an (N, n) array of points.

        Exact for balls and boxes; unions and differences use the minimum over
        their operands, which never exceeds the true distance.
        """
        pts = self._as_points(points)
        if self.kind == "ball":
            return np.abs(np.linalg.norm(pts - np.asarray(self.center), axis=1) - self.radius)
        if self.kind == "box":
            lo = np.asarray(self.lo)
            hi = np.asarray(self.hi)
            inside = np.all((pts >= lo) & (pts <= hi), axis=1)
            d_in = np.minimum(pts - lo, hi - pts).min(axis=1)
            d_out = np.linalg.norm(np.maximum(np.maximum(lo - pts, pts - hi), 0.0), axis=1)
            return np.where(inside, d_in, d_out)
        if self.kind == "full_space":
            return np.full(pts.shape[0], np.inf)
        return np.min([operand.boundary_distances(pts) for operand in self.operands], axis=0)

    def distance_to_boundary(self, x) -> float:
        """
        Euclidean distance from x to the boundary of the region.

        Raises:
            ValueError: If x is not in the region
        """
        if not self.contains(x):
            raise ValueError(f"Point {tuple(np.atleast_1d(x))} is outside the {self.kind} domain")
        return float(self.boundary_distances(np.asarray(x, dtype=float)[None, :])[0])

    @property
    def is_bounded(self) -> bool:
        if self.kind in ("ball", "box"):
            return True
        if self.kind == "full_space":
            return False
        if self.kind == "complement":
            return self.operands[0].is_cobounded
        if self.kind == "union":
            return all(operand.is_bounded for operand in self.operands)
        first, second = self.operands
        return first.is_bounded or second.is_cobounded

    @property
    def is_cobounded(self) -> bool:
        """True iff the region contains the exterior of some ball."""
        if self.kind in ("ball", "box"):
            return False
        if self.kind == "full_space":
            return True
        if self.kind == "complement":
            return self.operands[0].is_bounded
        if self.kind == "union":
            return any(operand.is_cobounded for operand in self.operands)
        first, second = self.operands
        return first.is_cobounded and second.is_bounded

    def core_box(self) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """Smallest box holding every finite feature of the region, or None."""
        if self.kind == "ball":
            center = np.asarray(self.center, dtype=float)
            return center - self.radius, center + self.radius
        if self.kind == "box":
            return np.asarray(self.lo, dtype=float), np.asarray(self.hi, dtype=float)
        if self.kind == "full_space":
            return None
        return hull_boxes(operand.core_box() for operand in self.operands)

    def rescaled(self, x0, r: float) -> "DomainSpec":
        """Image of the region under y -> (y - x0) / r."""
        origin = np.asarray(x0, dtype=float)
        if self.kind == "ball":
            return ball((np.asarray(self.center) - origin) / r, self.radius / r)
        if self.kind == "box":
            return box((np.asarray(self.lo) - origin) / r, (np.asarray(self.hi) - origin) / r)
        if self.kind == "full_space":
            return self
        return DomainSpec(kind=self.kind, dim=self.dim,
                          operands=tuple(operand.rescaled(origin, r) for operand in self.operands))


def hull_boxes(boxes: Iterable[Optional[Tuple[np.ndarray, np.ndarray]]]) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """Bounding box of several boxes, skipping None entries."""
    present = [b for b in boxes if b is not None]
    if not present:
        return None
    lo = np.min([b[0] for b in present], axis=0)
    hi = np.max([b[1] for b in present], axis=0)
    return lo, hi


def _tuple(point) -> Tuple[float, ...]:
    return tuple(float(c) for c in np.atleast_1d(np.asarray(point, dtype=float)))


def ball(center, radius: float) -> DomainSpec:
    center = _tuple(center)
    return DomainSpec(kind="ball", dim=len(center), center=center, radius=float(radius))


def box(lo, hi) -> DomainSpec:
    lo = _tuple(lo)
    return DomainSpec(kind="box", dim=len(lo), lo=lo, hi=_tuple(hi))


def full_space(dim: int) -> DomainSpec:
    return DomainSpec(kind="full_space", dim=dim)


def complement(domain: DomainSpec) -> DomainSpec:
    return DomainSpec(kind="complement", dim=domain.dim, operands=(domain,))


def union(*domains: DomainSpec) -> DomainSpec:
    if not domains:
        raise ValueError("Union needs at least one operand")
    return DomainSpec(kind="union", dim=domains[0].dim, operands=tuple(domains))


def difference(first: DomainSpec, second: DomainSpec) -> DomainSpec:
    return DomainSpec(kind="difference", dim=first.dim, operands=(first, second))


def intersection(first: DomainSpec, second: DomainSpec) -> DomainSpec:
    """Intersection, simplified when an operand is the whole space or both agree."""
    if first == second or second.kind == "full_space":
        return first
    if first.kind == "full_space":
        return second
    return difference(first, complement(second))


def merge_union(first: DomainSpec, second: DomainSpec) -> DomainSpec:
    """Union that collapses identical operands and absorbs into the full space."""
    if first == second:
        return first
    if first.kind == "full_space" or second.kind == "full_space":
        return full_space(first.dim)
    return union(first, second)


def contains(d: DomainSpec, x) -> bool:
    """True iff x lies in the open region d."""
    return d.contains(x)


def distance_to_boundary(d: DomainSpec, x) -> float:
    """Euclidean distance from x (inside d) to the boundary of d."""
    return d.distance_to_boundary(x)


@dataclass(frozen=True)
class InteractionSet:
    """
    The pair (U1, U2) inducing Z = (U1 x U2) u (U2 x U1), together with Omega.

    Attributes:
        u1: First interaction region.
        u2: Second interaction region.
        omega: The domain where the equation is posed.
        name: Preset name (dirichlet, restricted, semirestricted) or general.
    """
    u1: DomainSpec
    u2: DomainSpec
    omega: DomainSpec
    name: str = "general"

    def __post_init__(self):
        """Validate data after initialization."""
        if not (self.u1.dim == self.u2.dim == self.omega.dim):
            raise ValueError("Interaction set regions must share one dimension")

    @property
    def dim(self) -> int:
        return self.omega.dim

    @property
    def union(self) -> DomainSpec:
        """U1 u U2."""
        return merge_union(self.u1, self.u2)

    def contains_pair(self, x, y) -> bool:
        x_in1, x_in2 = self.u1.contains(x), self.u2.contains(x)
        y_in1, y_in2 = self.u1.contains(y), self.u2.contains(y)
        return (x_in1 and y_in2) or (x_in2 and y_in1)

    def pair_mask(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """(len(xs), len(ys)) boolean matrix of Z-membership."""
        x1 = self.u1.contains_points(xs)
        x2 = self.u2.contains_points(xs)
        y1 = self.u1.contains_points(ys)
        y2 = self.u2.contains_points(ys)
        return (x1[:, None] & y2[None, :]) | (x2[:, None] & y1[None, :])

    def far_pairs(self, xs: np.ndarray) -> np.ndarray:
        """Whether each x interacts with points far outside every bounded feature."""
        x1 = self.u1.contains_points(xs)
        x2 = self.u2.contains_points(xs)
        return (x1 & self.u2.is_cobounded) | (x2 & self.u1.is_cobounded)

    def section(self, x) -> Optional[DomainSpec]:
        """The x-section {y : (x, y) in Z}, or None when empty."""
        in1, in2 = self.u1.contains(x), self.u2.contains(x)
        if in1 and in2:
            return self.union
        if in1:
            return self.u2
        if in2:
            return self.u1
        return None

    def validate(self, lattice: "Lattice") -> None:
        """
        Check Omega inside U1 n U2 on the lattice nodes.

        Raises:
            ValueError: If some node of Omega misses U1 or U2
        """
        pts = lattice.points
        in_omega = self.omega.contains_points(pts)
        inside = self.u1.contains_points(pts) & self.u2.contains_points(pts)
        if np.any(in_omega & ~inside):
            raise ValueError("Omega must be contained in U1 and U2")

    def is_subset_of(self, other: "InteractionSet", lattice: "Lattice", block: int = 512) -> bool:
        """Z contained in Z' on all lattice node pairs."""
        pts = lattice.points
        for start in range(0, pts.shape[0], block):
            rows = pts[start:start + block]
            if np.any(self.pair_mask(rows, pts) & ~other.pair_mask(rows, pts)):
                return False
        return not np.any(self.far_pairs(pts) & ~other.far_pairs(pts))

    def rescaled(self, x0, r: float) -> "InteractionSet":
        return InteractionSet(u1=self.u1.rescaled(x0, r), u2=self.u2.rescaled(x0, r),
                              omega=self.omega.rescaled(x0, r), name=self.name)


def dirichlet_preset(omega: DomainSpec) -> InteractionSet:
    """U1 = U2 = R^n: the fractional Laplacian on all of space."""
    whole = full_space(omega.dim)
    return InteractionSet(u1=whole, u2=whole, omega=omega, name="dirichlet")


def restricted_preset(omega: DomainSpec) -> InteractionSet:
    """U1 = U2 = Omega: the regional (restricted Neumann) operator."""
    return InteractionSet(u1=omega, u2=omega, omega=omega, name="restricted")


def semirestricted_preset(omega: DomainSpec) -> InteractionSet:
    """U1 = Omega, U2 = R^n: every pair with at least one point in Omega."""
    return InteractionSet(u1=omega, u2=full_space(omega.dim), omega=omega, name="semirestricted")


PRESETS = {
    "dirichlet": dirichlet_preset,
    "restricted": restricted_preset,
    "semirestricted": semirestricted_preset,
}


def in_interaction_set(z: InteractionSet, x, y) -> bool:
    """True iff (x in U1 and y in U2) or (x in U2 and y in U1)."""
    return z.contains_pair(x, y)


@dataclass(frozen=True, eq=False)
class Lattice:
    """
    Uniform node-centered lattice over a closed bounding box.

    Attributes:
        lo: Lower corner of the box (a node).
        h: Spacing.
        shape: Node count per dimension.
        regions: Named regions whose membership flags are attached to every node.
        far_field: True when the lattice truncates an unbounded region.
    """
    lo: Tuple[float, ...]
    h: float
    shape: Tuple[int, ...]
    regions: Tuple[Tuple[str, DomainSpec], ...] = ()
    far_field: bool = False
    points: np.ndarray = field(init=False, repr=False)
    flags: Dict[str, np.ndarray] = field(init=False, repr=False)
    _cache: Dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        """Validate data after initialization."""
        if not self.h > 0:
            raise ValueError(f"Spacing h must be positive, got {self.h}")
        if len(self.shape) != len(self.lo) or min(self.shape) < 1:
            raise ValueError("Lattice shape must have one positive count per dimension")
        axes = [self.lo[k] + self.h * np.arange(self.shape[k]) for k in range(len(self.shape))]
        grids = np.meshgrid(*axes, indexing="ij")
        points = np.stack([g.reshape(-1) for g in grids], axis=1)
        object.__setattr__(self, "points", points)
        flags = {name: domain.contains_points(points) for name, domain in self.regions}
        omega = dict(self.regions).get("omega")
        if omega is not None:
            flags["boundary_adjacent"] = omega.boundary_distances(points) < 0.5 * self.h * (1 + 1e-9)
        object.__setattr__(self, "flags", flags)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    @property
    def lo_array(self) -> np.ndarray:
        return np.asarray(self.lo, dtype=float)

    @property
    def hi_array(self) -> np.ndarray:
        return self.lo_array + self.h * (np.asarray(self.shape) - 1)

    @property
    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.lo_array, self.hi_array

    def inscribed_distance(self, x) -> float:
        """Distance from x (inside the box) to the box surface."""
        point = np.asarray(x, dtype=float)
        return float(np.min(np.minimum(point - self.lo_array, self.hi_array - point)))

    def in_box(self, points: np.ndarray, slack: float = 1e-9) -> np.ndarray:
        """Closed-box membership."""
        tol = slack * self.h
        return np.all((points >= self.lo_array - tol) & (points <= self.hi_array + tol), axis=-1)

    def try_index(self, x) -> Optional[int]:
        """Flat index of the node at x, or None when x is not a node."""
        point = np.asarray(x, dtype=float)
        steps = (point - self.lo_array) / self.h
        idx = np.rint(steps).astype(int)
        if np.any(np.abs(steps - idx) > 1e-7) or np.any(idx < 0) or np.any(idx >= np.asarray(self.shape)):
            return None
        return int(np.ravel_multi_index(tuple(idx), self.shape))

    def index_of(self, x) -> int:
        """
        Flat index of the node at x.

        Raises:
            ValueError: If x is not a lattice node
        """
        index = self.try_index(x)
        if index is None:
            raise ValueError(f"Point {tuple(np.atleast_1d(x))} is not a lattice point")
        return index

    def indices_of(self, points: np.ndarray) -> np.ndarray:
        """Flat indices for an (M, n) array of points; -1 where not a node."""
        steps = (np.atleast_2d(points) - self.lo_array) / self.h
        idx = np.rint(steps).astype(int)
        ok = np.all(np.abs(steps - idx) <= 1e-7, axis=1)
        ok &= np.all((idx >= 0) & (idx < np.asarray(self.shape)), axis=1)
        flat = np.full(idx.shape[0], -1, dtype=int)
        if np.any(ok):
            flat[ok] = np.ravel_multi_index(tuple(idx[ok].T), self.shape)
        return flat

    def neighbor(self, index: int, axis: int, step: int) -> Optional[int]:
        """Index of the node `step` cells away along `axis`, or None past the box."""
        multi = list(np.unravel_index(index, self.shape))
        multi[axis] += step
        if multi[axis] < 0 or multi[axis] >= self.shape[axis]:
            return None
        return int(np.ravel_multi_index(tuple(multi), self.shape))

    def flag(self, name: str) -> np.ndarray:
        if name not in self.flags:
            raise ValueError(f"Lattice carries no '{name}' flag")
        return self.flags[name]

    def weights(self, domain: DomainSpec, cache: bool = True) -> np.ndarray:
        """
        Fraction of each node's cell lying in the domain and inside the box.

        Nodes away from every boundary get exactly 0 or 1; cells cut by the
        domain boundary or the box surface are sampled on a sub-cell grid.
        """
        if cache and domain in self._cache:
            return self._cache[domain]
        pts = self.points
        frac = domain.contains_points(pts).astype(float)
        near = domain.boundary_distances(pts) < self.h * np.sqrt(self.dim)
        multi = np.stack(np.unravel_index(np.arange(self.size), self.shape), axis=1)
        on_surface = np.any((multi == 0) | (multi == np.asarray(self.shape) - 1), axis=1)
        near |= on_surface
        if np.any(near):
            offsets = ((np.arange(SUBCELL_SAMPLES) + 0.5) / SUBCELL_SAMPLES - 0.5) * self.h
            sub = np.stack(np.meshgrid(*([offsets] * self.dim), indexing="ij"), axis=-1).reshape(-1, self.dim)
            samples = (pts[near][:, None, :] + sub[None, :, :]).reshape(-1, self.dim)
            inside = domain.contains_points(samples) & self.in_box(samples, slack=0.0)
            frac[near] = inside.reshape(-1, sub.shape[0]).mean(axis=1)
        if cache:
            self._cache[domain] = frac
        return frac

    def box_weights(self) -> np.ndarray:
        """Fraction of each cell inside the lattice box (1/2 on faces, 1/4 on edges ...)."""
        return self.weights(full_space(self.dim))

    def covers(self, domain: DomainSpec) -> bool:
        """True iff the closed box holds every finite feature of the domain."""
        core = domain.core_box()
        if core is None:
            return True
        tol = 1e-9 * self.h
        return bool(np.all(core[0] >= self.lo_array - tol) and np.all(core[1] <= self.hi_array + tol))

    def coarsen(self) -> "Lattice":
        """Every other node: the same box origin with spacing 2h."""
        shape = tuple((m - 1) // 2 + 1 for m in self.shape)
        return Lattice(lo=self.lo, h=2.0 * self.h, shape=shape, regions=self.regions, far_field=self.far_field)

    def coarse_indices(self) -> np.ndarray:
        """Flat indices (on this lattice) of the nodes kept by coarsen()."""
        shape = tuple((m - 1) // 2 + 1 for m in self.shape)
        slices = tuple(slice(0, 2 * (m - 1) + 1, 2) for m in shape)
        return np.arange(self.size).reshape(self.shape)[slices].reshape(-1)

    def rescaled(self, x0, r: float) -> "Lattice":
        """The same nodes in coordinates y -> (y - x0) / r."""
        origin = np.asarray(x0, dtype=float)
        lo = tuple((self.lo_array - origin) / r)
        regions = tuple((name, domain.rescaled(origin, r)) for name, domain in self.regions)
        return Lattice(lo=lo, h=self.h / r, shape=self.shape, regions=regions, far_field=self.far_field)


def build_grid(d: DomainSpec, h: float, halo: float = 0.0,
               truncation: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
               interaction: Optional[InteractionSet] = None,
               g: Optional[DomainSpec] = None) -> Lattice:
    """
    Build a node-centered lattice covering d plus a halo.

    Args:
        d: Region to cover
        h: Spacing
        halo: Extra margin added on every side
        truncation: Explicit box (lo, hi); required for regions without a finite core
        interaction: Supplies Omega, U1 and U2 flags (otherwise d is used for all three)
        g: Optional subregion G flagged on every node

    Returns:
        Lattice: The lattice with region flags populated

    Raises:
        ValueError: If h is not positive or an unbounded region has no truncation box
    """
    if not h > 0:
        raise ValueError(f"Spacing h must be positive, got {h}")
    if truncation is not None:
        lo = np.asarray(truncation[0], dtype=float).reshape(-1)
        hi = np.asarray(truncation[1], dtype=float).reshape(-1)
        if lo.shape[0] != d.dim or hi.shape[0] != d.dim or np.any(lo >= hi):
            raise ValueError("Truncation box must satisfy lo < hi in every dimension")
    else:
        core = d.core_box() if d.is_bounded else None
        if core is None:
            raise ValueError(f"Unbounded {d.kind} domain needs an explicit truncation box")
        lo, hi = core
    lo = lo - halo
    hi = hi + halo
    counts = tuple(int(np.ceil((b - a) / h - 1e-9)) + 1 for a, b in zip(lo, hi))
    # odd counts keep the box unchanged under coarsening
    counts = tuple(c if c % 2 == 1 else c + 1 for c in counts)
    regions = [("omega", interaction.omega if interaction else d),
               ("u1", interaction.u1 if interaction else d),
               ("u2", interaction.u2 if interaction else d)]
    if g is not None:
        regions.append(("g", g))
    lattice = Lattice(lo=tuple(float(a) for a in lo), h=float(h), shape=counts,
                      regions=tuple(regions), far_field=not d.is_bounded)
    logger.debug("Built lattice with %d nodes, shape %s, h=%g", lattice.size, counts, h)
    return lattice
