"""
Monte Carlo simulation of symmetric 2s-stable jump processes.

Paths are compound Poisson processes of the jumps longer than a cutoff delta:
jumps arrive at rate C_{n,s} |S^{n-1}| delta^(-2s) / (2s), have Pareto lengths
delta U^(-1/(2s)) and uniform directions. The shorter jumps have zero mean
and are skipped. The three rules decide what happens to a jump landing
outside Omega, mirroring which pairs belong to the interaction set.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import NumericalError
from .forms import killing_measure
from .geometry import DomainSpec, dirichlet_preset
from .grid_function import GridFunction
from .quadrature import FracParams, sphere_area

logger = logging.getLogger(__name__)

PROCESS_KINDS = ("killed", "censored", "semirestricted")
HISTOGRAM_BINS = 20
TRUNCATION_LIMIT = 0.01


def sample_stable_increment(alpha: float, dt: float, rng: np.random.Generator, n: int = 1,
                            size: Optional[int] = None) -> np.ndarray:
    """
    Increment over time dt of the standard symmetric alpha-stable process,
    whose characteristic function is exp(-dt |xi|^alpha).

    One dimension uses the Chambers-Mallows-Stuck formula. In higher dimensions
    the isotropic law is sampled as sqrt(2A) G with G standard normal and A
    positive (alpha/2)-stable with Laplace transform exp(-lambda^(alpha/2)),
    drawn by Kanter's formula.

    Returns:
        np.ndarray: Shape (n,) for a single draw, (size, n) otherwise

    Raises:
        ValueError: If alpha is outside (0, 2) or dt is not positive
    """
    if not 0 < alpha < 2:
        raise ValueError(f"Stability index must lie in (0, 2), got {alpha}")
    if not dt > 0:
        raise ValueError(f"Time step must be positive, got {dt}")
    count = 1 if size is None else int(size)
    if n == 1:
        v = rng.uniform(-np.pi / 2, np.pi / 2, count)
        w = rng.exponential(1.0, count)
        if alpha == 1.0:
            x = np.tan(v)
        else:
            x = (np.sin(alpha * v) / np.cos(v) ** (1.0 / alpha)
                 * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha))
        draws = x[:, None]
    else:
        a = alpha / 2.0
        u = rng.uniform(0.0, np.pi, count)
        w = rng.exponential(1.0, count)
        kernel = (np.sin(a * u) / np.sin(u)) ** (1.0 / (1.0 - a)) * np.sin((1.0 - a) * u) / np.sin(a * u)
        positive = (kernel / w) ** ((1.0 - a) / a)
        draws = np.sqrt(2.0 * positive)[:, None] * rng.standard_normal((count, n))
    draws = dt ** (1.0 / alpha) * draws
    return draws[0] if size is None else draws


@dataclass(frozen=True)
class JumpProcessConfig:
    """
    Attributes:
        kind: killed, censored or semirestricted
        omega: Domain of the process
        alpha: Stability index 2s
        x_start: Starting point (in Omega, except for the semirestricted rule)
        horizon: Time horizon (may be infinite for the killed rule)
        max_jumps: Paths making more proposals are flagged truncated
        seed: Master seed; path i uses the i-th spawned stream
        h: Lattice spacing; the small-jump cutoff is h/2
        record_jumps: Keep the per-jump log
    """
    kind: str
    omega: DomainSpec
    alpha: float
    x_start: Tuple[float, ...]
    horizon: float = 1.0
    max_jumps: int = 100000
    seed: int = 0
    h: float = 1.0 / 64
    record_jumps: bool = False

    def __post_init__(self):
        """Validate data after initialization."""
        if self.kind not in PROCESS_KINDS:
            raise ValueError(f"Unknown process kind: {self.kind}")
        if not 0 < self.alpha < 2:
            raise ValueError(f"Stability index must lie in (0, 2), got {self.alpha}")
        if not self.horizon > 0:
            raise ValueError(f"Horizon must be positive, got {self.horizon}")
        if math.isinf(self.horizon) and self.kind != "killed":
            raise ValueError("Only killed processes may run without a horizon")
        if int(self.max_jumps) != self.max_jumps or self.max_jumps < 1:
            raise ValueError(f"max_jumps must be a positive integer, got {self.max_jumps}")
        if not self.h > 0:
            raise ValueError(f"Spacing h must be positive, got {self.h}")
        start = tuple(float(c) for c in np.atleast_1d(self.x_start))
        object.__setattr__(self, "x_start", start)
        if len(start) != self.omega.dim:
            raise ValueError("Starting point dimension does not match Omega")
        if self.kind != "semirestricted" and not self.omega.contains(np.asarray(start)):
            raise ValueError(f"Starting point {start} is outside Omega")

    @property
    def s(self) -> float:
        return self.alpha / 2.0

    @property
    def cutoff(self) -> float:
        return self.h / 2.0


@dataclass
class PathEnsembleStats:
    """
    Attributes:
        n_paths: Number of paths
        killed_fraction, killed_stderr: Share of paths killed before the horizon
        mean_exit_time, exit_time_stderr: First exit from Omega, over paths that exit
        occupation_time, occupation_stderr: Mean time spent in Omega before the horizon or death
        exit_histogram: Counts and bin edges of the first coordinate of exit points
        rejections: Suppressed jumps per rule
        truncated: Paths stopped by max_jumps (or, without a horizon, never exiting)
        exit_points: First exit location per path (NaN when it never exits)
        occupation_times: Occupation time per path
        jump_log: (path_id, t, from, to, accepted, rule) rows when recorded
    """
    n_paths: int
    killed_fraction: float
    killed_stderr: float
    mean_exit_time: float
    exit_time_stderr: float
    occupation_time: float
    occupation_stderr: float
    exit_histogram: Dict[str, list]
    rejections: Dict[str, int]
    truncated: int
    exit_points: np.ndarray = field(repr=False, default=None)
    occupation_times: np.ndarray = field(repr=False, default=None)
    jump_log: List[tuple] = field(repr=False, default_factory=list)

    def to_dict(self):
        return {"n_paths": self.n_paths,
                "killed_fraction": {"value": self.killed_fraction, "stderr": self.killed_stderr},
                "mean_exit_time": {"value": self.mean_exit_time, "stderr": self.exit_time_stderr},
                "occupation_time": {"value": self.occupation_time, "stderr": self.occupation_stderr},
                "exit_histogram": self.exit_histogram, "rejections": self.rejections,
                "truncated": self.truncated}


def jump_rate(n: int, s: float, cutoff: float) -> float:
    """Levy measure mass C_{n,s} |S^{n-1}| cutoff^(-2s) / (2s) of jumps longer than cutoff."""
    return FracParams(n, s).c_ns * sphere_area(n) * cutoff ** (-2 * s) / (2 * s)


def _propose_jumps(rng: np.random.Generator, n: int, s: float, cutoff: float, count: int) -> np.ndarray:
    lengths = cutoff * rng.uniform(0.0, 1.0, count) ** (-1.0 / (2 * s))
    if n == 1:
        directions = rng.choice([-1.0, 1.0], size=(count, 1))
    else:
        directions = rng.standard_normal((count, n))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return lengths[:, None] * directions


def _mean_stderr(samples: np.ndarray) -> Tuple[float, float]:
    if samples.size == 0:
        return float("nan"), float("nan")
    if samples.size == 1:
        return float(samples[0]), 0.0
    return float(np.mean(samples)), float(np.std(samples, ddof=1) / math.sqrt(samples.size))


def _run_path(cfg: JumpProcessConfig, rng: np.random.Generator, rate: float, path_id: int,
              log: Optional[list]) -> Tuple[bool, float, Optional[np.ndarray], float, int, bool]:
    """(killed, exit time, exit point, occupation, rejections, truncated) of one path."""
    n = cfg.omega.dim
    x = np.asarray(cfg.x_start, dtype=float)
    inside = cfg.omega.contains(x)
    t = 0.0
    occupation = 0.0
    exit_time = math.inf
    exit_point = None
    rejected = 0
    for _ in range(cfg.max_jumps):
        wait = rng.exponential(1.0 / rate)
        jump = _propose_jumps(rng, n, cfg.s, cfg.cutoff, 1)[0]
        if t + wait >= cfg.horizon:
            occupation += (cfg.horizon - t) if inside else 0.0
            return False, exit_time, exit_point, occupation, rejected, False
        occupation += wait if inside else 0.0
        t += wait
        y = x + jump
        landing = cfg.omega.contains(y)
        if cfg.kind == "killed":
            accepted = landing
        elif cfg.kind == "censored":
            accepted = landing
        else:
            accepted = inside or landing
        if log is not None:
            log.append((path_id, t, tuple(x), tuple(y), accepted, cfg.kind))
        if cfg.kind == "killed" and not landing:
            return True, t, y, occupation, rejected, False
        if not accepted:
            rejected += 1
            continue
        if inside and not landing and exit_point is None:
            exit_time, exit_point = t, y
        x = y
        inside = landing
    return False, exit_time, exit_point, occupation, rejected, True


def simulate(cfg: JumpProcessConfig, n_paths: int) -> PathEnsembleStats:
    """
    Simulate n_paths independent paths.

    Killed paths die at the first jump landing outside Omega. Censored paths
    have those jumps suppressed (time still advances). Semirestricted paths
    jump freely from Omega, and from outside Omega only into Omega.

    Raises:
        ValueError: If n_paths is not positive
    """
    if int(n_paths) != n_paths or n_paths < 1:
        raise ValueError(f"Path count must be a positive integer, got {n_paths}")
    rate = jump_rate(cfg.omega.dim, cfg.s, cfg.cutoff)
    streams = np.random.SeedSequence(cfg.seed).spawn(int(n_paths))
    log = [] if cfg.record_jumps else None
    killed = np.zeros(n_paths, dtype=bool)
    exit_times = np.full(n_paths, np.inf)
    exit_points = np.full((n_paths, cfg.omega.dim), np.nan)
    occupation = np.zeros(n_paths)
    rejections = 0
    truncated = 0
    for i, stream in enumerate(streams):
        result = _run_path(cfg, np.random.default_rng(stream), rate, i, log)
        killed[i], exit_times[i] = result[0], result[1]
        if result[2] is not None:
            exit_points[i] = result[2]
        occupation[i] = result[3]
        rejections += result[4]
        truncated += int(result[5])
    exited = np.isfinite(exit_times)
    if math.isinf(cfg.horizon):
        truncated += int(np.sum(~exited & ~killed))
    fraction = float(np.mean(killed))
    counts, edges = np.histogram(exit_points[exited, 0], bins=HISTOGRAM_BINS) if np.any(exited) else (np.zeros(0), np.zeros(0))
    mean_exit, exit_stderr = _mean_stderr(exit_times[exited])
    mean_occupation, occupation_stderr = _mean_stderr(occupation[np.isfinite(occupation)])
    logger.debug("Simulated %d %s paths: %d exits, %d truncated", n_paths, cfg.kind, int(np.sum(exited)), truncated)
    return PathEnsembleStats(
        n_paths=int(n_paths),
        killed_fraction=fraction,
        killed_stderr=math.sqrt(fraction * (1 - fraction) / n_paths),
        mean_exit_time=mean_exit,
        exit_time_stderr=exit_stderr,
        occupation_time=mean_occupation,
        occupation_stderr=occupation_stderr,
        exit_histogram={"counts": [int(c) for c in counts], "edges": [float(e) for e in edges]},
        rejections={cfg.kind: int(rejections)},
        truncated=truncated,
        exit_points=exit_points,
        occupation_times=occupation,
        jump_log=log or [],
    )


@dataclass(frozen=True)
class RateComparison:
    """Monte Carlo killing rate with its standard error, and the quadrature value."""
    mc_rate: float
    mc_stderr: float
    quadrature_rate: float

    def to_dict(self):
        return {"mc_rate": {"value": self.mc_rate, "stderr": self.mc_stderr},
                "quadrature_rate": self.quadrature_rate}


def killing_rate_crosscheck(x, g: DomainSpec, p: FracParams, n_samples: int, seed: int = 0,
                            h: Optional[float] = None) -> RateComparison:
    """
    Levy-measure mass of the complement of G seen from x, by sampling jumps
    longer than half the distance to the boundary, against killing_measure.

    Raises:
        ValueError: If x is outside G or within 2h of its boundary
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if not g.contains(x):
        raise ValueError(f"Point {tuple(x)} is outside G")
    if g.kind == "full_space":
        return RateComparison(0.0, 0.0, 0.0)
    distance = g.distance_to_boundary(x)
    if h is None:
        lo, hi = g.core_box()
        h = float(np.min(hi - lo)) / 128
    if distance < 2 * h:
        raise ValueError(f"Point {tuple(x)} is boundary-adjacent")
    cutoff = 0.5 * distance
    rng = np.random.default_rng(seed)
    landing = x + _propose_jumps(rng, p.n, p.s, cutoff, int(n_samples))
    outside = ~g.contains_points(landing)
    rate = jump_rate(p.n, p.s, cutoff)
    fraction = float(np.mean(outside))
    stderr = rate * math.sqrt(fraction * (1 - fraction) / n_samples)
    quadrature = killing_measure(x, g, dirichlet_preset(g), p, h=h)
    return RateComparison(rate * fraction, stderr, quadrature)


@dataclass(frozen=True)
class HarmonicMeanResult:
    """Mean of u at the exit points against u at the start."""
    discrepancy: float
    stderr: float
    mean: float
    start_value: float

    def to_dict(self):
        return {"discrepancy": self.discrepancy, "stderr": self.stderr, "mean": self.mean,
                "start_value": self.start_value}


def harmonic_mean_check(u: GridFunction, cfg: JumpProcessConfig, n_paths: int) -> HarmonicMeanResult:
    """
    |E u(exit point) - u(x_start)| for a killed process and u s-harmonic in Omega.

    Raises:
        ValueError: If the process is not killed
        NumericalError: If more than 1% of the paths are truncated
    """
    if cfg.kind != "killed":
        raise ValueError("Harmonic mean check needs a killed process")
    stats = simulate(cfg, n_paths)
    exited = np.all(np.isfinite(stats.exit_points), axis=1)
    missing = n_paths - int(np.sum(exited))
    if missing > TRUNCATION_LIMIT * n_paths:
        raise NumericalError(f"{missing} of {n_paths} paths did not exit; raise the horizon or max_jumps")
    values = u.interpolate(stats.exit_points[exited])
    mean, stderr = _mean_stderr(values)
    start = float(u.interpolate(np.asarray(cfg.x_start)[None, :])[0])
    return HarmonicMeanResult(discrepancy=abs(mean - start), stderr=stderr, mean=mean, start_value=start)
