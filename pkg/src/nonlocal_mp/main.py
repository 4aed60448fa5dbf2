#!/usr/bin/env python3
"""
nonlocal-mp command line.

Each subcommand reads an experiment (INI or JSON, see experiment.py), runs
one check and writes a canonical JSON file plus CSV lattice tables to the
output directory.
"""

import argparse
import logging
import sys
from datetime import date
from typing import Callable, Dict, List, Optional

import numpy as np
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn

from nonlocal_mp import __version__
from nonlocal_mp.barrier import build_barrier, verify_barrier, z_monotonicity_defect
from nonlocal_mp.config_manager import ConfigManager
from nonlocal_mp.degiorgi import (caccioppoli_gap, caccioppoli_pairs, calibrate_c_hat, calibrate_sobolev_constant,
                                  calibration_setup, degiorgi_bound, subsolution_family)
from nonlocal_mp.errors import ConfigError, PropertyViolation, exit_code_for
from nonlocal_mp.experiment import COMMANDS, ExperimentConfig, build_function, load_experiment
from nonlocal_mp.forms import energy, energy_decomposition_residual, killing_measure, killing_measure_field, relative_tail
from nonlocal_mp.geometry import (PRESETS, DomainSpec, InteractionSet, Lattice, ball, build_grid, difference,
                                  full_space, merge_union)
from nonlocal_mp.grid_function import GridFunction
from nonlocal_mp.levy import JumpProcessConfig, harmonic_mean_check, killing_rate_crosscheck, simulate
from nonlocal_mp.operators import OperatorKind, admissible_nodes, evaluate_on_lattice, spectral_1d
from nonlocal_mp.quadrature import FracParams, QuadratureScheme
from nonlocal_mp.reports import ReportGenerator, canonical, summary_table
from nonlocal_mp.smp import build_counterexample, corollary_reports, smp_report

logger = logging.getLogger("nonlocal_mp")

DECOMPOSITION_BUDGET_FACTOR = 5.0
MC_STDERR_FACTOR = 3.0


def configure_logging(quiet: bool = False, verbose: bool = False, console: Optional[Console] = None) -> None:
    """Route the package logger through a rich handler."""
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    root = logging.getLogger("nonlocal_mp")
    root.handlers = [RichHandler(console=console, show_path=False, markup=False)]
    root.setLevel(level)
    root.propagate = False


def _experiment_header(cfg: ExperimentConfig) -> dict:
    return {"command": cfg.command, "n": cfg.n, "s": cfg.s, "h": cfg.h, "seed": cfg.seed}


class NonlocalMPCLI:
    """Command-line interface for nonlocal-mp."""

    def __init__(self, args: argparse.Namespace, console: Optional[Console] = None):
        """Initialize the CLI application."""
        self.console = console or Console()
        self.args = args
        self.config_manager = ConfigManager()
        if args.config:
            cfg = load_experiment(args.config, args.command)
        else:
            cfg = ExperimentConfig(command=args.command)
        self.cfg = cfg.with_overrides(seed=args.seed, h=args.h, output=args.out)
        output_dir = self.cfg.output or f"{self.config_manager.config.output_dir}/{args.command}"
        self.report_generator = ReportGenerator(output_dir)
        self.threads = self.config_manager.threads()
        self.handlers: Dict[str, Callable[[], dict]] = {
            "eval-op": self.eval_op,
            "energy": self.energy,
            "tail": self.tail,
            "killing-measure": self.killing_measure,
            "decomposition-check": self.decomposition_check,
            "caccioppoli-sweep": self.caccioppoli_sweep,
            "degiorgi": self.degiorgi,
            "barrier": self.barrier,
            "verify-mp": self.verify_mp,
            "counterexample": self.counterexample,
            "mc-crosscheck": self.mc_crosscheck,
            "calibrate-constants": self.calibrate_constants,
        }
        self.violations: List[str] = []

    def display_welcome(self, extra: str = "") -> None:
        """Display the start-up panel."""
        text = f"nonlocal-mp {__version__}: {self.cfg.command}\n[italic grey37]{extra}[/italic grey37]"
        self.console.print(Panel(text, title="nonlocal-mp", border_style="green", expand=False))

    # Shared builders

    @property
    def q(self) -> QuadratureScheme:
        return self.cfg.quadrature

    @property
    def p(self):
        return self.cfg.frac_params

    def omega(self) -> DomainSpec:
        """Omega from the experiment, the unit ball about the origin otherwise."""
        return self.cfg.omega if self.cfg.omega is not None else ball(np.zeros(self.cfg.n), 1.0)

    def z(self) -> InteractionSet:
        if self.cfg.interaction is not None:
            return self.cfg.interaction
        return PRESETS["dirichlet"](self.omega())

    def g(self) -> DomainSpec:
        return self.cfg.g if self.cfg.g is not None else self.omega()

    def default_halo(self) -> float:
        if self.cfg.halo is not None:
            return self.cfg.halo
        return (self.q.near_steps(self.cfg.h) + 2) * self.cfg.h

    def lattice(self, region: DomainSpec, z: Optional[InteractionSet] = None, g: Optional[DomainSpec] = None,
                h: Optional[float] = None) -> Lattice:
        """
        Lattice over region plus the halo; unbounded regions need
        truncation_lo and truncation_hi in [params].
        """
        h = self.cfg.h if h is None else h
        truncation = None
        if not region.is_bounded:
            if "truncation_lo" not in self.cfg.params:
                raise ConfigError("Unbounded regions need truncation_lo and truncation_hi in [params]")
            truncation = (self.cfg.param_point("truncation_lo"), self.cfg.param_point("truncation_hi"))
        return build_grid(region, h, halo=self.default_halo(), truncation=truncation, interaction=z, g=g)

    def center(self, region: DomainSpec) -> np.ndarray:
        core = region.core_box()
        return np.zeros(self.cfg.n) if core is None else 0.5 * (core[0] + core[1])

    def check(self, ok: bool, message: str) -> None:
        if not ok:
            self.violations.append(message)

    # Commands

    def eval_op(self) -> dict:
        """Pointwise operator values on the admissible nodes of Omega."""
        omega = self.omega()
        z = self.z()
        default_tag = "general" if self.cfg.interaction is not None else "dirichlet"
        tag = self.cfg.param_str("operator", default_tag)
        lattice = self.lattice(omega, z)
        u = build_function(self.cfg, lattice)
        if tag.startswith("spectral"):
            bc = "dirichlet" if tag == "spectral_dirichlet_1d" else "neumann"
            modes = self.cfg.param_int("modes", lattice.size - 2 if bc == "dirichlet" else lattice.size)
            values = spectral_1d(u, bc, self.cfg.s, modes).values
            nodes = np.arange(lattice.size)
            errors = np.zeros(lattice.size)
        else:
            kind = OperatorKind(tag, omega=omega, interaction=z)
            operator = kind.pointwise()
            coarse_q = QuadratureScheme(delta=2 * self.q.cutoff(lattice.h), truncation_radius=self.q.truncation_radius,
                                        correction_mode=self.q.correction_mode)
            nodes = admissible_nodes(lattice, omega, coarse_q)
            if nodes.size == 0:
                raise ValueError("Omega has no admissible lattice nodes at this spacing")
            values = evaluate_on_lattice(u, operator, self.p, self.q, nodes, self.threads)
            errors = np.abs(values - evaluate_on_lattice(u, operator, self.p, coarse_q, nodes, self.threads))
        csv = self.report_generator.write_lattice_csv(lattice.points[nodes], values, errors, name="eval-op")
        return {"operator": tag, "nodes": int(nodes.size), "max_value": float(np.max(values)),
                "min_value": float(np.min(values)), "max_error_estimate": float(np.max(errors)), "csv": csv}

    def energy(self) -> dict:
        """E(u; (A x B) n Z) with A, B named by region_a and region_b."""
        omega = self.omega()
        z = self.z()
        lattice = self.lattice(omega, z)
        u = build_function(self.cfg, lattice)
        region_a = self.cfg.domain(self.cfg.param_str("region_a", "full_space"))
        region_b = self.cfg.domain(self.cfg.param_str("region_b", "full_space"))
        use_z = self.cfg.param_bool("use_z", True)
        value = energy(u, region_a, region_b, z if use_z else None, self.p)
        return {"energy": value.to_dict(), "interaction": z.name if use_z else "none"}

    def tail(self) -> dict:
        """Relative nonlocal tail of u+ outside B_r(x0)."""
        x0 = self.cfg.param_point("x0", self.center(self.omega()))
        r = self.cfg.param_float("r", 1.0)
        z = self.z()
        lattice = self.lattice(merge_union(self.omega(), ball(x0, r)), z)
        u = build_function(self.cfg, lattice)
        return {"x0": x0, "r": r, "tail": relative_tail(u, x0, r, z, self.p)}

    def killing_measure(self) -> dict:
        """Relative killing measure at x, or on every node of G."""
        g = self.g()
        z = self.z()
        if "x" in self.cfg.params:
            x = self.cfg.param_point("x")
            return {"x": x, "killing_measure": killing_measure(x, g, z, self.p, h=self.cfg.h)}
        union = z.union
        region = union if union.is_bounded else g
        lattice = self.lattice(region, z, g)
        values = killing_measure_field(lattice, g, z, self.p)
        nodes = np.flatnonzero(values > 0)
        csv = self.report_generator.write_lattice_csv(lattice.points[nodes], values[nodes], name="killing-measure")
        return {"nodes": int(nodes.size), "min_value": float(np.min(values[nodes])) if nodes.size else 0.0,
                "max_value": float(np.max(values[nodes])) if nodes.size else 0.0, "csv": csv}

    def decomposition_check(self) -> dict:
        """Energy decomposition residual at h and h/2 against the error budget."""
        g = self.g()
        z = self.z()
        whole = full_space(self.cfg.n)
        residuals = []
        budget = 0.0
        for h in (self.cfg.h, self.cfg.h / 2):
            lattice = self.lattice(g, z, g, h=h)
            u = build_function(self.cfg, lattice)
            residuals.append(energy_decomposition_residual(u, g, z, self.p))
            budget = energy(u, whole, whole, z, self.p).error_estimate + energy(u, g, g, None, self.p).error_estimate
        coarse, fine = residuals
        ratio = abs(coarse) / abs(fine) if fine != 0 else float("inf")
        ok = abs(fine) <= DECOMPOSITION_BUDGET_FACTOR * budget + 1e-14
        self.check(ok, f"Decomposition residual {fine:.3g} exceeds {DECOMPOSITION_BUDGET_FACTOR:g} x budget {budget:.3g}")
        return {"residual": fine, "residual_coarse": coarse, "refinement_ratio": ratio,
                "error_budget": budget, "within_budget": ok}

    def _presets(self) -> Dict[str, InteractionSet]:
        if self.cfg.interaction is not None:
            return {self.cfg.interaction.name: self.cfg.interaction}
        names = self.cfg.param_list("presets", list(PRESETS))
        unknown = [name for name in names if name not in PRESETS]
        if unknown:
            raise ValueError(f"Unknown presets: {', '.join(unknown)}")
        return {name: PRESETS[name](self.omega()) for name in names}

    def caccioppoli_sweep(self) -> dict:
        """Caccioppoli gaps over random (w, phi) pairs for each interaction set."""
        g = self.g()
        count = self.cfg.param_int("count", 50)
        results = {}
        for name, z in self._presets().items():
            lattice = self.lattice(merge_union(self.omega(), g), z, g)
            failures = 0
            worst = float("inf")
            for w, phi in caccioppoli_pairs(lattice, g, count, self.cfg.seed):
                gap, error = caccioppoli_gap(w, phi, g, z, self.p, with_error=True)
                failures += int(gap < -error - 1e-12)
                worst = min(worst, gap + error)
            results[name] = {"pairs": count, "failures": failures, "min_gap_plus_budget": worst}
            self.check(failures == 0, f"Caccioppoli gap below its error budget for {failures} pair(s) under {name}")
        return {"presets": results}

    def degiorgi(self) -> dict:
        """Sup bounds for the given subsolution or a held-out boundary-load family."""
        n = self.cfg.n
        if "c_hat" in self.cfg.params:
            c_hat = self.cfg.param_float("c_hat")
        else:
            c_hat = float(self.constants(n, self.cfg.s)["c_hat"])
        jmax = self.cfg.param_int("jmax", 20)
        if self.cfg.function:
            x0 = self.cfg.param_point("x0", np.zeros(n))
            r = self.cfg.param_float("r", 1.0)
            omega = self.cfg.omega if self.cfg.omega is not None else ball(x0, 2 * r + self.cfg.h)
            z = PRESETS["dirichlet"](omega) if self.cfg.interaction is None else self.cfg.interaction
            lattice = self.lattice(merge_union(omega, ball(x0, 2 * r)), z)
            members = [("function", build_function(self.cfg, lattice))]
            bumps = None
        else:
            # held out from the calibration family, which uses the configured seed
            x0, r = np.zeros(n), 1.0
            family = subsolution_family(self.cfg.seed + 1, self.cfg.param_int("count", 20), n)
            z, built = calibration_setup(family, self.p, self.cfg.h, self.q)
            members = [(f"load_{i}", u) for i, u in enumerate(built)]
            bumps = ()
        traces = {}
        for name, u in members:
            trace = degiorgi_bound(u, x0, r, z, self.p, c_hat, bumps=bumps, jmax=jmax, threads=self.threads)
            traces[name] = trace.to_dict()
            self.check(trace.bound_ok, f"{name}: sup {trace.sup_value:.6g} exceeds bound {trace.bound:.6g}")
            self.check(all(trace.induction_ok), f"{name}: induction flags fail")
            self.check(all(trace.tww_ok) and all(trace.tww0_ok), f"{name}: pointwise level relations fail")
        return {"c_hat": c_hat, "x0": x0, "r": r, "traces": traces}

    def barrier(self) -> dict:
        """Build the annular barrier and check it under the three presets."""
        n = self.cfg.n
        x0 = self.cfg.param_point("x0", np.zeros(n))
        r = self.cfg.param_float("r", 0.25)
        R = self.cfg.param_float("R", 1.0)
        phi = build_barrier(x0, r, R, self.p, self.q, h=self.cfg.h)
        outer = ball(x0, R)
        presets = {name: preset(outer) for name, preset in PRESETS.items()}
        reports = {}
        for name, z in presets.items():
            report = verify_barrier(phi, x0, r, R, z, self.p, self.q, self.threads)
            reports[name] = report.to_dict()
            self.check(report.data_ok, f"Barrier data fail under {name}")
        rng = np.random.default_rng(self.cfg.seed)
        width = (R - r) / 8
        defects = []
        for _ in range(self.cfg.param_int("bumps", 10)):
            direction = rng.normal(size=n)
            direction /= np.linalg.norm(direction)
            center = x0 + float(rng.uniform(r + width, R - 2 * width)) * direction
            bump = GridFunction.bump(phi.lattice, center, width)
            for small, large in (("restricted", "semirestricted"), ("semirestricted", "dirichlet")):
                defect, error = z_monotonicity_defect(phi, presets[small], presets[large], bump, self.p, with_error=True)
                defects.append({"pair": f"{small}<{large}", "defect": defect, "error_estimate": error})
                self.check(defect >= -error - 1e-12, f"Negative monotonicity defect {defect:.3g} for {small}<{large}")
        csv = self.report_generator.write_lattice_csv(phi.lattice.points, phi.values, name="barrier")
        return {"x0": x0, "r": r, "R": R, "reports": reports, "monotonicity": defects, "csv": csv}

    def verify_mp(self) -> dict:
        """Strong maximum principle report for u on Omega."""
        omega = self.omega()
        z = self.z()
        lattice = self.lattice(omega, z)
        u = build_function(self.cfg, lattice)
        center = self.center(omega)
        k_center = self.cfg.param_point("k_center", center)
        k_radius = self.cfg.param_float("k_radius", 0.5 * omega.distance_to_boundary(center))
        compact_k = ball(k_center, k_radius)
        report = smp_report(u, omega, z, compact_k, self.p, threads=self.threads)
        results = {"report": report.to_dict(), "interaction": z.name}
        self.check(report.verdict != "violation_found", f"Maximum principle violated under {z.name}")
        if self.cfg.param_bool("corollaries", False):
            reports = corollary_reports(u, omega, compact_k, self.p, threads=self.threads)
            results["corollaries"] = {name: rep.to_dict() for name, rep in reports.items()}
            for name, rep in reports.items():
                self.check(rep.verdict != "violation_found", f"Maximum principle violated under {name}")
        return results

    def counterexample(self) -> dict:
        """A supersolution with an interior minimum over Omega."""
        omega = self.omega()
        result = build_counterexample(omega, self.p, self.q, h=self.cfg.h, threads=self.threads)
        self.check(result.min_residual >= 0, f"Dented function has residual {result.min_residual:.3g} < 0")
        for report in (result.report, result.semirestricted_report):
            self.check(report.verdict != "violation_found", "Counterexample violates the full-space conclusion")
        csv = self.report_generator.write_lattice_csv(result.f.lattice.points, result.f.values, name="counterexample")
        return {**result.to_dict(), "csv": csv}

    def mc_crosscheck(self) -> dict:
        """Monte Carlo against quadrature: killing rates, harmonic means or path statistics."""
        mode = self.cfg.param_str("mode", "killing")
        if mode == "killing":
            g = self.g()
            x = self.cfg.param_point("x", self.center(g))
            n_samples = self.cfg.param_int("n_samples", 100000)
            comparison = killing_rate_crosscheck(x, g, self.p, n_samples, self.cfg.seed)
            agree = abs(comparison.mc_rate - comparison.quadrature_rate) <= MC_STDERR_FACTOR * comparison.mc_stderr + 1e-12
            return {"quadrature": {"x": x, "rate": comparison.quadrature_rate},
                    "monte_carlo": {"rate": comparison.mc_rate, "stderr": comparison.mc_stderr,
                                    "n_samples": n_samples, "within_3_stderr": agree}}
        if mode == "harmonic":
            n = self.cfg.n
            x0 = self.cfg.param_point("x0", np.zeros(n))
            r = self.cfg.param_float("r", 0.25)
            R = self.cfg.param_float("R", 1.0)
            phi = build_barrier(x0, r, R, self.p, self.q, h=self.cfg.h)
            start = x0.copy()
            start[0] += 0.5 * (r + R)
            process = JumpProcessConfig(kind="killed", omega=difference(ball(x0, R), ball(x0, r)),
                                        alpha=2 * self.cfg.s, x_start=tuple(start), horizon=float("inf"),
                                        max_jumps=self.cfg.param_int("max_jumps", 100000), seed=self.cfg.seed,
                                        h=phi.lattice.h)
            check = harmonic_mean_check(phi, process, self.cfg.param_int("n_paths", 10000))
            return {"quadrature": {"start_value": check.start_value},
                    "monte_carlo": {"mean": check.mean, "discrepancy": check.discrepancy, "stderr": check.stderr}}
        if mode == "simulate":
            omega = self.omega()
            process = JumpProcessConfig(kind=self.cfg.param_str("kind", "killed"), omega=omega, alpha=2 * self.cfg.s,
                                        x_start=tuple(self.cfg.param_point("x_start", self.center(omega))),
                                        horizon=self.cfg.param_float("horizon", 1.0),
                                        max_jumps=self.cfg.param_int("max_jumps", 100000), seed=self.cfg.seed,
                                        h=self.cfg.h, record_jumps=self.cfg.param_bool("record_jumps", False))
            stats = simulate(process, self.cfg.param_int("n_paths", 1000))
            results = {"monte_carlo": stats.to_dict()}
            if process.record_jumps:
                results["jump_log"] = self.report_generator.write_rows_csv(
                    ("path_id", "t", "from", "to", "accepted", "rule"), stats.jump_log, name="jumps")
            return results
        raise ConfigError(f"[params] unknown mc-crosscheck mode: {mode}")

    def _calibrate(self, n: int, s: float) -> dict:
        p = FracParams(n, s)
        c_hat, c_hat_hash = calibrate_c_hat(p, seed=self.cfg.seed, count=self.cfg.param_int("count", 20),
                                            h=self.cfg.h, q=self.q)
        c_sob, c_sob_hash = calibrate_sobolev_constant(p, seed=self.cfg.seed,
                                                       count=self.cfg.param_int("sobolev_count", 100), h=self.cfg.h)
        return {"n": n, "s": s, "c_hat": c_hat, "c_sob": c_sob, "family_hash": f"{c_hat_hash}:{c_sob_hash}",
                "calibration_date": date.today().isoformat()}

    def constants(self, n: int, s: float) -> dict:
        """Constants for (n, s), calibrated and saved first when none are stored."""
        try:
            return self.config_manager.lookup_constants(n, s)
        except ValueError:
            logger.info("No calibrated constants for n=%d, s=%g; calibrating now", n, s)
        entry = self._calibrate(n, s)
        self.config_manager.save_constants([entry])
        return entry

    def calibrate_constants(self) -> dict:
        """Calibrate c_hat and c_sob and store them in the user's constants file."""
        orders = [float(v) for v in self.cfg.param_list("s_values", ["0.25", "0.5", "0.75"])]
        entries = [self._calibrate(self.cfg.n, s) for s in orders]
        path = self.config_manager.save_constants(entries)
        return {"entries": entries, "constants_file": path}

    def run(self) -> int:
        """Run the selected command and write its results."""
        if not self.args.quiet:
            self.display_welcome(self.config_manager.config_log.strip())
        handler = self.handlers[self.cfg.command]
        with Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"),
                      console=self.console, transient=True, disable=self.args.quiet) as progress:
            progress.add_task(f"Running {self.cfg.command}...", total=None)
            body = handler()
        results = {"experiment": _experiment_header(self.cfg), **body, "violations": list(self.violations)}
        path = self.report_generator.emit_golden(results, name=self.cfg.command)
        if not self.args.quiet:
            self.console.print(summary_table(self.cfg.command, canonical(body)))
            self.console.print(f"[green]Results saved to {path}[/green]")
        if self.violations:
            raise PropertyViolation("; ".join(self.violations))
        return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nonlocal_mp", description="Numerical checks for nonlocal maximum principles")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=COMMANDS, help="Check to run")
    parser.add_argument("--config", metavar="PATH", help="Experiment file (INI, or JSON by extension)")
    parser.add_argument("--out", metavar="DIR", help="Output directory")
    parser.add_argument("--seed", type=int, metavar="U64", help="Seed override")
    parser.add_argument("--h", type=float, metavar="FLOAT", help="Lattice spacing override")
    parser.add_argument("--quiet", action="store_true", help="Only warnings and errors")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    return parser


def main(argv: Optional[List[str]] = None):
    """Main entry point for the application."""
    console = Console()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse reports usage errors as exit status 2; they are parse errors here
        sys.exit(1 if e.code else 0)
    configure_logging(args.quiet, args.verbose, console)
    try:
        app = NonlocalMPCLI(args, console)
        sys.exit(app.run())
    except KeyboardInterrupt:
        console.print("\n[yellow]Interrupted.[/yellow]")
        sys.exit(1)
    except Exception as e:
        console.print(f"[red]Error: {e}[/red]")
        sys.exit(exit_code_for(e))


if __name__ == "__main__":
    main()
