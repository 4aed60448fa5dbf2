#!/usr/bin/env python3
"""
Demo script for nonlocal-mp.

This script runs a few of the checks on small one-dimensional lattices and
prints the results: the kernel constant, killing measures, an energy, the
strong maximum principle counterexample and a Monte Carlo cross-check.
"""

import math

from rich.console import Console
from rich.table import Table

from nonlocal_mp.forms import energy, killing_measure
from nonlocal_mp.geometry import (ball, box, build_grid, dirichlet_preset, full_space, restricted_preset,
                                  semirestricted_preset)
from nonlocal_mp.grid_function import GridFunction
from nonlocal_mp.levy import killing_rate_crosscheck
from nonlocal_mp.quadrature import FracParams, kernel_constant
from nonlocal_mp.smp import build_counterexample

console = Console()


def demonstrate_constants():
    """Kernel constants against their closed forms."""
    table = Table(title="Kernel constant C(n, s)", header_style="bold magenta")
    table.add_column("n")
    table.add_column("s")
    table.add_column("C(n, s)")
    table.add_column("Expected")
    for n, s, expected in [(1, 0.5, 1 / math.pi), (2, 0.5, 1 / (2 * math.pi)), (3, 0.5, 1 / math.pi ** 2)]:
        table.add_row(str(n), str(s), f"{kernel_constant(n, s):.12g}", f"{expected:.12g}")
    console.print(table)


def demonstrate_forms():
    """Killing measures and energies under the three presets."""
    p = FracParams(1, 0.5)
    omega = box([-1.0], [1.0])
    h = 1.0 / 64
    lattice = build_grid(omega, h, halo=0.25)
    u = GridFunction.bump(lattice, [0.0], 0.5)

    table = Table(title="Interval (-1, 1), s = 1/2", header_style="bold magenta")
    table.add_column("Preset")
    table.add_column("Killing measure at 0")
    table.add_column("Energy of a bump")
    for name, preset in [("dirichlet", dirichlet_preset), ("restricted", restricted_preset),
                         ("semirestricted", semirestricted_preset)]:
        z = preset(omega)
        kill = killing_measure([0.0], omega, z, p, h=h)
        value = energy(u, full_space(1), full_space(1), z, p)
        table.add_row(name, f"{kill:.6f}", f"{value.value:.6f} ± {value.error_estimate:.1e}")
    console.print(table)
    console.print(f"Dirichlet killing measure at 0 is 2/π = {2 / math.pi:.6f}\n")


def demonstrate_counterexample():
    """A supersolution for the general interaction set with an interior minimum."""
    result = build_counterexample(ball([0.0], 1.0), FracParams(1, 0.5), h=1.0 / 32)
    console.print(f"Counterexample: epsilon = {result.epsilon:.4f}, interior minimum {result.interior_min:.4f} "
                  f"at {result.argmin}, smallest residual {result.min_residual:.3e}, "
                  f"verdict [bold]{result.report.verdict}[/bold]\n")


def demonstrate_monte_carlo():
    """Killing rate at 0 by sampling jumps."""
    comparison = killing_rate_crosscheck([0.0], box([-1.0], [1.0]), FracParams(1, 0.5), n_samples=100000, seed=1)
    console.print(f"Killing rate: quadrature {comparison.quadrature_rate:.5f}, "
                  f"Monte Carlo {comparison.mc_rate:.5f} ± {comparison.mc_stderr:.5f}")


def main():
    """Main demonstration function."""
    console.print("[bold green]nonlocal-mp demo[/bold green]\n")
    try:
        demonstrate_constants()
        demonstrate_forms()
        demonstrate_counterexample()
        demonstrate_monte_carlo()
        console.print("\nRun 'nonlocal_mp --help' for the command line.")
    except Exception as e:
        console.print(f"[red]Demo failed: {e}[/red]")


if __name__ == "__main__":
    main()
