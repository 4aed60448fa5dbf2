import numpy as np
import pytest
from nonlocal_mp.forms import energy, pairing
from nonlocal_mp.geometry import (
    ball,
    box,
    build_grid,
    dirichlet_preset,
    restricted_preset,
    semirestricted_preset,
)
from nonlocal_mp.grid_function import FarField, GridFunction
from nonlocal_mp.operators import (
    OperatorKind,
    admissible_nodes,
    complement_regional_pairing,
    dirichlet_pointwise,
    evaluate_on_lattice,
    fourier_symbol_oracle,
    general_pointwise,
    regional_pointwise,
    semirestricted_pointwise,
    spectral_1d,
)
from nonlocal_mp.quadrature import FracParams

HALF = FracParams(1, 0.5)


@pytest.fixture
def wide_lattice():
    return build_grid(box([-4.0], [4.0]), 1.0 / 32)


def test_operator_annihilates_constants(wide_lattice):
    u = GridFunction.constant(wide_lattice, 3.0)
    assert dirichlet_pointwise(u, [0.0], HALF) == pytest.approx(0.0, abs=1e-12)
    omega = box([-1.0], [1.0])
    assert regional_pointwise(u, [0.5], omega, HALF) == pytest.approx(0.0, abs=1e-12)


def test_half_laplacian_of_poisson_kernel(wide_lattice):
    # (-Delta)^(1/2) of 1/(1 + x^2) is (1 - x^2)/(1 + x^2)^2
    u = GridFunction.from_callable(wide_lattice, lambda x: 1.0 / (1.0 + x[:, 0] ** 2), FarField.power(1.0, 2.0))
    assert dirichlet_pointwise(u, [0.0], HALF) == pytest.approx(1.0, rel=5e-3)


def test_quadrature_agrees_with_fourier_oracle():
    p = FracParams(1, 0.4)
    lattice = build_grid(box([-2.0], [2.0]), 1.0 / 32)
    u = GridFunction.from_callable(lattice, lambda x: np.exp(-8.0 * x[:, 0] ** 2))
    oracle = fourier_symbol_oracle(u, p)
    scale = abs(oracle([0.0]))
    for x in ([0.0], [0.125], [0.25], [-0.5]):
        assert abs(dirichlet_pointwise(u, x, p) - oracle(x)) <= 1e-2 * scale


def test_fourier_oracle_needs_vanishing_edges():
    lattice = build_grid(box([-1.0], [1.0]), 1.0 / 16)
    with pytest.raises(ValueError) as e:
        fourier_symbol_oracle(GridFunction.constant(lattice, 1.0), HALF)
    assert "too close to the lattice box edge" in str(e.value)


def test_pointwise_rejects_bad_points(wide_lattice):
    u = GridFunction.constant(wide_lattice, 1.0)
    omega = box([-1.0], [1.0])
    with pytest.raises(ValueError) as e:
        dirichlet_pointwise(u, [0.01], HALF)
    assert "not a lattice point" in str(e.value)
    with pytest.raises(ValueError) as e:
        regional_pointwise(u, [2.0], omega, HALF)
    assert "outside Omega" in str(e.value)
    with pytest.raises(ValueError) as e:
        regional_pointwise(u, [1.0 - 1.0 / 32], omega, HALF)
    assert "boundary-adjacent" in str(e.value)
    with pytest.raises(ValueError) as e:
        dirichlet_pointwise(u, [4.0 - 1.0 / 32], HALF)
    assert "too close to the lattice edge" in str(e.value)


def test_semirestricted_operator_switches_region(wide_lattice):
    omega = box([-1.0], [1.0])
    u = GridFunction.indicator(wide_lattice, omega)
    assert semirestricted_pointwise(u, [0.0], omega, HALF) == dirichlet_pointwise(u, [0.0], HALF)
    # outside Omega only the pairs with y in Omega count and u(x) = 0 there
    assert semirestricted_pointwise(u, [2.0], omega, HALF) < 0.0


def test_general_operator_matches_presets(wide_lattice):
    omega = box([-1.0], [1.0])
    u = GridFunction.bump(wide_lattice, [0.2], 0.7)
    assert general_pointwise(u, [0.0], dirichlet_preset(omega), HALF) == dirichlet_pointwise(u, [0.0], HALF)
    assert general_pointwise(u, [0.0], restricted_preset(omega), HALF) == regional_pointwise(u, [0.0], omega, HALF)
    with pytest.raises(ValueError) as e:
        general_pointwise(u, [2.0], restricted_preset(omega), HALF)
    assert "section of Z" in str(e.value)


def test_operator_kind_validation():
    omega = ball([0.0], 1.0)
    assert OperatorKind("regional", omega=omega).pointwise() is not None
    assert OperatorKind("spectral_dirichlet_1d", modes=4).is_spectral
    with pytest.raises(ValueError) as e:
        OperatorKind("fractional")
    assert "Unknown operator" in str(e.value)
    with pytest.raises(ValueError) as e:
        OperatorKind("regional")
    assert "needs a domain" in str(e.value)
    with pytest.raises(ValueError) as e:
        OperatorKind("general")
    assert "interaction set" in str(e.value)
    with pytest.raises(ValueError) as e:
        OperatorKind("spectral_neumann_1d").pointwise()
    assert "at least one mode" in str(e.value)
    with pytest.raises(ValueError) as e:
        OperatorKind("spectral_neumann_1d", modes=3).pointwise()
    assert "no pointwise kernel form" in str(e.value)


def test_admissible_nodes():
    lattice = build_grid(box([-1.0], [1.0]), 1.0 / 8)
    assert len(admissible_nodes(lattice, None)) == 11
    assert len(admissible_nodes(lattice, box([-0.5], [0.5]))) == 5


def test_evaluation_order_is_independent_of_threads(wide_lattice):
    u = GridFunction.bump(wide_lattice, [0.0], 1.0)
    nodes = admissible_nodes(wide_lattice, box([-1.0], [1.0]))
    serial = evaluate_on_lattice(u, dirichlet_pointwise, HALF, nodes=nodes, threads=1)
    pooled = evaluate_on_lattice(u, dirichlet_pointwise, HALF, nodes=nodes, threads=4)
    assert np.array_equal(serial, pooled)


def test_pairing_splits_into_regional_and_complement_parts():
    g = box([-1.0], [1.0])
    lattice = build_grid(g, 1.0 / 32, halo=1.0 / 16)
    z = dirichlet_preset(g)
    u = GridFunction.bump(lattice, [0.1], 0.6)
    total = pairing(u, u, z, HALF).value
    inner = energy(u, g, g, None, HALF).value
    outer = complement_regional_pairing(u, u, g, z, HALF).value
    assert total == pytest.approx(inner + 2 * outer, rel=1e-10)
    assert complement_regional_pairing(u, u, g, restricted_preset(g), HALF).value == 0.0


def test_complement_pairing_needs_support_in_g():
    g = box([-1.0], [1.0])
    lattice = build_grid(g, 1.0 / 16, halo=1.0 / 8)
    u = GridFunction.bump(lattice, [0.8], 0.5)
    with pytest.raises(ValueError) as e:
        complement_regional_pairing(u, u, g, semirestricted_preset(g), HALF)
    assert "boundary of G" in str(e.value)


@pytest.mark.parametrize("s", [0.5, 0.25, -1.0])
def test_spectral_dirichlet_sine_mode(s):
    lattice = build_grid(box([0.0], [1.0]), 1.0 / 64)
    u = GridFunction.from_callable(lattice, lambda x: np.sin(3 * np.pi * x[:, 0]))
    result = spectral_1d(u, "dirichlet", s, modes=63)
    assert result.values == pytest.approx((3 * np.pi) ** (2 * s) * u.values, abs=1e-10)


def test_spectral_neumann_drops_constants():
    lattice = build_grid(box([0.0], [1.0]), 1.0 / 64)
    u = GridFunction.from_callable(lattice, lambda x: 1.0 + np.cos(2 * np.pi * x[:, 0]))
    result = spectral_1d(u, "neumann", 0.5, modes=65)
    assert result.values == pytest.approx(2 * np.pi * np.cos(2 * np.pi * lattice.points[:, 0]), abs=1e-10)


def test_spectral_validation():
    lattice = build_grid(box([0.0], [1.0]), 1.0 / 64)
    u = GridFunction.zeros(lattice)
    with pytest.raises(ValueError) as e:
        spectral_1d(u, "dirichlet", 0.5, modes=64)
    assert "exceeds the lattice limit 63" in str(e.value)
    with pytest.raises(ValueError) as e:
        spectral_1d(u, "robin", 0.5, modes=4)
    assert "dirichlet or neumann" in str(e.value)
    square = build_grid(box([0.0, 0.0], [1.0, 1.0]), 0.25)
    with pytest.raises(ValueError) as e:
        spectral_1d(GridFunction.zeros(square), "dirichlet", 0.5, modes=1)
    assert "one-dimensional" in str(e.value)
