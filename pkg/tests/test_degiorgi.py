import math

import numpy as np
import pytest
from nonlocal_mp.degiorgi import (
    BoundaryLoad,
    DeGiorgiTrace,
    SubsolutionProfile,
    caccioppoli_gap,
    caccioppoli_pairs,
    calibrate_c_hat,
    calibrate_sobolev_constant,
    calibration_lattice,
    calibration_setup,
    degiorgi_bound,
    family_hash,
    level_norms,
    localized_sobolev_gap,
    rescale,
    schedule,
    sobolev_bump_family,
    subsolution_family,
    torsion_constant,
    torsion_family,
)
from nonlocal_mp.errors import NumericalError
from nonlocal_mp.geometry import ball, box, build_grid, dirichlet_preset, full_space
from nonlocal_mp.grid_function import FarField, GridFunction
from nonlocal_mp.quadrature import FracParams

HALF = FracParams(1, 0.5)
THREE_QUARTERS = FracParams(1, 0.75)
H = 1.0 / 32


@pytest.fixture
def lattice():
    return calibration_lattice(1, 4.5, H)


@pytest.fixture
def z():
    return dirichlet_preset(ball([0.0], 2.0 + H))


def test_schedule():
    assert schedule(0, 1.0) == (2.0, 0.0, 1.75, 0.25)
    assert schedule(1, 2.0) == (1.5, 1.0, 1.375, 1.25)
    with pytest.raises(ValueError) as e:
        schedule(-1, 1.0)
    assert "nonnegative integer" in str(e.value)
    with pytest.raises(ValueError) as e:
        schedule(0, 0.0)
    assert "must be positive" in str(e.value)


def test_level_norms_stop_when_truncation_vanishes(lattice):
    alphas = level_norms(GridFunction.constant(lattice, 1.0), [0.0], 2.0)
    assert len(alphas) == 2
    assert alphas[0] == pytest.approx(2.0, rel=1e-2)
    assert alphas[1] == 0.0
    assert level_norms(GridFunction.zeros(lattice), [0.0], 1.0) == [0.0]


def test_level_norms_need_b2(lattice):
    small = build_grid(box([-1.0], [1.0]), H)
    with pytest.raises(ValueError) as e:
        level_norms(GridFunction.zeros(small), [0.0], 1.0)
    assert "does not cover B_2" in str(e.value)


def test_rescale(lattice):
    u = GridFunction.from_callable(lattice, lambda x: x[:, 0], FarField.constant(1.0))
    scaled = rescale(u, [1.0], 2.0)
    assert scaled([0.0]) == pytest.approx(1.0)
    assert scaled([-0.5]) == pytest.approx(0.0)
    decaying = GridFunction.zeros(lattice).with_values(np.zeros(lattice.size), FarField.power(1.0, 2.0))
    assert rescale(decaying, [0.0], 2.0).farfield == FarField.power(0.25, 2.0)
    with pytest.raises(ValueError) as e:
        rescale(decaying, [1.0], 2.0)
    assert "about the origin" in str(e.value)
    with pytest.raises(ValueError):
        rescale(u, [0.0], 0.0)


def test_torsion_constant():
    assert torsion_constant(1, 0.5) == pytest.approx(1.0)
    assert torsion_constant(2, 0.5) == pytest.approx(math.pi / 2)


def test_torsion_profiles_are_nonnegative(lattice):
    family = torsion_family(3, 6)
    assert family == torsion_family(3, 6)
    for profile in family:
        assert np.min(profile.on(lattice, 0.5).values) >= 0.0
    with pytest.raises(ValueError):
        SubsolutionProfile(c=1.0, a=0.0, radius=1.0)
    with pytest.raises(ValueError) as e:
        SubsolutionProfile(c=1.0, a=1.0, radius=10.0).on(lattice, 0.5)
    assert "does not cover B_10" in str(e.value)
    with pytest.raises(ValueError) as e:
        SubsolutionProfile(c=1.0, a=1.0, radius=1.5).build(lattice, ball([0.0], 2.0 + H), HALF)
    assert "inside B_1.5" in str(e.value)


def test_boundary_load_validation():
    with pytest.raises(ValueError) as e:
        BoundaryLoad(direction=(1.0,), width=0.1, angle=1.0, amplitude=1.0, shift=1.0)
    assert "[0, 1)" in str(e.value)
    with pytest.raises(ValueError) as e:
        BoundaryLoad(direction=(2.0,), width=0.1, angle=1.0, amplitude=1.0, shift=0.0)
    assert "unit vector" in str(e.value)
    with pytest.raises(ValueError):
        BoundaryLoad(direction=(1.0,), width=0.0, angle=1.0, amplitude=1.0, shift=0.0)
    load = BoundaryLoad(direction=(0.6, 0.8), width=0.1, angle=1.0, amplitude=1.0, shift=0.0)
    with pytest.raises(ValueError) as e:
        load.build(calibration_lattice(1, 3.0, H), ball([0.0], 2.0 + H), HALF)
    assert "dimension 2" in str(e.value)


def test_boundary_load_family():
    family = subsolution_family(3, 6)
    assert family == subsolution_family(3, 6)
    assert family != subsolution_family(4, 6)
    for load in family:
        assert abs(load.direction[0]) == pytest.approx(1.0)
        assert 1.0 / 16 <= load.width <= 0.25 and 0.0 <= load.shift <= 0.9
    assert len(subsolution_family(0, 2, n=2)[0].direction) == 2
    assert family_hash(family) == family_hash(list(family))
    assert family_hash(family) != family_hash(subsolution_family(4, 6))


def test_boundary_loads_are_s_harmonic_and_carry_their_data():
    load = BoundaryLoad(direction=(1.0,), width=0.125, angle=1.0, amplitude=2.0, shift=0.0)
    z, (u,) = calibration_setup([load], THREE_QUARTERS, H)
    pts = u.lattice.points[:, 0]
    cap = (pts > 2.0 + H + 1e-9) & (pts < 2.0 + H + 0.125 - 1e-9)
    assert np.all(u.values[cap] == 2.0)
    assert np.all(u.values[pts < -2.0 - H - 1e-9] == 0.0)
    inside = np.abs(pts) < 2.0
    assert np.min(u.values[inside]) > -1e-9 and np.max(u.values[inside]) < 2.0
    # the extension leans toward the cap
    assert u([1.0]) > u([-1.0])
    shifted = calibration_setup([BoundaryLoad(direction=(1.0,), width=0.125, angle=1.0, amplitude=2.0,
                                              shift=0.5)], THREE_QUARTERS, H)[1][0]
    assert shifted([1.0]) < u([1.0])
    assert shifted.farfield.kind == "constant" and shifted.farfield.c < 0.0


def test_boundary_loads_bind_the_constant():
    z, members = calibration_setup(subsolution_family(0, 20), THREE_QUARTERS, H)
    traces = [degiorgi_bound(u, [0.0], 1.0, z, THREE_QUARTERS, c_hat=1.0, bumps=(), jmax=0) for u in members]
    assert any(trace.sup_value > trace.tail for trace in traces)


def test_calibrated_c_hat_is_set_by_binding_members():
    c_hat, digest = calibrate_c_hat(THREE_QUARTERS, seed=0, count=20)
    assert c_hat > 0
    assert len(digest) == 16
    assert calibrate_c_hat(THREE_QUARTERS, seed=0, count=20) == (c_hat, digest)
    z, members = calibration_setup(subsolution_family(0, 20), THREE_QUARTERS, H)
    binding = 0
    for u in members:
        trace = degiorgi_bound(u, [0.0], 1.0, z, THREE_QUARTERS, c_hat, bumps=())
        assert trace.bound_ok
        assert all(trace.induction_ok)
        assert all(trace.tww_ok) and all(trace.tww0_ok)
        if trace.sup_value > trace.tail:
            binding += 1
            # without the L2 term the bound would fail
            assert trace.tilde_k > trace.tail and trace.alpha[0] > 0.0
    assert binding >= 1


def test_calibration_needs_a_binding_member():
    # torsion profiles grow with |x|, so their tail exceeds their sup on B_1
    with pytest.raises(NumericalError) as e:
        calibrate_c_hat(HALF, family=torsion_family(0, 3))
    assert "does not determine c_hat" in str(e.value)


def test_degiorgi_trace_relations_hold(lattice, z):
    u = torsion_family(0, 1)[0].on(lattice, 0.5)
    trace = degiorgi_bound(u, [0.0], 1.0, z, HALF, c_hat=64.0)
    assert isinstance(trace, DeGiorgiTrace)
    assert trace.bound == trace.tilde_k
    assert trace.tilde_k > trace.tail >= 0.0
    assert len(trace.alpha) == len(trace.radii) == len(trace.levels) == len(trace.induction_ok)
    assert all(trace.induction_ok)
    assert all(trace.tww_ok) and all(trace.tww0_ok)
    assert np.all(np.diff(trace.alpha) <= 1e-12)
    assert trace.to_dict()["params"]["n"] == 1


@pytest.mark.parametrize("scale", [0.5, 2.0])
def test_degiorgi_bound_is_scale_covariant(lattice, z, scale):
    u = torsion_family(0, 1)[0].on(lattice, 0.5)
    base = degiorgi_bound(u, [0.0], 1.0, z, HALF, c_hat=4.0, bumps=())
    # u(x / scale) on the dilated lattice, bounded on B_scale
    dilated = GridFunction(lattice.rescaled([0.0], 1.0 / scale), u.values, u.farfield)
    trace = degiorgi_bound(dilated, [0.0], scale, z.rescaled([0.0], 1.0 / scale), HALF, c_hat=4.0, bumps=())
    assert trace.bound == pytest.approx(base.bound, rel=1e-2)
    assert trace.tail == pytest.approx(base.tail, rel=1e-2)
    assert trace.sup_value == pytest.approx(base.sup_value, rel=1e-12)


def test_degiorgi_bound_of_nonpositive_function(lattice, z):
    trace = degiorgi_bound(GridFunction.constant(lattice, -1.0), [0.0], 1.0, z, HALF, c_hat=1.0)
    assert trace.tilde_k == 0.0
    assert trace.alpha == []
    assert trace.bound_ok


def test_degiorgi_bound_validation(lattice, z):
    u = GridFunction.zeros(lattice)
    with pytest.raises(ValueError) as e:
        degiorgi_bound(u, [0.0], 1.0, z, HALF, c_hat=0.0)
    assert "c_hat must be positive" in str(e.value)
    with pytest.raises(ValueError) as e:
        degiorgi_bound(u, [0.5], 1.0, z, HALF, c_hat=1.0)
    assert "is not contained in Omega" in str(e.value)
    with pytest.raises(ValueError) as e:
        degiorgi_bound(GridFunction.bump(lattice, [0.0], 1.0), [0.0], 1.0, z, HALF, c_hat=1.0,
                       bumps=[GridFunction.bump(lattice, [0.0], 0.5)])
    assert "not a subsolution" in str(e.value)


def test_degiorgi_bound_checks_subsolutions_by_default(lattice, z):
    bump = GridFunction.bump(lattice, [0.0], 1.0)
    with pytest.raises(ValueError) as e:
        degiorgi_bound(bump, [0.0], 1.0, z, HALF, c_hat=1.0)
    assert "not a subsolution" in str(e.value)
    # an empty sequence skips the check
    assert degiorgi_bound(bump, [0.0], 1.0, z, HALF, c_hat=1.0, bumps=(), jmax=0).sup_value == pytest.approx(1.0)


def test_caccioppoli_is_an_identity_for_constants():
    g = box([-1.0], [1.0])
    lattice = build_grid(g, H, halo=2 * H)
    w = GridFunction.constant(lattice, 2.0)
    phi = GridFunction.bump(lattice, [0.0], 0.5)
    gap, error = caccioppoli_gap(w, phi, g, dirichlet_preset(g), HALF, with_error=True)
    assert abs(gap) <= 1e-10
    assert error >= 0.0


def test_caccioppoli_gap_vanishes_for_nonpositive_w():
    g = box([-1.0], [1.0])
    lattice = build_grid(g, H, halo=2 * H)
    w = -GridFunction.bump(lattice, [0.2], 0.5)
    phi = GridFunction.bump(lattice, [0.0], 0.5)
    assert caccioppoli_gap(w, phi, g, dirichlet_preset(g), HALF) == 0.0


def test_caccioppoli_pairs():
    g = box([-1.0], [1.0])
    lattice = build_grid(g, H, halo=2 * H)
    pairs = caccioppoli_pairs(lattice, g, 4, seed=5)
    again = caccioppoli_pairs(lattice, g, 4, seed=5)
    assert len(pairs) == 4
    for (w, phi), (w2, phi2) in zip(pairs, again):
        assert np.array_equal(w.values, w2.values) and np.array_equal(phi.values, phi2.values)
        assert phi.farfield.kind == "compact_support"
        assert np.all(phi.values[~g.contains_points(lattice.points)] == 0.0)
    with pytest.raises(ValueError) as e:
        caccioppoli_pairs(lattice, full_space(1), 1)
    assert "G must be bounded" in str(e.value)
    with pytest.raises(ValueError) as e:
        caccioppoli_pairs(lattice, box([-0.1], [0.1]), 1)
    assert "no room for a cut-off" in str(e.value)


def test_localized_sobolev_gap():
    lattice = calibration_lattice(1, 2.0, H)
    u = GridFunction.bump(lattice, [0.2], 0.5)
    assert localized_sobolev_gap(u, 2.0, 1.5, HALF, 1e-6) > 0.0
    assert localized_sobolev_gap(GridFunction.zeros(lattice), 2.0, 1.5, HALF, 1.0) == 0.0
    with pytest.raises(ValueError) as e:
        localized_sobolev_gap(u, 1.5, 1.8, HALF, 1.0)
    assert "1 < rho < r <= 2" in str(e.value)
    with pytest.raises(ValueError):
        localized_sobolev_gap(u, 2.0, 1.5, HALF, 0.0)
    with pytest.raises(ValueError) as e:
        localized_sobolev_gap(GridFunction.bump(lattice, [1.4], 0.5), 2.0, 1.5, HALF, 1.0)
    assert "vanish outside B_rho" in str(e.value)


def test_calibrated_sobolev_constant_keeps_gaps_nonnegative():
    c_sob, digest = calibrate_sobolev_constant(HALF, seed=2, count=5)
    assert c_sob > 0 and len(digest) == 16
    lattice = calibration_lattice(1, 2.0, H)
    gaps = [localized_sobolev_gap(GridFunction.bump(lattice, m["center"], m["width"]), 2.0, 1.5, HALF, c_sob)
            for m in sobolev_bump_family(2, 5, 1, 1.5)]
    assert min(gaps) >= -1e-9
    assert min(gaps) == pytest.approx(0.0, abs=1e-9)
