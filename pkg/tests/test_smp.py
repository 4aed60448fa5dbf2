import numpy as np
import pytest
from nonlocal_mp.geometry import ball, box, build_grid, dirichlet_preset, full_space
from nonlocal_mp.grid_function import GridFunction
from nonlocal_mp.quadrature import FracParams
from nonlocal_mp.smp import (
    MPReport,
    build_counterexample,
    bump_family,
    corollary_reports,
    lsc_scan,
    smp_report,
    spectral_family,
    spectral_mp_check,
    verify_supersolution,
)

HALF = FracParams(1, 0.5)


@pytest.fixture
def lattice():
    return build_grid(box([-1.0], [1.0]), 1.0 / 16, halo=0.5)


@pytest.fixture
def omega():
    return box([-1.0], [1.0])


@pytest.fixture(scope="module")
def counterexample():
    return build_counterexample(ball([0.0], 1.0), HALF)


def test_bump_family_stays_inside(lattice, omega):
    bumps = bump_family(lattice, omega)
    assert bumps
    outside = ~omega.contains_points(lattice.points)
    for bump in bumps:
        assert np.min(bump.values) >= 0.0
        assert np.all(bump.values[outside] == 0.0)
    assert len(bump_family(lattice, omega, stride=2)) < len(bumps)


def test_constants_have_zero_residual(lattice, omega):
    bumps = bump_family(lattice, omega, widths=(4,), stride=4)
    z = dirichlet_preset(omega)
    assert verify_supersolution(GridFunction.constant(lattice, 1.0), omega, z, HALF, bumps) == pytest.approx(0.0, abs=1e-12)


def test_verify_supersolution_validation(lattice, omega):
    z = dirichlet_preset(omega)
    with pytest.raises(ValueError) as e:
        verify_supersolution(GridFunction.zeros(lattice), omega, z, HALF, [])
    assert "at least one test bump" in str(e.value)
    with pytest.raises(ValueError) as e:
        verify_supersolution(GridFunction.zeros(lattice), omega, z, HALF, [-GridFunction.bump(lattice, [0.0], 0.25)])
    assert "nonnegative" in str(e.value)


def test_mp_report_verdicts():
    with pytest.raises(ValueError) as e:
        MPReport(0.0, 0.0, "far_field", 0.0, 0, "maybe")
    assert "Unknown verdict" in str(e.value)
    report = MPReport(0.1, -1.0, (0.5,), 2.0, 0, "consistent")
    assert report.to_dict()["inf_location"] == [0.5]


def test_lsc_scan(lattice, omega):
    smooth = GridFunction.from_callable(lattice, lambda x: x[:, 0] ** 2)
    assert lsc_scan(smooth, omega) == 0
    assert lsc_scan(GridFunction.constant(lattice, 1.0), omega) == 0
    step = GridFunction.from_callable(lattice, lambda x: (x[:, 0] >= 0).astype(float))
    assert lsc_scan(step, omega) == 1


def test_constant_fails_the_hypothesis(lattice, omega):
    bumps = bump_family(lattice, omega, widths=(4,), stride=4)
    report = smp_report(GridFunction.constant(lattice, 1.0), omega, dirichlet_preset(omega),
                        ball([0.0], 0.5), HALF, bumps)
    assert report.verdict == "hypothesis_failed"


def test_subsolution_fails_the_hypothesis(lattice, omega):
    bumps = bump_family(lattice, omega, widths=(4,), stride=4)
    u = -GridFunction.bump(lattice, [0.0], 0.5)
    report = smp_report(u, omega, dirichlet_preset(omega), ball([0.0], 0.5), HALF, bumps)
    assert report.supersolution_min_residual < 0
    assert report.verdict == "hypothesis_failed"


def test_compact_set_validation(lattice, omega):
    u = GridFunction.zeros(lattice)
    z = dirichlet_preset(omega)
    with pytest.raises(ValueError) as e:
        smp_report(u, omega, z, full_space(1), HALF)
    assert "K must be bounded" in str(e.value)
    with pytest.raises(ValueError) as e:
        smp_report(u, omega, z, ball([0.01], 1e-3), HALF)
    assert "no lattice nodes" in str(e.value)
    with pytest.raises(ValueError) as e:
        smp_report(u, omega, z, ball([0.0], 1.0), HALF)
    assert "not compactly contained" in str(e.value)


def test_counterexample_keeps_the_dirichlet_conclusion(counterexample):
    assert 0.0 < counterexample.epsilon < 1.0
    assert counterexample.min_residual > 0.0
    assert counterexample.argmin == pytest.approx((0.0,))
    assert counterexample.interior_min == pytest.approx(1.0 - counterexample.epsilon)
    assert counterexample.report.verdict == "consistent"
    assert counterexample.report.global_inf == pytest.approx(0.0, abs=1e-12)
    # the minimum over Omega sits inside K
    assert counterexample.neumann_margin == 0.0
    assert set(counterexample.to_dict()) >= {"epsilon", "report", "neumann_margin"}


def test_counterexample_keeps_the_semirestricted_conclusion(counterexample):
    dirichlet = counterexample.report
    semirestricted = counterexample.semirestricted_report
    assert semirestricted.verdict == "consistent"
    assert semirestricted.global_inf == pytest.approx(0.0, abs=1e-12)
    assert semirestricted.interior_strict_margin > 0.0
    # bumps supported in Omega pair the same under both presets
    assert semirestricted.supersolution_min_residual == pytest.approx(dirichlet.supersolution_min_residual,
                                                                      rel=1e-9, abs=1e-12)
    data = counterexample.to_dict()
    assert data["semirestricted_report"]["verdict"] == "consistent"
    assert data["report"]["verdict"] == "consistent"


def test_counterexample_needs_bounded_domain():
    with pytest.raises(ValueError) as e:
        build_counterexample(full_space(1), HALF)
    assert "bounded Omega" in str(e.value)


def test_corollaries_cover_every_preset(counterexample):
    omega = ball([0.0], 1.0)
    bumps = bump_family(counterexample.f.lattice, omega, widths=(8,), stride=8)
    reports = corollary_reports(counterexample.f, omega, ball([0.0], 0.5), HALF, bumps)
    assert set(reports) == {"dirichlet", "restricted", "semirestricted"}
    assert reports["dirichlet"].verdict == "consistent"


@pytest.fixture
def unit_interval():
    return build_grid(box([0.0], [1.0]), 1.0 / 64)


def test_spectral_dirichlet_family_satisfies_the_principle(unit_interval):
    k = box([0.25], [0.75])
    for u in spectral_family(unit_interval, "dirichlet", 0.5, 5, seed=1):
        result = spectral_mp_check(u, "dirichlet", 0.5, k)
        assert result.hypothesis_ok
        assert not result.trivial
        assert result.margin > 0
        assert result.holds


def test_spectral_neumann_nonconstant_functions_fail_the_hypothesis(unit_interval):
    k = box([0.25], [0.75])
    for u in spectral_family(unit_interval, "neumann", 0.5, 3, seed=2):
        result = spectral_mp_check(u, "neumann", 0.5, k)
        assert not result.hypothesis_ok
        assert result.holds
    constant = spectral_mp_check(GridFunction.constant(unit_interval, 2.0), "neumann", 0.5, k)
    assert constant.trivial and constant.hypothesis_ok and constant.holds


def test_spectral_dirichlet_trivial_and_vacuous_cases(unit_interval):
    k = box([0.25], [0.75])
    assert spectral_mp_check(GridFunction.zeros(unit_interval), "dirichlet", 0.5, k).trivial
    negative = GridFunction.from_callable(unit_interval, lambda x: -np.sin(np.pi * x[:, 0]))
    result = spectral_mp_check(negative, "dirichlet", 0.5, k)
    assert not result.hypothesis_ok
    assert result.holds
    with pytest.raises(ValueError) as e:
        spectral_mp_check(negative, "dirichlet", 0.5, ball([0.0], 1e-3))
    assert "no interior lattice nodes" in str(e.value)
