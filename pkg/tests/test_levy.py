import math

import numpy as np
import pytest
from nonlocal_mp.errors import NumericalError
from nonlocal_mp.geometry import ball, box, build_grid, full_space
from nonlocal_mp.grid_function import GridFunction
from nonlocal_mp.levy import (
    JumpProcessConfig,
    harmonic_mean_check,
    jump_rate,
    killing_rate_crosscheck,
    sample_stable_increment,
    simulate,
)
from nonlocal_mp.quadrature import FracParams

INTERVAL = box([-1.0], [1.0])


def _config(kind="killed", **overrides):
    settings = dict(kind=kind, omega=INTERVAL, alpha=1.0, x_start=(0.0,), h=1.0 / 16)
    settings.update(overrides)
    return JumpProcessConfig(**settings)


def test_cauchy_increments_have_unit_median():
    draws = sample_stable_increment(1.0, 1.0, np.random.default_rng(0), size=20000)
    assert draws.shape == (20000, 1)
    assert np.mean(np.abs(draws[:, 0]) < 1.0) == pytest.approx(0.5, abs=0.02)


@pytest.mark.parametrize("alpha, dt, n", [(1.5, 1.0, 1), (0.7, 0.5, 1), (1.0, 1.0, 2), (1.5, 0.5, 3)])
def test_stable_characteristic_function(alpha, dt, n):
    draws = sample_stable_increment(alpha, dt, np.random.default_rng(1), n=n, size=20000)
    assert draws.shape == (20000, n)
    assert np.mean(np.cos(draws[:, 0])) == pytest.approx(math.exp(-dt), abs=0.03)


def test_single_increment_shape():
    assert sample_stable_increment(1.2, 0.1, np.random.default_rng(2), n=2).shape == (2,)
    with pytest.raises(ValueError) as e:
        sample_stable_increment(2.0, 1.0, np.random.default_rng(0))
    assert "Stability index must lie in (0, 2)" in str(e.value)
    with pytest.raises(ValueError) as e:
        sample_stable_increment(1.0, 0.0, np.random.default_rng(0))
    assert "Time step must be positive" in str(e.value)


def test_config_validation():
    assert _config().cutoff == pytest.approx(1.0 / 32)
    assert _config().s == 0.5
    with pytest.raises(ValueError) as e:
        _config("reflected")
    assert "Unknown process kind" in str(e.value)
    with pytest.raises(ValueError) as e:
        _config(x_start=(2.0,))
    assert "outside Omega" in str(e.value)
    with pytest.raises(ValueError) as e:
        _config("censored", horizon=math.inf)
    assert "Only killed processes" in str(e.value)
    with pytest.raises(ValueError):
        _config(max_jumps=0)
    assert _config("semirestricted", x_start=(2.0,)).x_start == (2.0,)


def test_jump_rate():
    assert jump_rate(1, 0.5, 0.25) == pytest.approx(8 / math.pi)


def test_simulation_is_deterministic():
    first = simulate(_config(seed=11), 50)
    second = simulate(_config(seed=11), 50)
    np.testing.assert_array_equal(first.exit_points, second.exit_points)
    np.testing.assert_array_equal(first.occupation_times, second.occupation_times)
    assert first.to_dict() == second.to_dict()


def test_killed_paths_without_horizon_all_exit():
    stats = simulate(_config(horizon=math.inf), 100)
    assert stats.killed_fraction == 1.0
    assert stats.truncated == 0
    assert not np.any(INTERVAL.contains_points(stats.exit_points))
    assert sum(stats.exit_histogram["counts"]) == 100


def test_censored_paths_never_leave():
    stats = simulate(_config("censored", horizon=2.0), 30)
    assert stats.killed_fraction == 0.0
    assert np.all(np.isnan(stats.exit_points))
    assert stats.rejections["censored"] > 0
    assert stats.occupation_time == pytest.approx(2.0)


def test_semirestricted_paths_return_only_into_omega():
    stats = simulate(_config("semirestricted", record_jumps=True), 30)
    assert stats.jump_log
    for _, _, start, end, accepted, rule in stats.jump_log:
        assert rule == "semirestricted"
        if accepted and not INTERVAL.contains(np.asarray(start)):
            assert INTERVAL.contains(np.asarray(end))
        if INTERVAL.contains(np.asarray(start)):
            assert accepted


def test_killing_rate_matches_quadrature():
    result = killing_rate_crosscheck([0.0], INTERVAL, FracParams(1, 0.5), 20000, seed=3)
    assert result.quadrature_rate == pytest.approx(2 / math.pi, rel=2e-3)
    assert abs(result.mc_rate - result.quadrature_rate) <= 4 * result.mc_stderr + 2e-3
    assert set(result.to_dict()) == {"mc_rate", "quadrature_rate"}


def test_killing_rate_crosscheck_edge_cases():
    p = FracParams(1, 0.5)
    assert killing_rate_crosscheck([0.0], full_space(1), p, 10).mc_rate == 0.0
    with pytest.raises(ValueError) as e:
        killing_rate_crosscheck([0.999], INTERVAL, p, 10)
    assert "boundary-adjacent" in str(e.value)
    with pytest.raises(ValueError) as e:
        killing_rate_crosscheck([3.0], INTERVAL, p, 10)
    assert "outside G" in str(e.value)


@pytest.fixture
def lattice():
    return build_grid(ball([0.0], 1.0), 1.0 / 16, halo=1.0)


def test_harmonic_mean_of_constant(lattice):
    result = harmonic_mean_check(GridFunction.constant(lattice, 2.0), _config(horizon=math.inf), 100)
    assert result.discrepancy == pytest.approx(0.0, abs=1e-12)
    assert result.start_value == pytest.approx(2.0)


def test_harmonic_mean_is_linear(lattice):
    cfg = _config(horizon=math.inf, seed=5)
    u = GridFunction.bump(lattice, [1.2], 0.5)
    v = GridFunction.from_callable(lattice, lambda x: np.abs(x[:, 0]))
    first = harmonic_mean_check(u, cfg, 100)
    second = harmonic_mean_check(v, cfg, 100)
    combined = harmonic_mean_check(2.0 * u + 3.0 * v, cfg, 100)
    assert combined.mean == pytest.approx(2.0 * first.mean + 3.0 * second.mean, rel=1e-12)


def test_harmonic_mean_check_validation(lattice):
    u = GridFunction.constant(lattice, 1.0)
    with pytest.raises(ValueError) as e:
        harmonic_mean_check(u, _config("censored"), 10)
    assert "killed process" in str(e.value)
    with pytest.raises(NumericalError) as e:
        harmonic_mean_check(u, _config(horizon=1e-9), 50)
    assert "did not exit" in str(e.value)
