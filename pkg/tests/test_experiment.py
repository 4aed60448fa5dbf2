import glob
import json
import os

import numpy as np
import pytest
from nonlocal_mp.errors import ConfigError
from nonlocal_mp.experiment import (
    ExperimentConfig,
    build_function,
    experiment_from_sections,
    expression_callable,
    load_experiment,
    parse_domain,
    read_sections,
)
from nonlocal_mp.geometry import ball, box, build_grid, complement, difference

EXPERIMENT = """
[experiment]
command = energy
n = 1
s = 0.25
h = 0.0625
seed = 7

[quadrature]
refinement_levels = 2

[omega]
kind = difference
operands = outer, hole

[outer]
kind = box
lo = -1
hi = 1

[hole]
kind = ball
center = 0
radius = 0.25

[interaction]
preset = restricted

[function]
kind = bump
center = 0.5
width = 0.25

[params]
R = 2.0
r = 0.5
"""


def test_read_ini_sections_keep_key_case():
    sections = read_sections(EXPERIMENT)
    assert sections["params"] == {"R": "2.0", "r": "0.5"}
    assert sections["omega"]["operands"] == "outer, hole"


def test_read_json_sections():
    text = json.dumps({"experiment": {"n": 2, "verbose": True}, "omega": {"kind": "ball", "center": [0, 0]}})
    sections = read_sections(text, "json")
    assert sections["experiment"] == {"n": "2", "verbose": "true"}
    assert sections["omega"]["center"] == "0, 0"


def test_read_sections_errors():
    with pytest.raises(ConfigError) as e:
        read_sections("{broken", "json")
    assert "Invalid JSON experiment" in str(e.value)
    with pytest.raises(ConfigError) as e:
        read_sections(json.dumps({"experiment": 3}), "json")
    assert "must map section names to objects" in str(e.value)
    with pytest.raises(ConfigError) as e:
        read_sections("no header here")
    assert "Invalid experiment file" in str(e.value)
    with pytest.raises(ConfigError) as e:
        read_sections("", "yaml")
    assert "Unknown experiment format" in str(e.value)


def test_parse_nested_domain():
    sections = read_sections(EXPERIMENT)
    omega = parse_domain(sections, "omega", 1)
    assert omega == difference(box([-1.0], [1.0]), ball([0.0], 0.25))
    assert omega.contains([0.5]) and not omega.contains([0.0])
    assert parse_domain(sections, "full_space", 3).kind == "full_space"


def test_parse_domain_errors():
    sections = {
        "a": {"kind": "complement", "operands": "b"},
        "b": {"kind": "union", "operands": "a"},
        "c": {"kind": "complement", "operands": "a, b"},
        "d": {"kind": "ball", "center": "0", "radius": "wide"},
        "e": {"kind": "torus"},
    }
    with pytest.raises(ConfigError) as e:
        parse_domain(sections, "a", 1)
    assert "Cyclic domain reference: a -> b -> a" in str(e.value)
    with pytest.raises(ConfigError) as e:
        parse_domain(sections, "missing", 1)
    assert "Unknown domain section [missing]" in str(e.value)
    with pytest.raises(ConfigError) as e:
        parse_domain({"c": sections["c"], "a": {"kind": "box", "lo": "0", "hi": "1"},
                      "b": {"kind": "box", "lo": "2", "hi": "3"}}, "c", 1)
    assert "complement takes one operand" in str(e.value)
    with pytest.raises(ConfigError) as e:
        parse_domain(sections, "d", 1)
    assert "[d] radius" in str(e.value)
    with pytest.raises(ConfigError) as e:
        parse_domain(sections, "e", 1)
    assert "unknown domain kind: torus" in str(e.value)
    with pytest.raises(ConfigError) as e:
        parse_domain({"f": {"kind": "ball", "radius": "1"}}, "f", 1)
    assert "Missing key 'center' in [f]" in str(e.value)


def test_experiment_from_sections():
    config = experiment_from_sections(read_sections(EXPERIMENT))
    assert config.command == "energy"
    assert config.s == 0.25 and config.h == 0.0625 and config.seed == 7
    assert config.quadrature.refinement_levels == 2
    assert config.z().name == "restricted"
    assert config.region_g() == config.omega
    assert config.param_float("R") == 2.0 and config.param_float("r") == 0.5
    assert config.param_int("count", 5) == 5
    assert config.domain("hole") == ball([0.0], 0.25)
    override = experiment_from_sections(read_sections(EXPERIMENT), command="tail")
    assert override.command == "tail"
    assert override.with_overrides(seed=3).seed == 3


def test_dirichlet_interaction_by_default():
    config = experiment_from_sections({"experiment": {"command": "energy"},
                                       "omega": {"kind": "ball", "center": "0", "radius": "1"}})
    assert config.z().name == "dirichlet"
    with pytest.raises(ConfigError) as e:
        experiment_from_sections({"experiment": {"command": "energy"}}).require_omega()
    assert "needs an [omega] section" in str(e.value)


def test_general_interaction_from_named_sections():
    sections = {
        "experiment": {"command": "energy"},
        "omega": {"kind": "ball", "center": "0", "radius": "1"},
        "far": {"kind": "complement", "operands": "omega"},
        "interaction": {"u1": "omega", "u2": "far"},
    }
    config = experiment_from_sections(sections)
    assert config.z().name == "general"
    assert config.z().u2 == complement(ball([0.0], 1.0))


def test_experiment_validation():
    with pytest.raises(ValueError) as e:
        ExperimentConfig(command="integrate")
    assert "Unknown command" in str(e.value)
    with pytest.raises(ValueError) as e:
        ExperimentConfig(command="energy", h=0.0)
    assert "Spacing h must be positive" in str(e.value)
    with pytest.raises(ValueError) as e:
        ExperimentConfig(command="energy", seed=-1)
    assert "unsigned 64-bit" in str(e.value)
    with pytest.raises(ValueError):
        ExperimentConfig(command="energy", s=1.5)
    with pytest.raises(ValueError) as e:
        ExperimentConfig(command="energy", n=2, omega=ball([0.0], 1.0))
    assert "Omega has dimension 1" in str(e.value)
    with pytest.raises(ConfigError) as e:
        experiment_from_sections({"experiment": {"command": "energy"}, "interaction": {"preset": "dirichlet"}})
    assert "[interaction] needs an [omega] section" in str(e.value)
    with pytest.raises(ConfigError) as e:
        experiment_from_sections({"experiment": {"command": "energy"},
                                  "omega": {"kind": "ball", "center": "0", "radius": "1"},
                                  "interaction": {"preset": "periodic"}})
    assert "unknown preset: periodic" in str(e.value)
    with pytest.raises(ConfigError) as e:
        experiment_from_sections({"experiment": {"command": "energy"}, "function": {"kind": "spline"}})
    assert "unknown kind: spline" in str(e.value)


def test_load_experiment_files(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text(EXPERIMENT)
    assert load_experiment(str(ini)).omega.kind == "difference"
    as_json = tmp_path / "run.json"
    as_json.write_text(json.dumps({"experiment": {"command": "tail", "n": 2, "s": 0.75}}))
    config = load_experiment(str(as_json))
    assert (config.command, config.n, config.s) == ("tail", 2, 0.75)
    with pytest.raises(ConfigError) as e:
        load_experiment(str(tmp_path / "absent.ini"))
    assert "Cannot read experiment file" in str(e.value)


def test_expression_callable():
    func = expression_callable("x1**2 + sin(x2)", 2)
    points = np.array([[1.0, 0.0], [2.0, np.pi / 2]])
    assert func(points) == pytest.approx([1.0, 5.0])
    assert expression_callable("x + 1", 1)(np.array([[2.0]])) == pytest.approx([3.0])
    # constants broadcast to one value per point
    assert expression_callable("4", 1)(np.zeros((3, 1))) == pytest.approx([4.0, 4.0, 4.0])
    with pytest.raises(ConfigError) as e:
        expression_callable("x1 + y", 1)
    assert "unknown symbols: y" in str(e.value)
    with pytest.raises(ConfigError) as e:
        expression_callable("x1 +* 2", 1)
    assert "Invalid function expression" in str(e.value)


@pytest.mark.parametrize("section, at_origin", [
    ({"kind": "constant", "value": "2.5"}, 2.5),
    ({"kind": "gaussian", "height": "3"}, 3.0),
    ({"kind": "indicator", "domain": "omega"}, 1.0),
    ({"kind": "expression", "expr": "1 - x**2"}, 1.0),
    ({"kind": "torsion", "c": "1", "a": "1", "radius": "1"}, 0.0),
])
def test_build_function_kinds(section, at_origin):
    config = ExperimentConfig(command="eval-op", omega=ball([0.0], 1.0), function=section)
    lattice = build_grid(box([-1.5], [1.5]), 1.0 / 8)
    u = build_function(config, lattice)
    assert u.values[lattice.try_index([0.0])] == pytest.approx(at_origin)


def test_build_function_errors():
    lattice = build_grid(box([-1.0], [1.0]), 0.25)
    with pytest.raises(ConfigError) as e:
        build_function(ExperimentConfig(command="eval-op"), lattice)
    assert "needs a [function] section" in str(e.value)
    config = ExperimentConfig(command="eval-op", function={"kind": "expression", "expr": "1", "farfield": "linear"})
    with pytest.raises(ConfigError) as e:
        build_function(config, lattice)
    assert "unknown farfield: linear" in str(e.value)
    config = ExperimentConfig(command="eval-op", function={"kind": "bump", "center": "0"})
    with pytest.raises(ConfigError) as e:
        build_function(config, lattice)
    assert "Missing key 'width' in [function]" in str(e.value)


EXPERIMENTS = sorted(glob.glob(os.path.join(os.path.dirname(__file__), "..", "experiments", "*")))


@pytest.mark.parametrize("path", EXPERIMENTS, ids=os.path.basename)
def test_bundled_experiments_parse(path):
    config = load_experiment(path)
    assert config.command
    assert config.omega is not None or config.g is not None
