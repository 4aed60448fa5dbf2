import json

import numpy as np
import pytest
from nonlocal_mp.main import build_parser, main

CONSTANT_RUN = """
[experiment]
command = eval-op
h = 0.125

[omega]
kind = box
lo = -1
hi = 1

[function]
kind = constant
value = 1
"""

BUMP_ENERGY = """
[experiment]
command = energy
s = 0.25
h = 0.125

[omega]
kind = ball
center = 0
radius = 1

[function]
kind = bump
center = 0.25
width = 0.5
"""


DEGIORGI_FAMILY = """
[experiment]
command = degiorgi
s = 0.75
h = 0.0625

[params]
c_hat = 1e6
count = 4
jmax = 4
"""

DEGIORGI_BUMP = """
[experiment]
command = degiorgi
h = 0.125

[params]
c_hat = 1

[function]
kind = bump
center = 0
width = 1
"""


@pytest.fixture
def home(tmp_path, monkeypatch):
    monkeypatch.setenv("NONLOCAL_MP_HOME", str(tmp_path / "home"))
    monkeypatch.setenv("NONLOCAL_MP_THREADS", "2")
    return tmp_path


def _run(argv):
    with pytest.raises(SystemExit) as e:
        main(argv)
    return e.value.code


def test_parser_knows_every_command():
    args = build_parser().parse_args(["verify-mp", "--seed", "3", "--h", "0.5", "--quiet"])
    assert (args.command, args.seed, args.h, args.quiet) == ("verify-mp", 3, 0.5, True)


def test_eval_op_annihilates_constants(home):
    config = home / "constant.ini"
    config.write_text(CONSTANT_RUN)
    out = home / "out"
    assert _run(["eval-op", "--config", str(config), "--out", str(out), "--quiet"]) == 0
    table = np.loadtxt(out / "eval-op.csv", delimiter=",", skiprows=1, ndmin=2)
    assert table.shape[1] == 3
    assert np.all(np.abs(table[:, 1]) < 1e-9)
    assert (out / "eval-op.json").exists()


def test_golden_output_is_reproducible(home):
    config = home / "energy.ini"
    config.write_text(BUMP_ENERGY)
    first, second = home / "first", home / "second"
    assert _run(["energy", "--config", str(config), "--out", str(first), "--quiet"]) == 0
    assert _run(["energy", "--config", str(config), "--out", str(second), "--quiet"]) == 0
    assert (first / "energy.json").read_text() == (second / "energy.json").read_text()


def test_parse_errors_exit_with_one(home):
    assert _run(["integrate"]) == 1
    assert _run(["energy", "--config", str(home / "missing.ini"), "--quiet"]) == 1
    broken = home / "broken.ini"
    broken.write_text("[omega]\nkind = ball\n")
    assert _run(["energy", "--config", str(broken), "--quiet"]) == 1


def test_invalid_values_exit_with_two(home):
    assert _run(["energy", "--h", "-0.5", "--quiet"]) == 2
    bad_radius = home / "bad.ini"
    bad_radius.write_text(BUMP_ENERGY.replace("radius = 1", "radius = -1"))
    assert _run(["energy", "--config", str(bad_radius), "--quiet"]) == 2


def test_version_exits_cleanly(capsys):
    assert _run(["--version"]) == 0
    assert "nonlocal_mp" in capsys.readouterr().out


def test_degiorgi_checks_the_held_out_family(home):
    config = home / "degiorgi.ini"
    config.write_text(DEGIORGI_FAMILY)
    out = home / "out"
    assert _run(["degiorgi", "--config", str(config), "--out", str(out), "--quiet"]) == 0
    data = json.loads((out / "degiorgi.json").read_text())
    traces = data["traces"]
    assert data["violations"] == []
    assert len(traces) == 4
    for trace in traces.values():
        assert trace["bound_ok"]
        assert all(trace["induction_ok"])


def test_degiorgi_rejects_a_non_subsolution(home):
    config = home / "bump.ini"
    config.write_text(DEGIORGI_BUMP)
    assert _run(["degiorgi", "--config", str(config), "--out", str(home / "out"), "--quiet"]) == 2
