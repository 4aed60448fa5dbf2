import json
import os

import pytest
from nonlocal_mp.config_manager import ConfigManager, packaged_constants, worker_count


def test_creates_config_and_output_dir(tmp_path):
    manager = ConfigManager(str(tmp_path))
    assert os.path.isfile(tmp_path / "config.json")
    assert os.path.isdir(tmp_path / "results")
    assert manager.config.output_dir == os.path.join(str(tmp_path), "results")
    assert "Created config file with defaults" in manager.config_log


def test_home_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("NONLOCAL_MP_HOME", str(tmp_path / "home"))
    manager = ConfigManager()
    assert manager.config_dir == str(tmp_path / "home")


def test_invalid_config_file(tmp_path):
    (tmp_path / "config.json").write_text("{not json")
    with pytest.raises(ValueError) as e:
        ConfigManager(str(tmp_path))
    assert "Invalid config file" in str(e.value)


def test_partial_config_keeps_defaults(tmp_path):
    (tmp_path / "config.json").write_text(json.dumps({"threads": 3}))
    manager = ConfigManager(str(tmp_path))
    assert manager.config.threads == 3
    assert manager.config.constants_file == os.path.join(str(tmp_path), "constants.json")


def test_no_packaged_constants_until_calibrated(tmp_path):
    manager = ConfigManager(str(tmp_path))
    assert packaged_constants() == []
    with pytest.raises(ValueError) as e:
        manager.lookup_constants(1, 0.5)
    assert "run calibrate-constants" in str(e.value)


def test_ensure_creates_missing_directories_once(tmp_path):
    home = tmp_path / "fresh"
    manager = ConfigManager(str(home))
    assert os.path.isdir(home / "results")
    assert "Created config dir" in manager.config_log
    assert "Created output dir" in manager.config_log
    assert "Created" not in ConfigManager(str(home)).config_log


def test_saved_constants_take_precedence(tmp_path):
    manager = ConfigManager(str(tmp_path))
    path = manager.save_constants([{"n": 1, "s": 0.5, "c_hat": 3.0, "c_sob": 0.2,
                                    "calibration_date": "2024-01-01", "family_hash": "abc"},
                                   {"n": 2, "s": 0.5, "c_hat": 5.0, "c_sob": 0.1,
                                    "calibration_date": "2024-01-01", "family_hash": "def"}])
    with open(path) as f:
        saved = json.load(f)
    assert saved["version"] == 1
    assert manager.lookup_constants(1, 0.5)["c_hat"] == 3.0
    assert manager.lookup_constants(2, 0.5)["family_hash"] == "def"
    assert [(e["n"], e["s"]) for e in saved["entries"]] == [(1, 0.5), (2, 0.5)]
    manager.save_constants([{"n": 1, "s": 0.25, "c_hat": 7.0, "c_sob": 0.3,
                             "calibration_date": "2024-01-02", "family_hash": "ghi"}])
    # earlier entries survive the merge
    assert manager.lookup_constants(1, 0.5)["c_hat"] == 3.0
    assert manager.lookup_constants(1, 0.25)["c_hat"] == 7.0


def test_worker_count(monkeypatch):
    monkeypatch.delenv("NONLOCAL_MP_THREADS", raising=False)
    assert worker_count(3) == 3
    assert worker_count(0) >= 1
    monkeypatch.setenv("NONLOCAL_MP_THREADS", "2")
    assert worker_count(8) == 2
    assert worker_count(1) == 1
    monkeypatch.setenv("NONLOCAL_MP_THREADS", "many")
    with pytest.raises(ValueError) as e:
        worker_count(1)
    assert "Invalid NONLOCAL_MP_THREADS" in str(e.value)
    monkeypatch.setenv("NONLOCAL_MP_THREADS", "0")
    with pytest.raises(ValueError):
        worker_count(1)
