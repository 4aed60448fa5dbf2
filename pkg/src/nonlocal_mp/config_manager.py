import os
import json
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import List, Optional

HOME_ENV = "NONLOCAL_MP_HOME"
THREADS_ENV = "NONLOCAL_MP_THREADS"


class MissingFile(Enum):
    CONFIG_DIR = 1
    CONFIG_FILE = 2
    OUTPUT_DIR = 3


@dataclass
class Config:
    """
    Dataclass for the config

    Attributes:
        output_dir: The absolute path to the directory results are written to.
        constants_file: The absolute path to the user's calibrated constants file.
        threads: Worker count for lattice-wide evaluations (0 means one per CPU).
    """
    output_dir: str
    constants_file: str
    threads: int = 0


def worker_count(requested: int = 0) -> int:
    """
    Number of workers for parallel maps.

    Args:
        requested: Preferred count; 0 means one per CPU

    Returns:
        int: The requested count capped by NONLOCAL_MP_THREADS

    Raises:
        ValueError: If the environment variable is not a positive integer
    """
    count = int(requested) if requested and requested > 0 else (os.cpu_count() or 1)
    raw = os.environ.get(THREADS_ENV)
    if raw is None or not raw.strip():
        return count
    try:
        cap = int(raw)
    except ValueError:
        raise ValueError(f"Invalid {THREADS_ENV} value: {raw}")
    if cap < 1:
        raise ValueError(f"{THREADS_ENV} must be at least 1, got {cap}")
    return min(count, cap)


def packaged_constants() -> List[dict]:
    """Constants entries shipped with the package."""
    with resources.files("nonlocal_mp").joinpath("constants.json").open("r") as f:
        return json.load(f)["entries"]


class ConfigManager:
    """
    A class to manage the config and the directories where results and
    calibrated constants are stored.
    """
    def __init__(self, config_dir: Optional[str] = None) -> None:
        self.config_dir = config_dir or os.environ.get(HOME_ENV) or os.path.expanduser("~/.nonlocal_mp")
        self.config_file = os.path.join(self.config_dir, "config.json")
        self.config_log = ""
        self._defaults = {
            "output_dir": os.path.join(self.config_dir, "results"),
            "constants_file": os.path.join(self.config_dir, "constants.json"),
            "threads": 0,
        }

        self.ensure(MissingFile.CONFIG_DIR)
        self.ensure(MissingFile.CONFIG_FILE)
        self.config = self.load_config()
        self.ensure(MissingFile.OUTPUT_DIR)

        self.config_log += self.display_config()

    def display_config(self) -> str:
        source = self.config.constants_file if os.path.isfile(self.config.constants_file) else "packaged constants"
        return "\n".join(
            [f"Using {self.config.output_dir}",
             f"Using {source}",
             f"Using {self.threads()} worker(s)"]
        )

    def ensure(self, missing: MissingFile) -> None:
        """
        Creates the config directory, the config file (with defaults) or the
        output directory when it does not exist yet.
        """
        if missing is MissingFile.CONFIG_FILE:
            if not os.path.isfile(self.config_file):
                with open(self.config_file, "w") as f:
                    f.write(json.dumps(self._defaults, indent=2))
                self.config_log += f"Created config file with defaults at {self.config_file}\n"
            return
        path = self.config_dir if missing is MissingFile.CONFIG_DIR else self.config.output_dir
        if not os.path.isdir(path):
            os.makedirs(path)
            self.config_log += f"Created {missing.name.lower().replace('_', ' ')} at {path}\n"

    def load_config(self) -> Config:
        """
        Loads config from file and returns it in the Config class.

        Raises:
            FileNotFoundError: If config file does not exist.
            ValueError: If the config file is not valid JSON.
        """
        if not os.path.isfile(self.config_file):
            raise FileNotFoundError(MissingFile.CONFIG_FILE)
        with open(self.config_file, "r") as f:
            try:
                config = json.loads(f.read())
            except json.JSONDecodeError as e:
                raise ValueError(f"Invalid config file {self.config_file}: {e}")
        self.config_log += f"Loaded config file at {self.config_file}\n"
        merged = {**self._defaults, **config}
        return Config(
            output_dir=merged["output_dir"],
            constants_file=merged["constants_file"],
            threads=int(merged["threads"]),
        )

    def threads(self) -> int:
        return worker_count(self.config.threads)

    def load_constants(self) -> List[dict]:
        """
        Constants entries: the user's calibrated file when present, else the packaged one.
        """
        if os.path.isfile(self.config.constants_file):
            with open(self.config.constants_file, "r") as f:
                self.config_log += f"Loaded constants from {self.config.constants_file}\n"
                return json.load(f)["entries"]
        return packaged_constants()

    def lookup_constants(self, n: int, s: float) -> dict:
        """
        Constants entry for (n, s).

        Raises:
            ValueError: If no entry matches
        """
        for entry in self.load_constants():
            if entry["n"] == n and abs(entry["s"] - s) < 1e-12:
                return entry
        raise ValueError(f"No calibrated constants for n={n}, s={s}; run calibrate-constants")

    def save_constants(self, entries: List[dict]) -> str:
        """Write calibrated entries, merged over existing ones, to the user's constants file."""
        existing = {(e["n"], round(e["s"], 12)): e for e in self.load_constants()}
        for entry in entries:
            existing[(entry["n"], round(entry["s"], 12))] = entry
        ordered = [existing[key] for key in sorted(existing)]
        with open(self.config.constants_file, "w") as f:
            json.dump({"version": 1, "entries": ordered}, f, indent=2, sort_keys=True)
            f.write("\n")
        self.config_log += f"Saved constants to {self.config.constants_file}\n"
        return self.config.constants_file
