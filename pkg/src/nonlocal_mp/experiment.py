"""
Experiment files.

An experiment is an INI file (or the same structure as a JSON object) with
the sections

    [experiment]   command, n, s, h, seed, output, halo
    [quadrature]   delta, truncation_radius, refinement_levels, correction_mode
    [omega]        a domain section
    [interaction]  preset = dirichlet | restricted | semirestricted, or u1/u2 = section names
    [g]            a domain section (defaults to Omega)
    [function]     kind = constant | bump | gaussian | indicator | torsion | expression
    [params]       command parameters (x0, r, R, count, ...)

A domain section has kind = ball | box | full_space | complement | union |
difference with center/radius, lo/hi or operands naming other sections.
Parse problems raise ConfigError; values that parse but fail validation
raise ValueError from the objects they build.
"""

import configparser
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import sympy

from .degiorgi import SubsolutionProfile
from .errors import ConfigError
from .geometry import (DomainSpec, InteractionSet, Lattice, PRESETS, ball, box, complement, difference,
                       full_space, union)
from .grid_function import FarField, GridFunction
from .quadrature import FracParams, QuadratureScheme
from .utils import parse_bool, parse_float, parse_int, parse_name_list, parse_point

logger = logging.getLogger(__name__)

COMMANDS = ("eval-op", "energy", "tail", "killing-measure", "decomposition-check", "caccioppoli-sweep",
            "degiorgi", "barrier", "verify-mp", "counterexample", "mc-crosscheck", "calibrate-constants")

RESERVED_SECTIONS = ("experiment", "quadrature", "interaction", "function", "params")

FUNCTION_KINDS = ("constant", "bump", "gaussian", "indicator", "torsion", "expression")

SEED_LIMIT = 2 ** 64


def _get(section: Dict[str, str], key: str, parse: Callable[[str], Any], where: str, default: Any = None) -> Any:
    """Parse section[key], wrapping format errors in ConfigError."""
    raw = section.get(key)
    if raw is None or not str(raw).strip():
        if default is None:
            raise ConfigError(f"Missing key '{key}' in [{where}]")
        return default
    try:
        return parse(raw)
    except ValueError as e:
        raise ConfigError(f"[{where}] {key}: {e}")


def _flatten_json(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ", ".join(_flatten_json(v) for v in value)
    return str(value)


def read_sections(text: str, fmt: str = "ini") -> Dict[str, Dict[str, str]]:
    """
    Parse experiment text into {section: {key: text value}}.

    Raises:
        ConfigError: If the text is not valid INI or JSON of the expected shape
    """
    if fmt == "json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Invalid JSON experiment: {e}")
        if not isinstance(data, dict) or not all(isinstance(v, dict) for v in data.values()):
            raise ConfigError("JSON experiment must map section names to objects")
        return {name: {key: _flatten_json(v) for key, v in body.items()} for name, body in data.items()}
    if fmt != "ini":
        raise ConfigError(f"Unknown experiment format: {fmt}")
    parser = configparser.ConfigParser(interpolation=None)
    # keys are case-sensitive (r and R differ)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"Invalid experiment file: {e}")
    return {name: dict(parser.items(name)) for name in parser.sections()}


def parse_domain(sections: Dict[str, Dict[str, str]], name: str, dim: int,
                 stack: Tuple[str, ...] = ()) -> DomainSpec:
    """
    Build the domain described by section `name`; "full_space" needs no section.

    Raises:
        ConfigError: On unknown or cyclic references and malformed values
    """
    if name == "full_space":
        return full_space(dim)
    if name in stack:
        raise ConfigError(f"Cyclic domain reference: {' -> '.join(stack + (name,))}")
    if name not in sections:
        raise ConfigError(f"Unknown domain section [{name}]")
    section = sections[name]
    kind = _get(section, "kind", str.strip, name)
    if kind == "ball":
        return ball(_get(section, "center", lambda v: parse_point(v, dim), name),
                    _get(section, "radius", parse_float, name))
    if kind == "box":
        return box(_get(section, "lo", lambda v: parse_point(v, dim), name),
                   _get(section, "hi", lambda v: parse_point(v, dim), name))
    if kind == "full_space":
        return full_space(dim)
    operands = [parse_domain(sections, operand, dim, stack + (name,))
                for operand in _get(section, "operands", parse_name_list, name)]
    if kind == "complement":
        if len(operands) != 1:
            raise ConfigError(f"[{name}] complement takes one operand")
        return complement(operands[0])
    if kind == "union":
        return union(*operands)
    if kind == "difference":
        if len(operands) != 2:
            raise ConfigError(f"[{name}] difference takes two operands")
        return difference(operands[0], operands[1])
    raise ConfigError(f"[{name}] unknown domain kind: {kind}")


def _parse_quadrature(section: Dict[str, str]) -> QuadratureScheme:
    where = "quadrature"
    delta = section.get("delta")
    return QuadratureScheme(
        delta=None if delta in (None, "", "auto") else _get(section, "delta", parse_float, where),
        truncation_radius=_get(section, "truncation_radius", parse_float, where, float("inf")),
        refinement_levels=_get(section, "refinement_levels", parse_int, where, 1),
        correction_mode=_get(section, "correction_mode", str.strip, where, "symmetric_pair"),
    )


def _parse_interaction(sections: Dict[str, Dict[str, str]], omega: DomainSpec) -> InteractionSet:
    section = sections["interaction"]
    preset = section.get("preset", "").strip()
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"[interaction] unknown preset: {preset}")
        return PRESETS[preset](omega)
    resolved = {}
    for key in ("u1", "u2"):
        ref = _get(section, key, str.strip, "interaction")
        resolved[key] = omega if ref == "omega" else parse_domain(sections, ref, omega.dim)
    return InteractionSet(u1=resolved["u1"], u2=resolved["u2"], omega=omega, name="general")


@dataclass
class ExperimentConfig:
    """
    A parsed experiment.

    Attributes:
        command: Subcommand to run
        n, s: Dimension and order
        h: Lattice spacing
        seed: Seed for random families and Monte Carlo
        quadrature: Singular-integral settings
        omega: Domain of the equation
        interaction: Interaction set (Dirichlet preset on Omega when omitted)
        g: Region G for killing measures and decompositions (Omega when omitted)
        function: Raw [function] section
        params: Raw [params] section
        sections: Every parsed section, for named domain lookups
        output: Output directory override
        halo: Lattice margin around the covered region (None: command default)
    """
    command: str
    n: int = 1
    s: float = 0.5
    h: float = 1.0 / 32
    seed: int = 0
    quadrature: QuadratureScheme = field(default_factory=QuadratureScheme)
    omega: Optional[DomainSpec] = None
    interaction: Optional[InteractionSet] = None
    g: Optional[DomainSpec] = None
    function: Dict[str, str] = field(default_factory=dict)
    params: Dict[str, str] = field(default_factory=dict)
    sections: Dict[str, Dict[str, str]] = field(default_factory=dict)
    output: Optional[str] = None
    halo: Optional[float] = None

    def __post_init__(self):
        """Validate data after initialization."""
        if self.command and self.command not in COMMANDS:
            raise ValueError(f"Unknown command: {self.command}")
        if not self.h > 0:
            raise ValueError(f"Spacing h must be positive, got {self.h}")
        if not 0 <= self.seed < SEED_LIMIT:
            raise ValueError(f"Seed must be an unsigned 64-bit integer, got {self.seed}")
        FracParams(self.n, self.s)
        if self.omega is not None and self.omega.dim != self.n:
            raise ValueError(f"Omega has dimension {self.omega.dim}, experiment has n={self.n}")

    @property
    def frac_params(self) -> FracParams:
        return FracParams(self.n, self.s)

    def require_omega(self) -> DomainSpec:
        if self.omega is None:
            raise ConfigError("This command needs an [omega] section")
        return self.omega

    def z(self) -> InteractionSet:
        """The interaction set, defaulting to the Dirichlet preset."""
        if self.interaction is not None:
            return self.interaction
        return PRESETS["dirichlet"](self.require_omega())

    def region_g(self) -> DomainSpec:
        return self.g if self.g is not None else self.require_omega()

    def domain(self, name: str) -> DomainSpec:
        """A named domain section ("omega" and "g" included)."""
        if name == "omega":
            return self.require_omega()
        if name == "g":
            return self.region_g()
        return parse_domain(self.sections, name, self.n)

    def with_overrides(self, seed: Optional[int] = None, h: Optional[float] = None,
                       output: Optional[str] = None) -> "ExperimentConfig":
        return replace(self, seed=self.seed if seed is None else seed, h=self.h if h is None else h,
                       output=self.output if output is None else output)

    def param_float(self, key: str, default: Optional[float] = None) -> float:
        return _get(self.params, key, parse_float, "params", default)

    def param_int(self, key: str, default: Optional[int] = None) -> int:
        return _get(self.params, key, parse_int, "params", default)

    def param_bool(self, key: str, default: Optional[bool] = None) -> bool:
        return _get(self.params, key, parse_bool, "params", default)

    def param_str(self, key: str, default: Optional[str] = None) -> str:
        return _get(self.params, key, str.strip, "params", default)

    def param_point(self, key: str, default=None) -> np.ndarray:
        return _get(self.params, key, lambda v: parse_point(v, self.n), "params", default)

    def param_list(self, key: str, default: Optional[List[str]] = None) -> List[str]:
        return _get(self.params, key, parse_name_list, "params", default)


def experiment_from_sections(sections: Dict[str, Dict[str, str]], command: Optional[str] = None) -> ExperimentConfig:
    """
    Build an ExperimentConfig from parsed sections.

    Args:
        sections: Output of read_sections
        command: Command given on the command line; overrides [experiment] command

    Raises:
        ConfigError: On missing sections, keys or malformed values
        ValueError: If a value parses but is invalid
    """
    head = sections.get("experiment", {})
    where = "experiment"
    name = command or _get(head, "command", str.strip, where)
    n = _get(head, "n", parse_int, where, 1)
    omega = parse_domain(sections, "omega", n) if "omega" in sections else None
    interaction = None
    if "interaction" in sections:
        if omega is None:
            raise ConfigError("[interaction] needs an [omega] section")
        interaction = _parse_interaction(sections, omega)
    g = parse_domain(sections, "g", n) if "g" in sections else None
    function = dict(sections.get("function", {}))
    if function and function.get("kind", "").strip() not in FUNCTION_KINDS:
        raise ConfigError(f"[function] unknown kind: {function.get('kind')}")
    config = ExperimentConfig(
        command=name,
        n=n,
        s=_get(head, "s", parse_float, where, 0.5),
        h=_get(head, "h", parse_float, where, 1.0 / 32),
        seed=_get(head, "seed", parse_int, where, 0),
        quadrature=_parse_quadrature(sections.get("quadrature", {})),
        omega=omega,
        interaction=interaction,
        g=g,
        function=function,
        params=dict(sections.get("params", {})),
        sections=sections,
        output=head.get("output") or None,
        halo=_get(head, "halo", parse_float, where) if head.get("halo") else None,
    )
    logger.debug("Parsed experiment %s with sections %s", name, sorted(sections))
    return config


def load_experiment(path: str, command: Optional[str] = None) -> ExperimentConfig:
    """
    Read an experiment file; *.json files are JSON, anything else INI.

    Raises:
        ConfigError: If the file cannot be read or parsed
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"Cannot read experiment file {path}: {e}")
    fmt = "json" if path.lower().endswith(".json") else "ini"
    return experiment_from_sections(read_sections(text, fmt), command)


def _farfield(section: Dict[str, str]) -> FarField:
    kind = section.get("farfield", "compact").strip()
    if kind == "compact":
        return FarField.compact()
    if kind == "constant":
        return FarField.constant(_get(section, "far_c", parse_float, "function"))
    if kind == "power":
        return FarField.power(_get(section, "far_c", parse_float, "function"),
                              _get(section, "far_q", parse_float, "function"))
    raise ConfigError(f"[function] unknown farfield: {kind}")


def expression_callable(expression: str, n: int) -> Callable[[np.ndarray], np.ndarray]:
    """
    Vectorized callable for an expression in x1..xn (x is an alias for x1 when n = 1).

    Raises:
        ConfigError: If the expression does not parse or uses other symbols
    """
    symbols = sympy.symbols([f"x{k + 1}" for k in range(n)])
    names = {str(sym): sym for sym in symbols}
    if n == 1:
        names["x"] = symbols[0]
    try:
        parsed = sympy.sympify(expression, locals=names)
    except (sympy.SympifyError, SyntaxError, TypeError) as e:
        raise ConfigError(f"Invalid function expression '{expression}': {e}")
    unknown = parsed.free_symbols - set(symbols)
    if unknown:
        raise ConfigError(f"Expression uses unknown symbols: {', '.join(sorted(map(str, unknown)))}")
    func = sympy.lambdify(symbols, parsed, modules="numpy")

    def evaluate(points: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(func(*points.T), dtype=float), (points.shape[0],)).copy()

    return evaluate


def build_function(config: ExperimentConfig, lattice: Lattice, section: Optional[Dict[str, str]] = None) -> GridFunction:
    """
    Grid function described by the [function] section.

    Raises:
        ConfigError: If the section is missing or malformed
    """
    section = config.function if section is None else section
    if not section:
        raise ConfigError("This command needs a [function] section")
    where = "function"
    kind = _get(section, "kind", str.strip, where)
    n = config.n
    if kind == "constant":
        return GridFunction.constant(lattice, _get(section, "value", parse_float, where))
    if kind == "bump":
        return GridFunction.bump(lattice, _get(section, "center", lambda v: parse_point(v, n), where),
                                 _get(section, "width", parse_float, where),
                                 _get(section, "height", parse_float, where, 1.0))
    if kind == "gaussian":
        center = _get(section, "center", lambda v: parse_point(v, n), where, np.zeros(n))
        width = _get(section, "width", parse_float, where, 1.0)
        height = _get(section, "height", parse_float, where, 1.0)
        return GridFunction.from_callable(
            lattice, lambda pts: height * np.exp(-np.sum((pts - center) ** 2, axis=1) / width ** 2))
    if kind == "indicator":
        return GridFunction.indicator(lattice, config.domain(_get(section, "domain", str.strip, where)))
    if kind == "torsion":
        profile = SubsolutionProfile(c=_get(section, "c", parse_float, where, 0.0),
                                     a=_get(section, "a", parse_float, where, 1.0),
                                     radius=_get(section, "radius", parse_float, where))
        return profile.on(lattice, config.s)
    if kind == "expression":
        func = expression_callable(_get(section, "expr", str.strip, where), n)
        return GridFunction.from_callable(lattice, func, _farfield(section))
    raise ConfigError(f"[function] unknown kind: {kind}")
