"""Problem configuration documents.

A document is a sequence of ``key = value`` lines with dotted key paths.
``#`` starts a comment; blank lines are ignored.  Example::

    # GBM with beta = 2
    process.family = GBM
    process.alpha  = 0
    process.sigma  = 0.2
    rho            = 0.04
    invest_cost    = 1
    x0             = 1
    simulation.n_paths = 100000

Custom processes give their coefficients as expressions in ``x``::

    process.family       = Custom
    process.drift        = 0.03*x
    process.diffusion    = 0.25*x
    process.domain.lower = 0
    process.domain.upper = inf

Every key and its meaning is listed in ``KEYS``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Optional

from .errors import ConfigError, ExpressionError, ParameterError, ThresholdOptionsError
from .expressions import parse_expression
from .processes import (
    ABMParams,
    CIRParams,
    DiffusionSpec,
    Family,
    GBMParams,
    GeometricOUParams,
    Interval,
    make_custom,
    make_family,
)


@dataclass(frozen=True)
class ProcessConfig:
    family: str = "GBM"
    alpha: Optional[float] = None
    sigma: Optional[float] = None
    xbar: Optional[float] = None
    drift: Optional[str] = None
    diffusion: Optional[str] = None
    lower: Optional[float] = None
    upper: Optional[float] = None


@dataclass(frozen=True)
class SolverConfig:
    bracket_lower: Optional[float] = None
    bracket_upper: Optional[float] = None
    grid_points: int = 1000
    pasting_points: int = 2000
    verify_points: int = 2000
    rtol: float = 1e-10
    numeric_x0: Optional[float] = None
    numeric_lower: Optional[float] = None
    numeric_upper: Optional[float] = None
    numeric_points: int = 200


@dataclass(frozen=True)
class SimulationConfig:
    step: Optional[float] = None
    horizon: Optional[float] = None
    n_paths: int = 10_000
    seed: int = 0
    threshold: Optional[float] = None


@dataclass(frozen=True)
class SweepConfig:
    param: Optional[str] = None
    start: Optional[float] = None
    stop: Optional[float] = None
    count: int = 0
    values: Optional[tuple[float, ...]] = None


@dataclass(frozen=True)
class ProblemConfig:
    process: ProcessConfig = field(default_factory=ProcessConfig)
    rho: Optional[float] = None
    invest_cost: Optional[float] = None
    x0: Optional[float] = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output_dir: Optional[str] = None


# key -> (section attribute or None, field name, kind, description)
KEYS: dict[str, tuple[Optional[str], str, str, str]] = {
    "process.family": ("process", "family", "str", "GBM | ABM | GeometricOU | CIR | Custom"),
    "process.alpha": ("process", "alpha", "float", "drift / mean-reversion speed"),
    "process.sigma": ("process", "sigma", "float", "volatility"),
    "process.xbar": ("process", "xbar", "float", "mean-reversion level"),
    "process.drift": ("process", "drift", "expr", "custom drift a(x)"),
    "process.diffusion": ("process", "diffusion", "expr", "custom diffusion sigma(x)"),
    "process.domain.lower": ("process", "lower", "float", "custom state-space lower end (may be -inf)"),
    "process.domain.upper": ("process", "upper", "float", "custom state-space upper end (may be inf)"),
    "rho": (None, "rho", "float", "discount rate"),
    "invest_cost": (None, "invest_cost", "float", "investment cost I"),
    "x0": (None, "x0", "float", "initial state"),
    "solver.bracket.lower": ("solver", "bracket_lower", "float", "threshold search lower edge"),
    "solver.bracket.upper": ("solver", "bracket_upper", "float", "threshold search upper edge"),
    "solver.grid_points": ("solver", "grid_points", "int", "argmax-h scan points"),
    "solver.pasting_points": ("solver", "pasting_points", "int", "smooth-pasting scan points"),
    "solver.verify_points": ("solver", "verify_points", "int", "verification points per side"),
    "solver.rtol": ("solver", "rtol", "float", "golden-section relative tolerance"),
    "solver.numeric.x0": ("solver", "numeric_x0", "float", "normalisation point of numeric psi"),
    "solver.numeric.lower": ("solver", "numeric_lower", "float", "numeric psi range lower end"),
    "solver.numeric.upper": ("solver", "numeric_upper", "float", "numeric psi range upper end"),
    "solver.numeric.points": ("solver", "numeric_points", "int", "numeric psi check grid size"),
    "simulation.step": ("simulation", "step", "float", "Euler time step (default 1e-4/rho)"),
    "simulation.horizon": ("simulation", "horizon", "float", "simulation horizon (default 10/rho)"),
    "simulation.n_paths": ("simulation", "n_paths", "int", "number of paths"),
    "simulation.seed": ("simulation", "seed", "int", "64-bit seed"),
    "simulation.threshold": ("simulation", "threshold", "float", "threshold to simulate (default p*)"),
    "sweep.param": ("sweep", "param", "str", "swept key, e.g. process.sigma"),
    "sweep.start": ("sweep", "start", "float", "first value"),
    "sweep.stop": ("sweep", "stop", "float", "last value"),
    "sweep.count": ("sweep", "count", "int", "number of values"),
    "sweep.values": ("sweep", "values", "floats", "explicit comma-separated values (instead of start/stop/count)"),
    "output.dir": (None, "output_dir", "str", "output directory"),
}

SWEEPABLE = ("process.alpha", "process.sigma", "process.xbar", "rho", "invest_cost", "x0")


def _convert(key: str, kind: str, raw: str, line: Optional[int]) -> Any:
    if kind == "str":
        if not raw:
            raise ConfigError(key, "empty value", line)
        return raw
    if kind == "expr":
        try:
            parse_expression(raw)
        except ExpressionError as exc:
            raise ConfigError(key, f"bad expression: {exc}", line) from None
        return raw
    if kind == "floats":
        if not raw:
            return ()
        return tuple(_convert(key, "float", part.strip(), line) for part in raw.split(","))
    if kind == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(key, f"expected an integer, got {raw!r}", line) from None
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {raw!r}", line) from None
    if math.isnan(value):
        raise ConfigError(key, "NaN is not allowed", line)
    return value


def _assign(cfg: ProblemConfig, key: str, value: Any) -> ProblemConfig:
    section, name, _, _ = KEYS[key]
    if section is None:
        return replace(cfg, **{name: value})
    return replace(cfg, **{section: replace(getattr(cfg, section), **{name: value})})


def lookup(cfg: ProblemConfig, key: str) -> Any:
    section, name, _, _ = KEYS[key]
    return getattr(cfg if section is None else getattr(cfg, section), name)


def with_value(cfg: ProblemConfig, key: str, value: Any) -> ProblemConfig:
    """Copy of ``cfg`` with one key replaced (used by sweeps and CLI overrides)."""
    if key not in KEYS:
        raise ConfigError(key, "unknown key")
    return _assign(cfg, key, value)


def parse_config(text: str, validate: bool = True) -> ProblemConfig:
    cfg = ProblemConfig()
    seen: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(None, f"expected 'key = value', got {body!r}", lineno)
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in KEYS:
            raise ConfigError(key, "unknown key", lineno)
        if key in seen:
            raise ConfigError(key, f"duplicate key (first set on line {seen[key]})", lineno)
        seen[key] = lineno
        cfg = _assign(cfg, key, _convert(key, KEYS[key][2], raw, lineno))
    if validate:
        validate_config(cfg)
    return cfg


def load_config(path: str, validate: bool = True) -> ProblemConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(None, f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, validate)


def _format(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(v) for v in value)
    return str(value)


def serialize_config(cfg: ProblemConfig) -> str:
    lines = []
    for key in KEYS:
        value = lookup(cfg, key)
        default = lookup(ProblemConfig(), key)
        if value is None or (value == default and key != "process.family"):
            continue
        lines.append(f"{key} = {_format(value)}")
    return "\n".join(lines) + "\n"


_PARAM_KEYS = {"alpha": "process.alpha", "sigma": "process.sigma", "xbar": "process.xbar",
               "rho": "rho", "invest_cost": "invest_cost", "drift": "process.drift",
               "diffusion": "process.diffusion", "b": "process.diffusion"}


def build_spec(cfg: ProblemConfig) -> DiffusionSpec:
    """Problem instance described by the config; errors name the config key."""
    pc = cfg.process
    for key in ("rho", "invest_cost"):
        if lookup(cfg, key) is None:
            raise ConfigError(key, "required")
    try:
        family = Family(pc.family)
    except ValueError:
        raise ConfigError("process.family", f"unknown family {pc.family!r}") from None

    def need(key: str) -> float:
        value = lookup(cfg, key)
        if value is None:
            raise ConfigError(key, f"required for family {family.value}")
        return value

    try:
        if family is Family.CUSTOM:
            drift = parse_expression(need("process.drift"))
            diffusion = parse_expression(need("process.diffusion"))
            lower = -math.inf if pc.lower is None else pc.lower
            upper = math.inf if pc.upper is None else pc.upper
            try:
                domain = Interval.open(lower, upper)
            except ValueError as exc:
                raise ConfigError("process.domain.lower", str(exc)) from None
            return make_custom(drift, diffusion, domain, cfg.rho, cfg.invest_cost, label=f"Custom[{drift}; {diffusion}]")
        if family in (Family.GBM, Family.ABM):
            cls = GBMParams if family is Family.GBM else ABMParams
            params = cls(need("process.alpha"), need("process.sigma"))
        else:
            cls = GeometricOUParams if family is Family.GEOMETRIC_OU else CIRParams
            params = cls(need("process.alpha"), need("process.xbar"), need("process.sigma"))
        return make_family(family, params, cfg.rho, cfg.invest_cost)
    except ParameterError as exc:
        raise ConfigError(_PARAM_KEYS.get(exc.param, exc.param), exc.message) from None
    except ThresholdOptionsError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("process.diffusion", str(exc)) from None


def validate_config(cfg: ProblemConfig) -> DiffusionSpec:
    spec = build_spec(cfg)
    if cfg.x0 is not None and not spec.domain.contains_interior(cfg.x0):
        raise ConfigError("x0", f"initial state {cfg.x0!r} outside the interior {spec.domain}")
    sc = cfg.solver
    for key in ("solver.grid_points", "solver.pasting_points", "solver.verify_points", "solver.numeric.points"):
        if lookup(cfg, key) < 3:
            raise ConfigError(key, "need at least 3 points")
    if sc.bracket_lower is not None and sc.bracket_upper is not None and not sc.bracket_lower < sc.bracket_upper:
        raise ConfigError("solver.bracket.lower", "bracket lower edge must be below the upper edge")
    sim = cfg.simulation
    if sim.n_paths < 1:
        raise ConfigError("simulation.n_paths", "need at least one path")
    if not 0 <= sim.seed < 2**64:
        raise ConfigError("simulation.seed", "must be an unsigned 64-bit integer")
    for key in ("simulation.step", "simulation.horizon"):
        value = lookup(cfg, key)
        if value is not None and not (value > 0 and math.isfinite(value)):
            raise ConfigError(key, "must be positive and finite")
    if sim.step is not None and sim.horizon is not None and sim.step > sim.horizon:
        raise ConfigError("simulation.step", "time step exceeds the horizon")
    sw = cfg.sweep
    if sw.param is not None and sw.param not in SWEEPABLE:
        raise ConfigError("sweep.param", f"cannot sweep {sw.param!r}; choose one of {', '.join(SWEEPABLE)}")
    if sw.count < 0:
        raise ConfigError("sweep.count", "must be non-negative")
    if sw.values is not None and (sw.count or sw.start is not None or sw.stop is not None):
        raise ConfigError("sweep.values", "give either sweep.values or sweep.start/stop/count, not both")
    return spec


def describe_keys() -> str:
    """One line per key, for ``--help``-style output."""
    return "\n".join(f"{k:24s} {v[2]:6s} {v[3]}" for k, v in KEYS.items())


def config_fields() -> list[str]:
    return [f.name for f in fields(ProblemConfig)]
