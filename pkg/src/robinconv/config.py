"""Run configuration: a line-based ``section.key = value`` format.

Blank lines and ``#`` comments are ignored. Unknown sections or keys,
duplicate keys and malformed values are errors. Example::

    mesh.kind = interval
    mesh.n = 128
    problem.p = 2
    problem.beta = 1.0
    reaction.name = example
    reaction.eta = 3
    ...
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .errors import ConfigError, InvalidArgumentError
from .solver import EpsilonSchedule, SolverOptions

MESH_KINDS = ("interval", "rectangle")
REACTIONS = ("example", "zero", "linear")


@dataclass
class MeshConfig:
    kind: str = "interval"
    a: float = 0.0
    b: float = 1.0
    n: int = 64
    lx: float = 1.0
    ly: float = 1.0
    nx: int = 16
    ny: int = 16


@dataclass
class ProblemConfig:
    p: float = 2.0
    beta: Union[float, Path] = 1.0  # constant or path to a field CSV
    delta: Optional[float] = None


@dataclass
class ReactionConfig:
    name: str = "zero"
    eta: Optional[float] = None
    theta: Optional[float] = None
    q: Optional[float] = None
    tau: Optional[float] = None
    r: Optional[float] = None
    coefficient: Optional[float] = None


@dataclass
class EigenConfig:
    tol: Optional[float] = None
    max_iter: int = 100_000


@dataclass
class CheckConfig:
    M: Optional[float] = None  # default: C1 proxy of the computed solution, or 10


@dataclass
class OutputConfig:
    directory: Path = Path("out")
    field: bool = True
    trace: bool = True
    log: bool = True


@dataclass
class RunConfig:
    mesh: MeshConfig = field(default_factory=MeshConfig)
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    reaction: ReactionConfig = field(default_factory=ReactionConfig)
    solver: SolverOptions = field(default_factory=SolverOptions)
    schedule: EpsilonSchedule = field(default_factory=EpsilonSchedule)
    eigen: EigenConfig = field(default_factory=EigenConfig)
    check: CheckConfig = field(default_factory=CheckConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


_SECTIONS = {
    "mesh": MeshConfig,
    "problem": ProblemConfig,
    "reaction": ReactionConfig,
    "solver": SolverOptions,
    "schedule": EpsilonSchedule,
    "eigen": EigenConfig,
    "check": CheckConfig,
    "output": OutputConfig,
}
_EXCLUDED = {("schedule", "explicit")}
_REQUIRED = ("mesh.kind", "problem.p", "reaction.name")


def _to_bool(text):
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _to_int(text):
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


def _converter(section, key, default):
    if section == "problem" and key == "beta":
        return _float_or_path
    if section == "output" and key == "directory":
        return Path
    if isinstance(default, bool):
        return _to_bool
    if isinstance(default, int):
        return _to_int
    if isinstance(default, str):
        return str
    return float


def _float_or_path(text):
    try:
        return float(text)
    except ValueError:
        return Path(text)


def _split(lineno, raw):
    line = raw.split("#", 1)[0].strip()
    if not line:
        return None
    if "=" not in line:
        raise ConfigError(f"line {lineno}: expected 'section.key = value'", line=lineno)
    lhs, rhs = (s.strip() for s in line.split("=", 1))
    if lhs.count(".") != 1 or not rhs:
        raise ConfigError(f"line {lineno}: expected 'section.key = value'", line=lineno)
    section, key = lhs.split(".")
    return section, key, rhs


def parse_config(text: str, base_dir: Union[str, Path, None] = None) -> RunConfig:
    """Parse and validate a config.

    A relative ``problem.beta`` file resolves against ``base_dir``; the output
    directory stays relative to the working directory.
    """
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    values = {name: {} for name in _SECTIONS}
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        parts = _split(lineno, raw)
        if parts is None:
            continue
        section, key, rhs = parts
        path = f"{section}.{key}"
        if section not in _SECTIONS:
            raise ConfigError(f"line {lineno}: unknown section {section!r}", line=lineno, field=path)
        known = {f.name for f in dataclasses.fields(_SECTIONS[section])}
        if key not in known or (section, key) in _EXCLUDED:
            raise ConfigError(f"line {lineno}: unknown key {path!r}", line=lineno, field=path)
        if path in seen:
            raise ConfigError(f"line {lineno}: {path} already set on line {seen[path]}",
                              line=lineno, field=path)
        seen[path] = lineno
        default = getattr(_SECTIONS[section](), key)
        try:
            values[section][key] = _converter(section, key, default)(rhs)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {path}: {exc}",
                              line=lineno, field=path) from None
    for path in _REQUIRED:
        section, key = path.split(".")
        if key not in values[section]:
            raise ConfigError(f"missing required field {path}", field=path)
    return _build(values, base)


def _build(values, base):
    built = {}
    for section, cls in _SECTIONS.items():
        try:
            built[section] = cls(**values[section])
        except InvalidArgumentError as exc:
            raise ConfigError(f"{section}: {exc}", field=section) from None
    cfg = RunConfig(**built)
    if isinstance(cfg.problem.beta, Path) and not cfg.problem.beta.is_absolute():
        cfg.problem.beta = base / cfg.problem.beta
    validate(cfg)
    return cfg


def _need(cond, message, path):
    if not cond:
        raise ConfigError(message, field=path)


def validate(cfg: RunConfig) -> None:
    m, pr, rx = cfg.mesh, cfg.problem, cfg.reaction
    _need(m.kind in MESH_KINDS, f"mesh.kind must be one of {MESH_KINDS}", "mesh.kind")
    if m.kind == "interval":
        _need(m.n >= 1, "mesh.n must be at least 1", "mesh.n")
        _need(m.b > m.a, "mesh.b must exceed mesh.a", "mesh.b")
    else:
        _need(m.nx >= 1 and m.ny >= 1, "mesh.nx and mesh.ny must be at least 1", "mesh.nx")
        _need(m.lx > 0 and m.ly > 0, "mesh.lx and mesh.ly must be positive", "mesh.lx")
    _need(pr.p > 1, "p must exceed 1", "problem.p")
    if isinstance(pr.beta, Path):
        _need(pr.beta.is_file(), f"beta file {pr.beta} does not exist", "problem.beta")
    else:
        _need(pr.beta >= 0, "beta must be nonnegative", "problem.beta")
    _need(pr.delta is None or pr.delta >= 0, "delta must be nonnegative", "problem.delta")
    _need(rx.name in REACTIONS, f"reaction.name must be one of {REACTIONS}", "reaction.name")
    if rx.name == "example":
        for key in ("eta", "theta", "q", "tau", "r"):
            _need(getattr(rx, key) is not None, f"example reaction needs reaction.{key}",
                  f"reaction.{key}")
        _need(1 < rx.tau < pr.p and 1 < rx.q < pr.p < rx.r,
              "example reaction needs 1 < tau, q < p < r", "reaction")
    if rx.name == "linear":
        _need(rx.coefficient is not None, "linear reaction needs reaction.coefficient",
              "reaction.coefficient")
    s = cfg.schedule
    _need(0 < s.ratio < 1, "schedule.ratio must lie in (0, 1)", "schedule.ratio")
    _need(0 < s.start <= 1, "schedule.start must lie in (0, 1]", "schedule.start")
    _need(s.steps >= 1, "schedule.steps must be at least 1", "schedule.steps")
    _need(cfg.solver.newton_max_iter >= 1 and cfg.solver.picard_max_iter >= 1,
          "iteration limits must be at least 1", "solver")
    _need(cfg.eigen.tol is None or cfg.eigen.tol > 0, "eigen.tol must be positive", "eigen.tol")
    _need(cfg.eigen.max_iter >= 1, "eigen.max_iter must be at least 1", "eigen.max_iter")
    _need(cfg.check.M is None or cfg.check.M > 0, "check.M must be positive", "check.M")


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, base_dir=path.parent)
