"""
Experiment configuration and its text format.

Grammar (one record per line, UTF-8, ``\\n`` line ends)::

    document := { line }
    line     := comment | blank | record
    comment  := "#" { any character } "\\n"
    blank    := { " " } "\\n"
    record   := key { " " } "=" { " " } value "\\n"
    key      := name "." name { "." name }
    name     := [a-zA-Z] [a-zA-Z0-9_]*   (first name lower case)
    value    := any characters except "\\n", surrounding blanks stripped

Keys must be known and appear at most once; absent keys take the
defaults of the selected ``experiment.name``. Value syntax per type:
integers in decimal, floats as Python ``repr`` (any float literal is
accepted on input), booleans as ``on``/``off``, strings verbatim.

:func:`dumps` writes every key in a fixed order, grouped by section with
one blank line between sections, after a single header comment, so
``dumps(loads(dumps(c))) == dumps(c)`` byte for byte.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, fields

from .elements import ElementFamily

HEADER = "# rothe-pns experiment configuration"
EXPERIMENTS = ("vortex", "singular", "manufactured")
ERROR_VARIANTS = ("squared", "as_written")
INITIAL_METHODS = ("projection", "nodal")
VISCOSITIES = ("constant", "vortex")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "singular"
    family: str = "mini"
    convection: bool = True
    p: float = 11 / 5
    delta: float = 1e-4
    viscosity: str = "constant"
    nu: float = 1.0
    x0: float = -1.0
    y0: float = -1.0
    x1: float = 1.0
    y1: float = 1.0
    nx: int = 1
    ny: int = 1
    level: int = 1
    T: float = 0.5
    K: int = 250
    abs_tol: float = 1e-8
    rel_tol: float = 1e-10
    max_iter: int = 50
    damping_factor: float = 0.5
    max_halvings: int = 20
    error_variant: str = "squared"
    initial: str = "projection"
    out: str = "runs"
    vtk_every: int = 0

    def __post_init__(self):
        _check(self)

    @property
    def tau(self) -> float:
        return self.T / self.K

    @property
    def element_family(self) -> ElementFamily:
        return ElementFamily.parse(self.family)

    def replace(self, **changes) -> "ExperimentConfig":
        try:
            return dataclasses.replace(self, **changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


# dotted key -> attribute, in serialization order
KEYS = {
    "experiment.name": "experiment",
    "experiment.family": "family",
    "experiment.convection": "convection",
    "model.p": "p",
    "model.delta": "delta",
    "model.viscosity": "viscosity",
    "model.nu": "nu",
    "domain.x0": "x0",
    "domain.y0": "y0",
    "domain.x1": "x1",
    "domain.y1": "y1",
    "mesh.nx": "nx",
    "mesh.ny": "ny",
    "mesh.level": "level",
    "time.T": "T",
    "time.K": "K",
    "newton.abs_tol": "abs_tol",
    "newton.rel_tol": "rel_tol",
    "newton.max_iter": "max_iter",
    "newton.damping_factor": "damping_factor",
    "newton.max_halvings": "max_halvings",
    "analysis.error_variant": "error_variant",
    "analysis.initial": "initial",
    "output.dir": "out",
    "output.vtk_every": "vtk_every",
}
_KEY = re.compile(r"^[a-z][a-z0-9_]*(\.[a-zA-Z][a-zA-Z0-9_]*)+$")
_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def defaults(experiment: str = "singular") -> ExperimentConfig:
    """The published setup of each experiment."""
    if experiment == "singular":
        return ExperimentConfig()
    if experiment == "vortex":
        return ExperimentConfig(
            experiment="vortex", p=11 / 5, delta=1e-2, viscosity="vortex",
            x0=0.0, y0=0.0, x1=3.0, y1=1.0, nx=3, ny=1, level=3, T=1.0, K=100)
    if experiment == "manufactured":
        return ExperimentConfig(
            experiment="manufactured", family="taylor_hood", convection=False,
            p=2.0, delta=0.0, x0=0.0, y0=0.0, x1=1.0, y1=1.0, T=1.0, K=1)
    raise ConfigError(f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}")


def _check(cfg: ExperimentConfig):
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(cfg.experiment in EXPERIMENTS, f"unknown experiment {cfg.experiment!r}")
    try:
        ElementFamily.parse(cfg.family)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    need(cfg.p > 1, f"p must exceed 1, got {cfg.p}")
    need(cfg.delta >= 0, f"delta must be non-negative, got {cfg.delta}")
    need(cfg.viscosity in VISCOSITIES, f"unknown viscosity {cfg.viscosity!r}")
    need(cfg.nu > 0, f"nu must be positive, got {cfg.nu}")
    need(cfg.x1 > cfg.x0 and cfg.y1 > cfg.y0, "domain extents must be increasing")
    need(cfg.nx >= 1 and cfg.ny >= 1, "base mesh needs nx, ny >= 1")
    need(cfg.level >= 0, f"refinement level must be >= 0, got {cfg.level}")
    need(cfg.T > 0, f"T must be positive, got {cfg.T}")
    need(cfg.K >= 1, f"K must be >= 1, got {cfg.K}")
    need(cfg.abs_tol > 0 and cfg.rel_tol > 0, "Newton tolerances must be positive")
    need(cfg.max_iter >= 1, "newton.max_iter must be >= 1")
    need(0 < cfg.damping_factor < 1, "newton.damping_factor must lie in (0, 1)")
    need(cfg.max_halvings >= 0, "newton.max_halvings must be >= 0")
    need(cfg.error_variant in ERROR_VARIANTS, f"unknown error variant {cfg.error_variant!r}")
    need(cfg.initial in INITIAL_METHODS, f"unknown initial method {cfg.initial!r}")
    need(cfg.vtk_every >= 0, "output.vtk_every must be >= 0")
    need(bool(cfg.out) and "\n" not in cfg.out, "output.dir must be a non-empty line")


def _format(value, typ) -> str:
    if typ == "bool":
        return "on" if value else "off"
    if typ == "float":
        return repr(float(value))
    if typ == "int":
        return str(int(value))
    return str(value)


def _parse_value(key, text, typ):
    try:
        if typ == "bool":
            if text not in ("on", "off"):
                raise ValueError(f"expected on/off, got {text!r}")
            return text == "on"
        if typ == "float":
            return float(text)
        if typ == "int":
            return int(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc
    return text


def dumps(cfg: ExperimentConfig) -> str:
    lines = [HEADER]
    section = None
    for key, attr in KEYS.items():
        sec = key.split(".", 1)[0]
        if sec != section:
            lines.append("")
            section = sec
        lines.append(f"{key} = {_format(getattr(cfg, attr), _TYPES[attr])}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> ExperimentConfig:
    values = {}
    for lineno, raw in enumerate(text.split("\n"), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not _KEY.match(key):
            raise ConfigError(f"line {lineno}: expected 'section.key = value', got {raw!r}")
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    base = defaults(values.get("experiment.name", "singular"))
    changes = {KEYS[k]: _parse_value(k, v, _TYPES[KEYS[k]]) for k, v in values.items()}
    return base.replace(**changes)


def load(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return loads(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def dump(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(cfg))
