"""Strict YAML run configuration.

Unknown keys, wrong types and unknown expression ids are rejected with the line
number of the offending entry.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Union, get_args, get_origin, get_type_hints

import yaml

from .fields import EXPRESSIONS, ScalarField, make_field
from .geometry import ManifoldModel, make_model
from .mechanics import MechanicalSystem

MANIFOLD_KINDS = ("flat_torus", "sphere2", "hyperbolic2")
THEOREMS = ("auto", "natural", "riemannian", "two_dim", "general")


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class ManifoldConfig:
    kind: str
    periods: Optional[list] = None
    radius: float = 1.0
    scale: float = 1.0


@dataclass
class FieldConfig:
    expression: str = "zero"
    amplitude: float = 0.0
    direction: Optional[list] = None


@dataclass
class SystemConfig:
    potential: FieldConfig = field(default_factory=FieldConfig)
    hess_u_bound: Optional[float] = None


@dataclass
class GridConfig:
    resolution: int = 64


@dataclass
class CertifyConfig:
    theorem: str = "auto"
    k: Optional[float] = None
    delta: float = 1e-9


@dataclass
class VerificationConfig:
    n: int = 100
    seed: int = 0
    step: float = 1e-3
    duality_tol: float = 1e-6
    ctransform_resolution: int = 256
    shooting_step: float = 1e-2


@dataclass
class FlowConfig:
    t_end: float = 1.0
    x: Optional[list] = None
    chart: int = 0
    p: Optional[list] = None


@dataclass
class OutputConfig:
    dir: str = "out"


@dataclass
class RunConfig:
    manifold: ManifoldConfig
    field: FieldConfig = dataclasses.field(default_factory=FieldConfig)
    system: SystemConfig = dataclasses.field(default_factory=SystemConfig)
    grid: GridConfig = dataclasses.field(default_factory=GridConfig)
    certify: CertifyConfig = dataclasses.field(default_factory=CertifyConfig)
    verification: VerificationConfig = dataclasses.field(default_factory=VerificationConfig)
    flow: FlowConfig = dataclasses.field(default_factory=FlowConfig)
    output: OutputConfig = dataclasses.field(default_factory=OutputConfig)

    def build_model(self) -> ManifoldModel:
        m = self.manifold
        return make_model(m.kind, radius=m.radius, periods=m.periods, scale=m.scale)

    def build_field(self, model: ManifoldModel, spec: Optional[FieldConfig] = None) -> ScalarField:
        spec = spec or self.field
        params = {} if spec.direction is None else {"direction": tuple(spec.direction)}
        return make_field(model, spec.expression, spec.amplitude, **params)

    def build_system(self) -> MechanicalSystem:
        model = self.build_model()
        U = self.build_field(model, self.system.potential)
        return MechanicalSystem(model, U, self.system.hess_u_bound)


def _line(node) -> int:
    return node.start_mark.line + 1


def _scalar_type(tp):
    """Strip ``Optional[...]``; returns ``(base, optional)``."""
    if get_origin(tp) is Union:
        args = [a for a in get_args(tp) if a is not type(None)]
        return args[0], True
    return tp, False


def _convert(loader, node, tp, path):
    base, optional = _scalar_type(tp)
    if dataclasses.is_dataclass(base):
        return _build(loader, node, base, path)
    value = loader.construct_object(node, deep=True)
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{path} must not be empty", _line(node))
    if base is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if base is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if base is str and isinstance(value, str):
        return value
    if base is list and isinstance(value, list) and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        return [float(v) for v in value]
    expected = {float: "a number", int: "an integer", str: "a string", list: "a list of numbers"}
    raise ConfigError(f"{path} must be {expected.get(base, base)}", _line(node))


def _build(loader, node, cls, path):
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError(f"{path or 'config'} must be a mapping", _line(node))
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for knode, vnode in node.value:
        key = knode.value
        where = f"{path}.{key}" if path else key
        if key not in names:
            raise ConfigError(f"unknown key {where!r}", _line(knode))
        if key in kwargs:
            raise ConfigError(f"duplicate key {where!r}", _line(knode))
        kwargs[key] = (_convert(loader, vnode, hints[key], where), _line(vnode))
    missing = [f.name for f in dataclasses.fields(cls)
               if f.name not in kwargs and f.default is dataclasses.MISSING
               and f.default_factory is dataclasses.MISSING]
    if missing:
        raise ConfigError(f"missing key {(path + '.' if path else '') + missing[0]!r}", _line(node))
    obj = cls(**{k: v for k, (v, _) in kwargs.items()})
    _validate(obj, {k: ln for k, (_, ln) in kwargs.items()}, path, _line(node))
    return obj


def _positive(obj, names, lines, path, default_line):
    for name in names:
        v = getattr(obj, name)
        if v is not None and not v > 0:
            raise ConfigError(f"{path}.{name} must be positive", lines.get(name, default_line))


def _validate(obj, lines, path, line):
    if isinstance(obj, ManifoldConfig):
        if obj.kind not in MANIFOLD_KINDS:
            raise ConfigError(f"unknown manifold kind {obj.kind!r}; known: {', '.join(MANIFOLD_KINDS)}",
                              lines.get("kind", line))
        _positive(obj, ("radius", "scale"), lines, path, line)
        if obj.periods is not None and (not obj.periods or min(obj.periods) <= 0):
            raise ConfigError(f"{path}.periods must be positive", lines.get("periods", line))
    elif isinstance(obj, FieldConfig):
        if obj.expression not in EXPRESSIONS:
            raise ConfigError(f"unknown expression {obj.expression!r}; known: {', '.join(EXPRESSIONS)}",
                              lines.get("expression", line))
    elif isinstance(obj, GridConfig):
        _positive(obj, ("resolution",), lines, path, line)
    elif isinstance(obj, CertifyConfig):
        if obj.theorem not in THEOREMS:
            raise ConfigError(f"unknown theorem {obj.theorem!r}; known: {', '.join(THEOREMS)}",
                              lines.get("theorem", line))
        _positive(obj, ("delta",), lines, path, line)
    elif isinstance(obj, VerificationConfig):
        _positive(obj, ("n", "step", "shooting_step", "duality_tol", "ctransform_resolution"),
                  lines, path, line)
        if obj.seed < 0:
            raise ConfigError(f"{path}.seed must be non-negative", lines.get("seed", line))
    elif isinstance(obj, FlowConfig):
        if obj.t_end < 0:
            raise ConfigError(f"{path}.t_end must be non-negative", lines.get("t_end", line))


def parse_config(text: str) -> RunConfig:
    loader = yaml.SafeLoader(text)
    try:
        try:
            node = loader.get_single_node()
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark or exc.context_mark
            raise ConfigError(f"YAML syntax error: {exc.problem}",
                              None if mark is None else mark.line + 1) from None
        if node is None:
            raise ConfigError("empty configuration")
        return _build(loader, node, RunConfig, "")
    finally:
        loader.dispose()


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
