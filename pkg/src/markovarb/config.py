"""Experiment configuration: YAML in, validated dataclasses out.

Every block is a dataclass; unknown keys and ill-typed values raise
``ConfigError`` carrying the YAML line of the offending entry.
"""

from __future__ import annotations

import dataclasses
import math
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .model import (AffineMap, BUILTINS, ClampedSqrtMap, GaussianNoise, MarketModel, TableMap,
                    TabulatedNoise)
from .strategy import Constant, FullInvest, PositiveDriftIndicator, TableStrategy


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line, self.key = line, key
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{key + ': ' if key else ''}{message}")


@dataclass
class ModelConfig:
    builtin: str = "stable_ar"
    alpha: float = 0.5
    sigma0: float = 1.0
    c1: float = 0.5
    c2: float = 2.0
    m: float = 0.25
    sd: float = 1.0
    x0: float = 0.0
    drift: dict | None = None
    vol: dict | None = None
    noise: dict | None = None


@dataclass
class StrategyConfig:
    kind: str = "positive_drift"
    fraction: float = 1.0
    edges: list = field(default_factory=list)
    fractions: list = field(default_factory=list)


@dataclass
class SimulateConfig:
    horizon: int = 200
    paths: int = 10_000
    checkpoints: list = field(default_factory=list)
    record_states: bool = False


@dataclass
class ErgodicConfig:
    length: int = 1_000_000
    burn_in: int | None = None
    batch_length: int | None = None
    histogram_bins: int = 0
    histogram_range: float = 5.0


@dataclass
class ScgfConfig:
    horizon: int = 200
    paths: int = 100_000
    theta_lo: float = -2.0
    theta_hi: float = 2.0
    theta_n: int = 41
    ess_min: float = 100.0
    adaptive: bool = False
    x_lo: float = -1.0
    x_hi: float = 1.0
    x_n: int = 201


@dataclass
class GdpfConfig:
    b: typing.Any = "auto"
    t_grid: list = field(default_factory=lambda: [20, 40, 60, 80, 100, 120, 140, 160, 180, 200, 220, 240])
    paths: int = 100_000
    v0: float = 1.0
    ergodic_length: int = 1_000_000


@dataclass
class UtilityConfig:
    alphas: list = field(default_factory=lambda: [-1.0, -0.25])
    t_grid: list = field(default_factory=lambda: [10, 20, 30, 40, 50, 60, 70, 80, 90, 100])
    paths: int = 100_000
    v0: float = 1.0


@dataclass
class VerifyConfig:
    x_max: float = 50.0
    n: int = 2001
    annulus_lo: float = 10.0
    eta: float = 0.01


@dataclass
class DriftCheckConfig:
    q_grid: list = field(default_factory=lambda: [0.01, 0.02, 0.05, 0.1, 0.15, 0.2])
    delta_grid: list = field(default_factory=lambda: [0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5])
    x_max: float = 50.0
    n: int = 2001


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: str = "runs/default"
    threads: int = 1
    model: ModelConfig = field(default_factory=ModelConfig)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    ergodic: ErgodicConfig = field(default_factory=ErgodicConfig)
    scgf: ScgfConfig = field(default_factory=ScgfConfig)
    gdpf: GdpfConfig = field(default_factory=GdpfConfig)
    utility: UtilityConfig = field(default_factory=UtilityConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    drift_check: DriftCheckConfig = field(default_factory=DriftCheckConfig)

    def to_yaml(self) -> str:
        return yaml.safe_dump(dataclasses.asdict(self), sort_keys=True, default_flow_style=None)


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------


def _node_to_python(node, lines: dict, path: str):
    """Plain Python value of a composed YAML node; records the line of every mapping key."""
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = k.value
            sub = f"{path}.{key}" if path else key
            if key in out:
                raise ConfigError("duplicate key", k.start_mark.line + 1, sub)
            lines[sub] = k.start_mark.line + 1
            out[key] = _node_to_python(v, lines, sub)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_node_to_python(v, lines, path) for v in node.value]
    return yaml.safe_load(yaml.serialize(node))


def _numeric_string(value):
    # YAML 1.1 reads exponent forms without a dot (1e9) as strings
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    return value


def _coerce(value, tp, key: str, line: int | None):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if tp is typing.Any:
        return value
    if origin is typing.Union or origin is types.UnionType:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], key, line)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", line, key)
        return value
    if tp in (int, float):
        value = _numeric_string(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or float(value) != int(value):
            raise ConfigError(f"expected an integer, got {value!r}", line, key)
        return int(value)
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", line, key)
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", line, key)
        return value
    if tp is list or origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"expected a list, got {value!r}", line, key)
        return list(value)
    if tp is dict or origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"expected a mapping, got {value!r}", line, key)
        return value
    raise ConfigError(f"unsupported field type {tp}", line, key)


def _build(cls, data, lines: dict, path: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("expected a mapping", lines.get(path), path or "<root>")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            sub = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(names))})", lines.get(sub), sub)
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        sub = f"{path}.{f.name}" if path else f.name
        tp = hints[f.name]
        if dataclasses.is_dataclass(tp):
            kwargs[f.name] = _build(tp, data[f.name], lines, sub)
        else:
            kwargs[f.name] = _coerce(data[f.name], tp, sub, lines.get(sub))
    return cls(**kwargs)


def _set_dotted(tree: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = tree
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override inside non-mapping {p!r}", key=dotted)
    node[parts[-1]] = value


def parse_config(text: str = "", overrides=()) -> ExperimentConfig:
    """Parse YAML ``text`` and apply ``key=value`` overrides (dotted keys, YAML values)."""
    lines: dict = {}
    try:
        node = yaml.compose(text) if text.strip() else None
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark else None) from None
    tree = _node_to_python(node, lines, "") if node is not None else {}
    if not isinstance(tree, dict):
        raise ConfigError("top level must be a mapping", 1)
    for ov in overrides:
        if "=" not in ov:
            raise ConfigError(f"override {ov!r} is not key=value")
        k, v = ov.split("=", 1)
        _set_dotted(tree, k.strip(), yaml.safe_load(v))
        lines[k.strip()] = None
    cfg = _build(ExperimentConfig, tree, lines, "")
    try:
        validate(cfg)
    except ConfigError as exc:
        if exc.line is None and exc.key in lines:
            raise ConfigError(str(exc).split(": ", 1)[-1], lines[exc.key], exc.key) from None
        raise
    return cfg


def load_config(path=None, overrides=()) -> ExperimentConfig:
    text = Path(path).read_text() if path is not None else ""
    return parse_config(text, overrides)


def validate(cfg: ExperimentConfig) -> None:
    if cfg.seed < 0:
        raise ConfigError("seed must be nonnegative", key="seed")
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1", key="threads")
    if cfg.model.builtin not in (*BUILTINS, "custom"):
        raise ConfigError(f"unknown builtin {cfg.model.builtin!r}", key="model.builtin")
    if cfg.strategy.kind not in ("positive_drift", "constant", "full_invest", "table"):
        raise ConfigError(f"unknown strategy kind {cfg.strategy.kind!r}", key="strategy.kind")
    for key, v in (("simulate.horizon", cfg.simulate.horizon), ("simulate.paths", cfg.simulate.paths),
                   ("ergodic.length", cfg.ergodic.length), ("scgf.horizon", cfg.scgf.horizon),
                   ("scgf.paths", cfg.scgf.paths), ("scgf.theta_n", cfg.scgf.theta_n),
                   ("scgf.x_n", cfg.scgf.x_n), ("gdpf.paths", cfg.gdpf.paths),
                   ("gdpf.ergodic_length", cfg.gdpf.ergodic_length), ("utility.paths", cfg.utility.paths),
                   ("verify.n", cfg.verify.n), ("drift_check.n", cfg.drift_check.n)):
        if v < 1:
            raise ConfigError(f"must be >= 1, got {v}", key=key)
    for key, ts in (("gdpf.t_grid", cfg.gdpf.t_grid), ("utility.t_grid", cfg.utility.t_grid)):
        if not ts or any(not isinstance(t, int) or isinstance(t, bool) or t < 1 for t in ts):
            raise ConfigError("needs a nonempty list of positive integers", key=key)
    b = cfg.gdpf.b
    if not (b == "auto" or (isinstance(b, (int, float)) and not isinstance(b, bool) and math.isfinite(b))):
        raise ConfigError("b must be a number or 'auto'", key="gdpf.b")
    for a in cfg.utility.alphas:
        if not (isinstance(a, (int, float)) and a < 1 and a != 0):
            raise ConfigError(f"alpha {a!r} must satisfy alpha < 1, alpha != 0", key="utility.alphas")
    # construct once so invalid parameters surface as config errors
    try:
        build_model(cfg.model)
        build_strategy(cfg.strategy)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc), key="model/strategy") from None


# --------------------------------------------------------------------------
# object construction
# --------------------------------------------------------------------------


def _map_from(d: dict):
    d = dict(d)
    kind = d.pop("kind", None)
    if kind == "affine":
        return AffineMap(float(d.pop("intercept", 0.0)), float(d.pop("slope", 0.0)))
    if kind == "clamped_sqrt":
        return ClampedSqrtMap(float(d["scale"]), float(d["lo"]), float(d["hi"]))
    if kind == "table":
        return TableMap(tuple(d["grid"]), tuple(d["values"]), bool(d.get("extrapolate_left", False)),
                        bool(d.get("extrapolate_right", False)))
    raise ValueError(f"unknown map kind {kind!r}")


def _noise_from(d: dict | None):
    if d is None:
        return GaussianNoise()
    kind = d.get("kind", "gaussian")
    if kind == "gaussian":
        return GaussianNoise(float(d.get("sd", 1.0)), float(d.get("mean", 0.0)), d.get("kappa"))
    if kind == "tabulated":
        return TabulatedNoise(tuple(d["points"]), tuple(d["density"]), float(d.get("kappa", 0.25)))
    raise ValueError(f"unknown noise kind {kind!r}")


def build_model(mc: ModelConfig) -> MarketModel:
    if mc.builtin == "stable_ar":
        return BUILTINS["stable_ar"](mc.alpha, mc.x0, mc.sd)
    if mc.builtin == "clamped_cir":
        return BUILTINS["clamped_cir"](mc.alpha, mc.sigma0, mc.c1, mc.c2, mc.x0)
    if mc.builtin == "drifted_walk":
        return BUILTINS["drifted_walk"](mc.m, mc.x0, mc.sd)
    if mc.drift is None or mc.vol is None:
        raise ValueError("custom models need drift and vol blocks")
    return MarketModel(_map_from(mc.drift), _map_from(mc.vol), _noise_from(mc.noise), mc.x0, "custom")


def build_strategy(sc: StrategyConfig):
    if sc.kind == "positive_drift":
        return PositiveDriftIndicator()
    if sc.kind == "constant":
        return Constant(sc.fraction)
    if sc.kind == "full_invest":
        return FullInvest()
    return TableStrategy(tuple(sc.edges), tuple(sc.fractions))


def theta_grid(sc: ScgfConfig) -> np.ndarray:
    g = np.linspace(sc.theta_lo, sc.theta_hi, sc.theta_n)
    if sc.theta_lo <= 0.0 <= sc.theta_hi:
        g[np.argmin(np.abs(g))] = 0.0
    return g
