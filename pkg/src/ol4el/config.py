"""Experiment configuration: TOML schema, strict validation, round-trip.

One file fully determines a run. Unknown keys are rejected so typos fail
loudly; numeric ranges are checked at load time.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError


@dataclass
class TaskConfig:
    kind: str = "kmeans"
    k: int = 3
    classes: int = 8
    lam: float = 1e-3


@dataclass
class ModeConfig:
    kind: str = "async"
    alpha0: float = 0.5
    sync_charge: str = "max"


@dataclass
class PolicyConfig:
    kind: str = "ol4el"
    i_max: int = 8
    c_floor: float = 0.01
    selection: str = "greedy"
    interval: int = 4


@dataclass
class FleetConfig:
    n: int = 3
    heterogeneity: float = 1.0
    budget: float = 5000.0
    base_comp: float = 10.0
    base_comm: float = 2.0
    base_time: float | None = None
    comm_time: float | None = None
    cost_mode: str = "fixed"
    jitter: float = 0.2
    batch_size: int = 32
    speed_anchor: str = "fastest"


@dataclass
class DataConfig:
    source: str = "blobs"
    k: int = 3
    dim: int = 2
    n: int = 3000
    separation: float = 6.0
    sigma: float = 1.0
    classes: int = 8
    margin: float = 0.5
    label_noise: float = 0.0
    partition: str = "iid"
    beta: float = 0.5
    test_fraction: float = 0.05


@dataclass
class RunConfig:
    seeds: list[int] = field(default_factory=lambda: [0])
    eval_every: int = 1
    utility: str = "param-delta"
    out: str = "results"


@dataclass
class ExperimentConfig:
    task: TaskConfig = field(default_factory=TaskConfig)
    mode: ModeConfig = field(default_factory=ModeConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    fleet: FleetConfig = field(default_factory=FleetConfig)
    data: DataConfig = field(default_factory=DataConfig)
    run: RunConfig = field(default_factory=RunConfig)

    @property
    def policy_name(self) -> str:
        if self.policy.kind == "fixed":
            return f"fixed-i{self.policy.interval}"
        return "ol4el"

    def metric_name(self) -> str:
        return "f1" if self.task.kind == "kmeans" else "accuracy"


# TOML key -> dataclass field (only where they differ).
_KEY_ALIASES = {"lambda": "lam"}
_FIELD_ALIASES = {v: k for k, v in _KEY_ALIASES.items()}

_SECTIONS = {
    "task": TaskConfig,
    "mode": ModeConfig,
    "policy": PolicyConfig,
    "fleet": FleetConfig,
    "data": DataConfig,
    "run": RunConfig,
}


def _build_section(name: str, cls, raw: dict):
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        attr = _KEY_ALIASES.get(key, key)
        if attr not in known:
            raise ConfigError(f"unknown key '{name}.{key}'", key=f"{name}.{key}")
        kwargs[attr] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value in [{name}]: {exc}", key=name) from exc


def parse_config(raw: dict) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from a parsed TOML mapping."""
    sections = {}
    for name, value in raw.items():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section '{name}'", key=name)
        if not isinstance(value, dict):
            raise ConfigError(f"section '{name}' must be a table", key=name)
        sections[name] = _build_section(name, _SECTIONS[name], value)
    config = ExperimentConfig(**sections)
    validate_config(config)
    return config


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return parse_config(raw)


def _require(condition: bool, message: str, key: str) -> None:
    if not condition:
        raise ConfigError(f"{message} (key '{key}')", key=key)


def validate_config(cfg: ExperimentConfig) -> None:
    t, m, p, f, d, r = cfg.task, cfg.mode, cfg.policy, cfg.fleet, cfg.data, cfg.run
    _require(t.kind in ("kmeans", "svm"), "task.kind must be 'kmeans' or 'svm'", "task.kind")
    _require(t.k >= 1, "task.k must be >= 1", "task.k")
    _require(t.classes >= 2, "task.classes must be >= 2", "task.classes")
    _require(t.lam > 0, "task.lambda must be positive", "task.lambda")
    _require(m.kind in ("sync", "async"), "mode.kind must be 'sync' or 'async'", "mode.kind")
    _require(0 < m.alpha0 <= 1, "mode.alpha0 must lie in (0, 1]", "mode.alpha0")
    _require(m.sync_charge in ("max", "mean"), "mode.sync_charge must be 'max' or 'mean'", "mode.sync_charge")
    _require(p.kind in ("ol4el", "fixed"), "policy.kind must be 'ol4el' or 'fixed'", "policy.kind")
    _require(p.i_max >= 1, "policy.i_max must be >= 1", "policy.i_max")
    _require(p.c_floor > 0, "policy.c_floor must be positive", "policy.c_floor")
    _require(
        p.selection in ("greedy", "density-frequency", "frequency-only"),
        "policy.selection must be 'greedy', 'density-frequency', or 'frequency-only'",
        "policy.selection",
    )
    _require(1 <= p.interval <= p.i_max, "policy.interval must lie in [1, i_max]", "policy.interval")
    _require(f.n >= 1, "fleet.n must be >= 1", "fleet.n")
    _require(f.heterogeneity >= 1, "fleet.heterogeneity must be >= 1", "fleet.heterogeneity")
    _require(f.budget >= 0, "fleet.budget must be >= 0", "fleet.budget")
    _require(f.base_comp > 0, "fleet.base_comp must be positive", "fleet.base_comp")
    _require(f.base_comm > 0, "fleet.base_comm must be positive", "fleet.base_comm")
    _require(f.cost_mode in ("fixed", "variable"), "fleet.cost_mode must be 'fixed' or 'variable'", "fleet.cost_mode")
    _require(0 <= f.jitter < 1, "fleet.jitter must lie in [0, 1)", "fleet.jitter")
    _require(f.batch_size >= 1, "fleet.batch_size must be >= 1", "fleet.batch_size")
    _require(
        f.speed_anchor in ("slowest", "fastest"),
        "fleet.speed_anchor must be 'slowest' or 'fastest'",
        "fleet.speed_anchor",
    )
    _require(d.source in ("blobs", "linear") or d.source.endswith(".csv"),
             "data.source must be 'blobs', 'linear', or a .csv path", "data.source")
    _require(d.k >= 1, "data.k must be >= 1", "data.k")
    _require(d.dim >= 1, "data.dim must be >= 1", "data.dim")
    _require(d.n >= 1, "data.n must be >= 1", "data.n")
    _require(d.separation >= 0, "data.separation must be >= 0", "data.separation")
    _require(d.sigma >= 0, "data.sigma must be >= 0", "data.sigma")
    _require(d.classes >= 2, "data.classes must be >= 2", "data.classes")
    _require(d.margin >= 0, "data.margin must be >= 0", "data.margin")
    _require(0 <= d.label_noise < 1, "data.label_noise must lie in [0, 1)", "data.label_noise")
    _require(d.partition in ("iid", "label-skew"), "data.partition must be 'iid' or 'label-skew'", "data.partition")
    _require(d.beta > 0, "data.beta must be positive", "data.beta")
    _require(0 < d.test_fraction < 1, "data.test_fraction must lie in (0, 1)", "data.test_fraction")
    _require(len(r.seeds) >= 1, "run.seeds must not be empty", "run.seeds")
    _require(all(isinstance(s, int) and s >= 0 for s in r.seeds),
             "run.seeds must be non-negative integers", "run.seeds")
    _require(r.eval_every >= 1, "run.eval_every must be >= 1", "run.eval_every")
    _require(r.utility in ("param-delta", "test-set"),
             "run.utility must be 'param-delta' or 'test-set'", "run.utility")


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Plain mapping mirroring the TOML layout (aliases restored, unset
    optional values omitted)."""
    out = {}
    for section, value in asdict(cfg).items():
        out[section] = {
            _FIELD_ALIASES.get(k, k): v for k, v in value.items() if v is not None
        }
    return out


def _format_toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, list):
        return "[" + ", ".join(_format_toml_value(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize {type(value).__name__} to TOML")


def config_to_toml(cfg: ExperimentConfig) -> str:
    lines = []
    for section, mapping in config_to_dict(cfg).items():
        lines.append(f"[{section}]")
        for key, value in mapping.items():
            lines.append(f"{key} = {_format_toml_value(value)}")
        lines.append("")
    return "\n".join(lines)
