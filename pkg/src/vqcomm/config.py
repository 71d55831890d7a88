"""Declarative experiment configuration.

Configs load from flat ``section.key=value`` text (comments with '#') or
from the equivalent nested JSON. Every field has a default; unknown keys
fail fast.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields

from .models.common import ConfigError

KINDS = (
    "adding",
    "gridworld",
    "transformer-toy",
    "gaussian-analysis",
    "bounds",
    "hoeffding",
    "ablation",
)


@dataclass
class QuantizerSettings:
    discretize: bool = False
    L: int = 16
    G: int = 8
    beta: float = 0.25
    codebook_loss_weight: float = 0.25
    site: str = "communication_result"
    method: str = "vq"  # or "gumbel"
    temperature: float = 1.0
    warmup_vectors: int = 512


@dataclass
class ModelSettings:
    hidden: int = 32
    modules: int = 4
    k: int = 2
    att_dim: int = 16
    node_dim: int = 4
    msg_dim: int = 16
    gnn_hidden: int = 32
    dim: int = 16
    heads: int = 2
    blocks: int = 3


@dataclass
class TaskSettings:
    # adding
    seq_len: int = 50
    train_gap: int = 50
    val_gap: int = 20
    test_gap: int = 100
    max_value: float = 1.0
    train_count: int = 256
    eval_count: int = 128
    # grid world
    grid_size: int = 5
    train_objects: int = 5
    ood_objects: tuple[int, ...] = (3, 2)
    episode_steps: int = 10
    train_transitions: int = 1000
    eval_transitions: int = 256
    # transformer toy
    vocab: int = 6
    train_len: int = 8
    test_len: int = 12
    max_len: int = 16
    # gaussian analysis
    gaussian_m: int = 8
    L_values: tuple[int, ...] = (1, 8)
    G_values: tuple[int, ...] = (1, 2, 4, 8)
    variance_samples: int = 128
    variance_trials: int = 20
    attention_seeds: int = 10
    train_distractors: int = 2
    test_distractors: int = 8
    # hoeffding
    hoeffding_d: int = 2
    hoeffding_n: int = 2000
    hoeffding_trials: int = 200
    delta: float = 0.05
    # bounds
    bound_m: int = 64
    bound_n: int = 10_000
    alpha: float = 1.0
    varsigma_bar: float = 0.0
    R_H: float = 1.0
    zeta: float = 100.0
    C_J: float = 1.0
    L_d: float = 1.0
    rho: int = 1


@dataclass
class TrainingSettings:
    epochs: int = 10
    batch_size: int = 64
    lr: float = 1e-3
    optimizer: str = "adam"
    grad_clip: float = 0.0  # 0 disables clipping


@dataclass
class ExperimentConfig:
    kind: str = "adding"
    seed: int = 0
    out: str = ""
    quantizer: QuantizerSettings = field(default_factory=QuantizerSettings)
    model: ModelSettings = field(default_factory=ModelSettings)
    task: TaskSettings = field(default_factory=TaskSettings)
    training: TrainingSettings = field(default_factory=TrainingSettings)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; choose from {KINDS}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {
    "quantizer": QuantizerSettings,
    "model": ModelSettings,
    "task": TaskSettings,
    "training": TrainingSettings,
}


def _coerce(raw, target_type, key: str):
    if target_type is bool:
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in ("true", "1", "yes", "on"):
            return True
        if text in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: cannot parse {raw!r} as bool")
    if target_type is int:
        try:
            return int(str(raw).strip())
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {raw!r} as int") from None
    if target_type is float:
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: cannot parse {raw!r} as float") from None
    if target_type is str:
        return str(raw)
    if target_type in (tuple, "tuple"):
        if isinstance(raw, (list, tuple)):
            return tuple(int(v) for v in raw)
        parts = [p for p in str(raw).replace("(", "").replace(")", "").split(",") if p.strip()]
        return tuple(int(p) for p in parts)
    raise ConfigError(f"{key}: unsupported field type {target_type}")


def _field_types(cls) -> dict:
    out = {}
    for f in fields(cls):
        t = f.type if not isinstance(f.type, str) else f.type
        if isinstance(t, str):
            if t.startswith("tuple"):
                out[f.name] = tuple
            else:
                out[f.name] = {"int": int, "float": float, "bool": bool, "str": str}.get(t, str)
        else:
            out[f.name] = t
    return out


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    kwargs = {}
    top_types = {"kind": str, "seed": int, "out": str}
    for key, target in top_types.items():
        if key in data:
            kwargs[key] = _coerce(data.pop(key), target, key)
    for section, cls in _SECTIONS.items():
        section_data = data.pop(section, {})
        if not isinstance(section_data, dict):
            raise ConfigError(f"{section}: expected a table of keys, got {section_data!r}")
        types = _field_types(cls)
        sec_kwargs = {}
        for key, raw in section_data.items():
            if key not in types:
                raise ConfigError(f"unknown key {section}.{key}")
            sec_kwargs[key] = _coerce(raw, types[key], f"{section}.{key}")
        kwargs[section] = cls(**sec_kwargs)
    if data:
        raise ConfigError(f"unknown key {sorted(data)[0]}")
    return ExperimentConfig(**kwargs)


def parse_assignments(pairs: list[str]) -> dict:
    """Turn ['quantizer.L=16', 'seed=3'] into a nested dict."""
    nested: dict = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"expected key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"empty key in {pair!r}")
        parts = key.split(".")
        if len(parts) == 1:
            nested[parts[0]] = value
        elif len(parts) == 2:
            nested.setdefault(parts[0], {})[parts[1]] = value
        else:
            raise ConfigError(f"too many dots in key {key!r}")
    return nested


def load_config(path) -> ExperimentConfig:
    """Read a key=value config file or an equivalent JSON document."""
    with open(path) as f:
        text = f.read()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return config_from_dict(json.loads(text))
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        pairs.append(line)
    return config_from_dict(parse_assignments(pairs))


def merge_overrides(config_data: dict, overrides: dict) -> dict:
    merged = {k: (dict(v) if isinstance(v, dict) else v) for k, v in config_data.items()}
    for key, value in overrides.items():
        if isinstance(value, dict):
            merged.setdefault(key, {})
            merged[key].update(value)
        else:
            merged[key] = value
    return merged
