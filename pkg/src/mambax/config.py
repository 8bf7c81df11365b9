"""Experiment configuration: a YAML tree mapped onto nested dataclasses.

Environment variables ``NSPC_<FIELD>`` override top-level fields and
``NSPC_<SECTION>__<FIELD>`` override nested ones, e.g. ``NSPC_SEED=3`` or
``NSPC_TRAIN__MAX_STEPS=50``. Values are parsed as YAML scalars.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError
from .fusion import ROLE_MAPS
from .ssm import MATRIX_MODES
from .transition import SUPPORTED_SCALES, TRANSITION_MODES

TASKS = ("sisr", "mfsr")


@dataclass
class ModelConfig:
    blocks: int = 2
    c_m: int = 16
    c_d: int = 32
    c_r: int = 8
    n_state: int = 8
    delta_mode: str = "nspc"
    c_mode: str = "nspc"
    use_spatial: bool = True
    use_channel: bool = True
    transition_mode: str = "adaptive"
    role_map: str = "b_aux"
    bidirectional: bool = True


@dataclass
class TrainConfig:
    epochs: int = 1
    max_steps: int | None = None
    lr: float = 1e-3
    batch: int = 1
    patch: int | None = None  # HR crop size; None trains on whole images


@dataclass
class DataConfig:
    root: str = "data/desk"
    bands: int = 31
    size: int = 64
    n_train: int = 32
    n_test: int = 8
    blur_sigma: float = 1.0
    noise_sigma: float = 0.0
    srf: list[float] | None = None  # None -> uniform


@dataclass
class ExperimentConfig:
    task: str = "sisr"
    scale: int = 2
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def validate(self) -> ExperimentConfig:
        m, t, d = self.model, self.train, self.data
        _enum("task", self.task, TASKS)
        if self.scale not in (1,) + SUPPORTED_SCALES:
            raise ConfigError(f"field 'scale': {self.scale} not in {(1,) + SUPPORTED_SCALES}")
        _enum("model.delta_mode", m.delta_mode, MATRIX_MODES)
        _enum("model.c_mode", m.c_mode, MATRIX_MODES)
        _enum("model.transition_mode", m.transition_mode, TRANSITION_MODES)
        _enum("model.role_map", m.role_map, tuple(ROLE_MAPS))
        for name in ("blocks", "c_m", "c_d", "c_r", "n_state"):
            if getattr(m, name) < (0 if name == "blocks" else 1):
                raise ConfigError(f"field 'model.{name}' must be positive")
        if m.c_d < 4 * m.c_r:
            raise ConfigError(f"field 'model.c_d' must be >= 4 * c_r ({m.c_d} < {4 * m.c_r})")
        if m.c_d % m.c_m:
            raise ConfigError(f"field 'model.c_d' must be a multiple of c_m ({m.c_d} % {m.c_m} != 0)")
        if t.epochs < 1 or t.batch < 1 or t.lr < 0:
            raise ConfigError("fields 'train.epochs'/'train.batch' must be >= 1 and 'train.lr' >= 0")
        if t.max_steps is not None and t.max_steps < 0:
            raise ConfigError("field 'train.max_steps' must be >= 0")
        if t.patch is not None and (t.patch % self.scale or t.patch > d.size):
            raise ConfigError(f"field 'train.patch' must be a multiple of scale and <= data.size, got {t.patch}")
        if d.size % self.scale:
            raise ConfigError(f"field 'data.size' ({d.size}) not divisible by scale {self.scale}")
        if d.srf is not None and len(d.srf) != d.bands:
            raise ConfigError(f"field 'data.srf' has {len(d.srf)} entries for {d.bands} bands")
        return self

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, tree: dict[str, Any]) -> ExperimentConfig:
        return _build(cls, tree or {}, "").validate()


def _enum(name: str, value, allowed) -> None:
    if value not in allowed:
        raise ConfigError(f"field '{name}': {value!r} not in {tuple(allowed)}")


_NESTED = {"model": ModelConfig, "train": TrainConfig, "data": DataConfig}


def _build(cls, tree: dict, prefix: str):
    if not isinstance(tree, dict):
        raise ConfigError(f"field '{prefix.rstrip('.') or '<root>'}' must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in tree.items():
        if key not in known:
            raise ConfigError(f"unknown field '{prefix}{key}'")
        if cls is ExperimentConfig and key in _NESTED:
            kwargs[key] = _build(_NESTED[key], value, f"{key}.")
        else:
            kwargs[key] = _coerce(f"{prefix}{key}", value, known[key].default)
    return cls(**kwargs)


def _coerce(name: str, value, default):
    if value is None:
        return None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"field '{name}' must be a boolean, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"field '{name}' must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"field '{name}' must be a number, got {value!r}")
        return float(value)
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"field '{name}' must be a string, got {value!r}")
    if default is None and not name.endswith("srf"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"field '{name}' must be an integer or null, got {value!r}")
        return value
    if name.endswith("srf"):
        if not isinstance(value, list):
            raise ConfigError(f"field '{name}' must be a list of numbers")
        return [float(v) for v in value]
    return value


def apply_env_overrides(tree: dict, environ: dict[str, str] | None = None) -> dict:
    environ = os.environ if environ is None else environ
    tree = json.loads(json.dumps(tree or {}))
    for key, raw in sorted(environ.items()):
        if not key.startswith("NSPC_") or key == "NSPC_CHECK_FINITE":
            continue
        path = key[len("NSPC_") :].lower().split("__")
        node = tree
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"environment override {key} targets a non-mapping field")
        node[path[-1]] = yaml.safe_load(raw)
    return tree


def load_config(path: str | os.PathLike, environ: dict[str, str] | None = None) -> ExperimentConfig:
    p = Path(path)
    try:
        tree = yaml.safe_load(p.read_text()) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {p} is not valid YAML: {exc}") from exc
    return ExperimentConfig.from_dict(apply_env_overrides(tree, environ))


def dump_config(cfg: ExperimentConfig, path: str | os.PathLike) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
