"""Run configuration: nested dataclasses with reference defaults and a strict JSON loader.

Unknown keys are rejected.  ``"lambda"`` and ``"K"`` are accepted as the
JSON spellings of ``loss.lam`` and ``memory.capacity``.
"""
from __future__ import annotations

import dataclasses
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from sclifd.dataio import BlobConfig
from sclifd.errors import ConfigError
from sclifd.losses import LossConfig
from sclifd.session import CLASSIFIERS, SELECTORS, AugmentConfig, TrainConfig

ALIASES = {"lambda": "lam", "K": "capacity"}
EXPORT_NAMES = {v: k for k, v in ALIASES.items()}


@dataclass(frozen=True)
class DataConfig:
    csv: str | None = None
    blobs: BlobConfig | None = None
    class_order: tuple[int, ...] | None = None
    shot: int = 2
    normal_train: int = 500
    fault_train: int = 48
    test_per_class: int = 800
    standardize: bool = False


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple[int, ...] = (20,)
    embed_dim: int = 10


@dataclass(frozen=True)
class MemoryConfig:
    capacity: int = 100
    selector: str = "adaherding"
    n_neighbors: int = 5

    def __post_init__(self):
        if self.selector not in SELECTORS:
            raise ValueError(f"must be one of {SELECTORS}, got {self.selector!r}")
        if self.capacity < 1 or self.n_neighbors < 1:
            raise ValueError("capacity and n_neighbors must be positive")


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    classifier: str = "cos"
    seed: int = 0
    output_dir: str = "runs/latest"

    def __post_init__(self):
        if self.classifier not in CLASSIFIERS:
            raise ValueError(f"must be one of {CLASSIFIERS}, got {self.classifier!r}")

    def to_dict(self) -> dict:
        return _export(self)

    def with_overrides(self, overrides: dict) -> "RunConfig":
        """Apply dotted-path overrides such as ``{"memory.selector": "herding"}``."""
        doc = self.to_dict()
        for dotted, value in overrides.items():
            node = doc
            *parents, leaf = dotted.split(".")
            for p in parents:
                if node.get(p) is None:
                    node[p] = {}
                node = node[p]
            node[leaf] = value
        return from_dict(doc)


def _export(obj):
    if dataclasses.is_dataclass(obj):
        return {EXPORT_NAMES.get(f.name, f.name): _export(getattr(obj, f.name))
                for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return [_export(v) for v in obj]
    return obj


def _build(tp, value, path):
    """Coerce ``value`` to annotation ``tp``; raise ConfigError naming ``path``."""
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _build(inner[0], value, path)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"expected a section (object), got {type(value).__name__}", path)
        hints = typing.get_type_hints(tp)
        names = {f.name for f in dataclasses.fields(tp)}
        kwargs = {}
        for key, v in value.items():
            name = ALIASES.get(key, key)
            sub = f"{path}.{key}" if path else key
            if name not in names:
                raise ConfigError("unknown key", sub)
            kwargs[name] = _build(hints[name], v, sub)
        try:
            return tp(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), path or "<root>") from None
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"expected a list, got {type(value).__name__}", path)
        args = typing.get_args(tp)
        item_tp = args[0]
        if len(args) == 2 and args[1] is not Ellipsis:
            if len(value) != 2:
                raise ConfigError(f"expected 2 items, got {len(value)}", path)
        return tuple(_build(item_tp, v, f"{path}[{i}]") for i, v in enumerate(value))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", path)
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", path)
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", path)
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", path)
        return value
    raise ConfigError(f"unsupported field type {tp}", path)


def from_dict(doc: dict) -> RunConfig:
    return _build(RunConfig, doc, "")


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    return from_dict(doc)
