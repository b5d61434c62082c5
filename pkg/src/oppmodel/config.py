"""INI-style config files mapped onto the dataclass configs.

Each dataclass maps to one section. Nested dataclass fields get their own
section named after the field. Values are coerced to the type of the
field's default.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from pathlib import Path
from typing import Any

from .numerics.mlp import TrainConfig
from .sealed_bid import ExperimentConfig
from .trading_agents import SimConfig


class ConfigError(ValueError):
    pass


def _coerce(raw: str, default: Any, key: str):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            return tuple(type(d)(p) for d, p in zip(default, parts, strict=True))
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return raw.strip()


def _format(value: Any) -> str:
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    return str(value)


def _apply(obj, section: configparser.SectionProxy, name: str) -> None:
    fields = {f.name: f for f in dataclasses.fields(obj)}
    for key, raw in section.items():
        f = fields.get(key)
        if f is None or dataclasses.is_dataclass(getattr(obj, key)):
            raise ConfigError(f"unknown key [{name}] {key}")
        setattr(obj, key, _coerce(raw, getattr(obj, key), f"[{name}] {key}"))


def load(cls, path: str | Path | None, root: str):
    """Build `cls()` and override it from `path`; a missing file is a ConfigError."""
    obj = cls()
    if path is None:
        return obj
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read_string(path.read_text())
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    nested = {f.name for f in dataclasses.fields(obj) if dataclasses.is_dataclass(getattr(obj, f.name))}
    for name in parser.sections():
        if name == root:
            _apply(obj, parser[name], name)
        elif name in nested:
            _apply(getattr(obj, name), parser[name], name)
        else:
            raise ConfigError(f"unknown section [{name}] in {path}")
    return obj


def dump(obj, root: str) -> str:
    parser = configparser.ConfigParser()
    parser[root] = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if dataclasses.is_dataclass(value):
            parser[f.name] = {g.name: _format(getattr(value, g.name)) for g in dataclasses.fields(value)}
        else:
            parser[root][f.name] = _format(value)
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def load_sim(path=None) -> SimConfig:
    return load(SimConfig, path, "simulation")


def load_experiment(path=None) -> ExperimentConfig:
    return load(ExperimentConfig, path, "sealed_bid")


def load_train(path=None) -> TrainConfig:
    return load(TrainConfig, path, "classifier")
