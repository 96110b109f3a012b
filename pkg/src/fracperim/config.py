"""YAML config files and their conversion into parameter dataclasses."""

import dataclasses
import math

import yaml

from .errors import ParameterError


class ConfigError(ParameterError):
    """A config file or flag value is malformed."""


def load_config(path):
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping of keys to values")
    return data


def merge(base, overrides):
    """Flag values (non-None) win over file values."""
    out = dict(base)
    out.update({k: v for k, v in overrides.items() if v is not None})
    return out


def parse_float(text, key):
    if isinstance(text, (int, float)):
        return float(text)
    try:
        return float(str(text).strip().lower().replace("infinity", "inf"))
    except ValueError:
        raise ConfigError(f"key {key!r}: expected a number, got {text!r}") from None


def build(cls, data, section="config"):
    """Instantiate dataclass ``cls`` from a mapping, rejecting unknown keys by name."""
    if not isinstance(data, dict):
        raise ConfigError(f"{section}: expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{section}: unknown key {key!r} (allowed: {', '.join(sorted(names))})")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from None


def parse_window(text):
    """``R=<v>`` or ``r=<v>`` into (kind, value); ``inf`` is accepted for R."""
    if not isinstance(text, str) or "=" not in text:
        raise ConfigError(f"key 'window': expected R=<value> or r=<value>, got {text!r}")
    kind, _, val = text.partition("=")
    kind = kind.strip()
    if kind not in ("R", "r"):
        raise ConfigError(f"key 'window': kind must be R or r, got {kind!r}")
    v = parse_float(val, "window")
    if kind == "r" and math.isinf(v):
        raise ConfigError("key 'window': r must be finite")
    return kind, v
