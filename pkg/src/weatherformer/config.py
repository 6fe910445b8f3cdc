"""Flat, typed run configuration files.

A config file is a TOML (or JSON) document of ``key = value`` pairs with no
nested tables. ``include`` names other config files, resolved relative to
the including file; included values have lower precedence than the file's
own keys. Command-line flags override everything.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCALARS = (bool, int, float, str)


class ConfigError(ValueError):
    pass


def _parse(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        return json.loads(text) if path.suffix == ".json" else tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_config(path, _seen=None) -> dict:
    """Merged key/value mapping of ``path`` and everything it includes."""
    path = Path(path).resolve()
    seen = set() if _seen is None else _seen
    if path in seen:
        raise ConfigError(f"include cycle through {path}")
    seen = seen | {path}
    raw = _parse(path)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a table of keys")
    includes = raw.pop("include", [])
    if isinstance(includes, str):
        includes = [includes]
    if not isinstance(includes, list) or not all(isinstance(i, str) for i in includes):
        raise ConfigError(f"{path}: include must be a path or a list of paths")
    merged = {}
    for inc in includes:
        merged.update(load_config(path.parent / inc, seen))
    for key, value in raw.items():
        if isinstance(value, dict):
            raise ConfigError(f"{path}: nested table {key!r} not allowed; configs are flat")
        if isinstance(value, list):
            if not all(isinstance(v, SCALARS) for v in value):
                raise ConfigError(f"{path}: list {key!r} must hold scalars")
        elif value is not None and not isinstance(value, SCALARS):
            raise ConfigError(f"{path}: unsupported value for {key!r}")
        merged[key.replace("-", "_")] = value
    return merged


def coerce(key: str, value, kind):
    """Check ``value`` against the option type ``kind``; ints widen to floats."""
    if value is None:
        return None
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false, got {value!r}")
        return value
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, bool):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    if isinstance(value, list):
        return [coerce(key, v, kind) for v in value]
    if kind in (int, float, str) and not isinstance(value, kind):
        raise ConfigError(f"{key} must be of type {kind.__name__}, got {value!r}")
    return value
