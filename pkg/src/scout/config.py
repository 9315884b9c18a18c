"""Configuration: a small key = value file format plus environment overrides.

The file format is a flat list of ``key = value`` lines; dots in keys build
sections (``hnsw.m = 16``). Values are parsed as ints, floats, booleans, or
strings (quoted or bare). ``#`` starts a comment. Environment variables win
over file values: SCOUT_LLM_BASE_URL, SCOUT_LLM_API_KEY (read lazily by the
provider), and SCOUT_MOCK=1 to force the offline mock provider.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .engine import EngineConfig
from .gateway import ProviderConfig
from .index import HnswParams

ENV_BASE_URL = "SCOUT_LLM_BASE_URL"
ENV_API_KEY = "SCOUT_LLM_API_KEY"
ENV_MOCK = "SCOUT_MOCK"


class ConfigError(Exception):
    """Raised when a config file cannot be parsed."""


_KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*$")


def _parse_value(raw: str, lineno: int) -> Any:
    raw = raw.strip()
    if not raw:
        raise ConfigError(f"line {lineno}: missing value")
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in ("'", '"'):
        return raw[1:-1]
    lowered = raw.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config_text(text: str) -> dict[str, Any]:
    """Parse config text into a flat dict keyed by dotted names."""
    out: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"line {lineno}: bad key {key!r}")
        # A trailing comment only counts outside quotes.
        value = value.strip()
        if value and value[0] not in ("'", '"') and "#" in value:
            value = value.split("#", 1)[0].strip()
        out[key] = _parse_value(value, lineno)
    return out


def load_config_file(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        return parse_config_text(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc


@dataclass
class AppConfig:
    engine: EngineConfig = field(default_factory=EngineConfig)
    hnsw: HnswParams = field(default_factory=HnswParams)
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    force_mock: bool = False

    @property
    def use_mock(self) -> bool:
        return self.force_mock or not self.provider.base_url


def _apply_section(instance: Any, prefix: str, values: dict[str, Any]) -> Any:
    kwargs = {}
    names = {f.name for f in fields(instance)}
    for key, value in values.items():
        if not key.startswith(prefix + "."):
            continue
        name = key[len(prefix) + 1:]
        if name not in names:
            raise ConfigError(f"unknown option {key!r}")
        kwargs[name] = value
    if not kwargs:
        return instance
    merged = {f.name: getattr(instance, f.name) for f in fields(instance)}
    merged.update(kwargs)
    return type(instance)(**merged)


def build_app_config(values: dict[str, Any] | None = None,
                     env: dict[str, str] | None = None) -> AppConfig:
    """Build the application config from parsed values plus the environment."""
    values = dict(values or {})
    env = os.environ if env is None else env

    # Top-level engine options may be written bare (top_n = 100).
    engine_names = {f.name for f in fields(EngineConfig)}
    for key in list(values):
        if "." not in key and key in engine_names:
            values[f"engine.{key}"] = values.pop(key)

    config = AppConfig()
    config.engine = _apply_section(config.engine, "engine", values)
    config.hnsw = _apply_section(config.hnsw, "hnsw", values)
    config.provider = _apply_section(config.provider, "provider", values)

    leftovers = [k for k in values
                 if not k.split(".", 1)[0] in ("engine", "hnsw", "provider")]
    if leftovers:
        raise ConfigError(f"unknown option {leftovers[0]!r}")

    base_url = env.get(ENV_BASE_URL)
    if base_url:
        config.provider.base_url = base_url
    config.force_mock = env.get(ENV_MOCK, "") == "1"
    return config


def load_app_config(path: str | Path | None = None,
                    env: dict[str, str] | None = None) -> AppConfig:
    values = load_config_file(path) if path else {}
    return build_app_config(values, env)
