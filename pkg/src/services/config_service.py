"""Run configuration service."""

import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, get_origin

import yaml

from .config_schema import RunConfig

DEFAULT_CONFIG = "vip_config.yaml"
RESOLVED_NAME = "config.resolved.yaml"


def parse_override(key: str, raw: Any) -> Any:
    """Turn a command-line value into the YAML scalar or list it spells.

    List-valued keys also accept comma-separated values (``1,3,5``).
    """
    if not isinstance(raw, str):
        return raw
    value = yaml.safe_load(raw) if raw.strip() else raw
    field = RunConfig.model_fields.get(key)
    if field is not None and get_origin(field.annotation) is list:
        if not isinstance(value, list):
            value = [yaml.safe_load(part) for part in raw.split(",") if part.strip()]
    return value


class ConfigService:
    """Load a flat run configuration from a YAML file."""

    def __init__(self, path: Optional[str] = None):
        self._path = Path(path or os.getenv("VIP_CONFIG") or DEFAULT_CONFIG)

    def load_raw(self) -> Dict[str, Any]:
        if not self._path.exists():
            raise FileNotFoundError(f"Configuration file not found: {self._path}")
        with self._path.open("r", encoding="utf-8") as f:
            raw = yaml.safe_load(f) or {}
        if not isinstance(raw, dict):
            raise ValueError(f"{self._path}: expected a flat key-value mapping")
        return raw

    def load_config(self, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
        """
        Load the file, apply ``overrides`` and validate the result.
        """
        raw = self.load_raw()
        for key, value in (overrides or {}).items():
            key = key.replace("-", "_")
            raw[key] = parse_override(key, value)
        return RunConfig.model_validate(raw)

    def save_config(self, config: Any, path: Optional[str | Path] = None) -> Path:
        """
        Save configuration as YAML with sorted keys.
        """
        target = Path(path) if path is not None else self._path
        if hasattr(config, "model_dump"):
            config = config.model_dump()
        target.parent.mkdir(parents=True, exist_ok=True)
        with target.open("w", encoding="utf-8") as f:
            yaml.safe_dump(config, f, default_flow_style=False, sort_keys=True)
        return target

    def get_config_path(self) -> str:
        """
        Return the absolute path to the configuration file.
        """
        return str(self._path.absolute())
