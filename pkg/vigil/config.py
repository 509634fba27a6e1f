"""Runtime settings loader: YAML file with dotted-key access and typed accessors."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

import yaml

from .errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_PATH = "config/vigil.yaml"


class Config:
    """Loaded runtime settings. Model and training specs live in JSON, not here."""

    def __init__(self, raw: dict):
        self._raw = raw

    def get(self, *keys, default=None):
        """Navigate nested keys: cfg.get('paths', 'log_dir')"""
        obj = self._raw
        for key in keys:
            if not isinstance(obj, dict):
                return default
            obj = obj.get(key, None)
            if obj is None:
                return default
        return obj

    # ── Convenience accessors ─────────────────────────────────────────────

    @property
    def log_level(self) -> str:
        return str(self.get("logging", "level", default="INFO")).upper()

    @property
    def log_dir(self) -> str:
        return self.get("paths", "log_dir", default="./logs")

    @property
    def run_dir(self) -> str:
        return self.get("paths", "run_dir", default="./runs")

    @property
    def workers(self) -> int:
        return max(1, int(self.get("runtime", "workers", default=1)))

    @property
    def deterministic(self) -> bool:
        return bool(self.get("runtime", "deterministic", default=False))


def load_config(path: Optional[str] = None) -> Config:
    """Load settings from YAML.

    An explicit path must exist; without one, config/vigil.yaml is used when
    present and built-in defaults otherwise.
    """
    if path is None:
        p = Path(DEFAULT_PATH)
        if not p.exists():
            logger.debug("No %s; using default settings", DEFAULT_PATH)
            return Config({})
    else:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(
                f"Config file not found: {path}\n"
                f"Copy config/vigil.yaml.example to config/vigil.yaml and adjust it."
            )

    with open(p, "r") as f:
        try:
            raw = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"{p}: invalid YAML: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    logger.info("Config loaded from %s", p)
    return Config(raw)
