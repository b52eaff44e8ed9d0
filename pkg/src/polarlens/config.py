"""Declarative pipeline configuration: one YAML file drives every subcommand."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

CONFIG_VERSION = 1


class ConfigError(Exception):
    pass


@dataclass
class PipelineConfig:
    seed: int
    paths: dict = field(default_factory=dict)
    harvest: dict = field(default_factory=dict)
    split: dict = field(default_factory=dict)
    provider: dict = field(default_factory=dict)
    clients: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    @classmethod
    def load(cls, path, seed_override: Optional[int] = None) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        with path.open(encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        if raw.get("config_version") != CONFIG_VERSION:
            raise ConfigError(
                f"unsupported config_version {raw.get('config_version')!r}; want {CONFIG_VERSION}"
            )
        if seed_override is None and "seed" not in raw:
            raise ConfigError("config must set a seed")
        cfg = cls(
            seed=int(seed_override if seed_override is not None else raw["seed"]),
            paths=raw.get("paths", {}),
            harvest=raw.get("harvest", {}),
            split=raw.get("split", {}),
            provider=raw.get("provider", {}),
            clients=raw.get("clients", {}),
            train=raw.get("train", {}),
            base_dir=path.parent,
        )
        return cfg

    def path(self, key: str, required: bool = True) -> Optional[Path]:
        value = self.paths.get(key)
        if value is None:
            if required:
                raise ConfigError(f"config paths.{key} is required for this command")
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def split_ratios(self) -> tuple:
        ratios = self.split.get("ratios", [0.8, 0.1, 0.1])
        if len(ratios) != 3:
            raise ConfigError("split.ratios must have three entries (train, valid, test)")
        return tuple(float(r) for r in ratios)

    def split_key(self) -> tuple:
        key = self.split.get("key", ["language", "label"])
        allowed = {"language", "label", "outlet"}
        bad = set(key) - allowed
        if bad:
            raise ConfigError(f"unsupported split key fields: {sorted(bad)}")
        return tuple(key)
