"""Flat ``section.key = value`` run configuration."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .graph import OrderingKind


class ConfigError(ValueError):
    pass


# every accepted key with its default; the default's type fixes the parse
DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "output": "runs/default",
    "dataset.name": "ladders",
    "dataset.path": "",
    "dataset.count": 1000,
    "dataset.test_fraction": -1.0,  # negative: per-dataset default
    "dataset.train_limit": 0,  # 0: use the whole training split
    "ordering.kind": "BF_FIXED",
    "model.embed_dim": 64,
    "model.hidden_size": 128,
    "model.num_layers": 2,
    "model.dropout": 0.25,
    "model.dtype": "float32",
    "train.epochs": 2000,
    "train.lr": 0.001,
    "train.halve_every": 200,
    "train.batch_size": 32,
    "train.patience": 100,  # 0 disables early stopping
    "train.min_delta": 1e-4,
    "train.bucket_by_length": True,
    "sample.count": 1000,
    "sample.temperature": 0.75,
    "sample.max_steps": 0,  # 0: longest training sequence + 8
    "sample.max_retries": 10,
    "eval.model": "ours",
    "eval.reps": 10,
    "eval.sizes": "1000,5000",
    "fit.statistics": "ADD,ACC",
    "fit.p_grid": "0.05,0.10,0.15,0.20,0.25,0.30,0.35,0.40,0.45,0.50,0.55,0.60,0.65,0.70,0.75,0.80,0.85,0.90,0.95",
    "fit.m_grid": "1,2,3,4,5",
    "grub.embed_dim": 16,
    "grub.hidden_size": 64,
    "grub.num_layers": 2,
    "grub.condition_on_position": False,
    "grub.epochs": 200,
    "grub.lr": 0.001,
    "ablate.strategies": "UNIFORM_RANDOM,BF_RANDOM_PER_EPOCH,DF_RANDOM_PER_EPOCH,DF_FIXED,BF_FIXED",
    "ablate.seeds": "0",
    "ablate.reps": 10,
}

CHOICES = {
    "dataset.name": {"ladders", "community", "edgelist"},
    "ordering.kind": {k.value for k in OrderingKind},
    "model.dtype": {"float32", "float64"},
    "eval.model": {"ours", "er", "ba", "grub"},
}


def _parse_value(key: str, raw: str) -> Any:
    default = DEFAULTS[key]
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in {"true", "false", "1", "0", "yes", "no"}:
                raise ValueError(raw)
            value = low in {"true", "1", "yes"}
        elif isinstance(default, int):
            value = int(raw)
        elif isinstance(default, float):
            value = float(raw)
        else:
            value = raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None
    if key in CHOICES and value not in CHOICES[key]:
        raise ConfigError(f"{key}: {value!r} is not one of {sorted(CHOICES[key])}")
    return value


def _format_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class RunConfig:
    values: dict[str, Any] = field(default_factory=lambda: dict(DEFAULTS))

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def set(self, key: str, raw: str | Any):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _parse_value(key, raw) if isinstance(raw, str) else _parse_value(key, _format_value(raw))

    @classmethod
    def parse(cls, text: str, source: str = "<config>") -> RunConfig:
        cfg = cls()
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
            key, raw = (s.strip() for s in line.split("=", 1))
            try:
                cfg.set(key, raw)
            except ConfigError as e:
                raise ConfigError(f"{source}:{lineno}: {e}") from None
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        return cls.parse(path.read_text(), str(path))

    def dumps(self) -> str:
        return "".join(f"{k} = {_format_value(self.values[k])}\n" for k in sorted(self.values))

    def hash(self) -> str:
        """Digest of every value except the output location."""
        body = "".join(f"{k} = {_format_value(v)}\n" for k, v in sorted(self.values.items()) if k != "output")
        return hashlib.sha256(body.encode()).hexdigest()

    def list(self, key: str, cast=str) -> list:
        return [cast(s.strip()) for s in str(self.values[key]).split(",") if s.strip()]
