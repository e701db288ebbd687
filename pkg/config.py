"""Pipeline configuration loading, validation and seed streams."""

from __future__ import annotations

import dataclasses
import json
import zlib
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from errors import ConfigError
from models import FitConfig, PipelineConfig, TrainConfig


def derive_rng(seed: int, stream: str) -> np.random.Generator:
    """Independent generator for a named stage ("fit", "init", "shuffle", "sampling")."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(stream.encode())]))


def load_config(path: str | Path | None = None, seed: int | None = None) -> PipelineConfig:
    """Load and validate a JSON or YAML pipeline config; ``seed`` overrides every seed."""
    data: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Config not found: {path}")
        with open(path) as f:
            try:
                if path.suffix.lower() in (".yaml", ".yml"):
                    data = yaml.safe_load(f) or {}
                else:
                    data = json.load(f)
            except (json.JSONDecodeError, yaml.YAMLError) as e:
                raise ConfigError(f"{path}: cannot parse config: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a mapping")
    return config_from_dict(data, seed=seed)


def config_from_dict(data: dict[str, Any], seed: int | None = None) -> PipelineConfig:
    data = dict(data)
    fit_data = data.pop("fit", None) or {}
    train_data = data.pop("train", None) or {}
    if not isinstance(fit_data, dict) or not isinstance(train_data, dict):
        raise ConfigError("'fit' and 'train' must be mappings")

    cfg = _build(PipelineConfig, data, "", skip={"fit", "train"})
    if seed is not None:
        cfg.seed = seed
    # sub-configs inherit the pipeline seed unless they set their own
    if seed is not None:
        fit_data = {**fit_data, "seed": seed}
        train_data = {**train_data, "seed": seed}
    fit_data.setdefault("seed", cfg.seed)
    train_data.setdefault("seed", cfg.seed)
    cfg.fit = _build(FitConfig, fit_data, "fit.")
    cfg.train = _build(TrainConfig, train_data, "train.")
    validate(cfg)
    return cfg


def _build(cls, data: dict[str, Any], prefix: str, skip: set[str] = frozenset()):
    fields = {f.name: f for f in dataclasses.fields(cls) if f.name not in skip}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(prefix + k for k in sorted(unknown))}")

    values = {}
    for name, value in data.items():
        default = getattr(cls(), name)
        values[name] = _coerce(value, type(default), prefix + name)
    return cls(**values)


def _coerce(value: Any, kind: type, key: str):
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    return value


def validate(cfg: PipelineConfig) -> None:
    checks = [
        (cfg.target_base_faces >= 1, "target_base_faces must be >= 1"),
        (cfg.level >= 1, "level must be >= 1"),
        (0 <= cfg.pad_width <= 2 ** (cfg.level - 1), "pad_width must be in [0, 2^(level-1)]"),
        (cfg.lambda_edge >= 0, "lambda_edge must be >= 0"),
        (cfg.fit.samples >= 100, "fit.samples must be >= 100"),
        (cfg.fit.eval_samples >= 100, "fit.eval_samples must be >= 100"),
        (cfg.fit.steps >= 0, "fit.steps must be >= 0"),
        (cfg.fit.lr > 0, "fit.lr must be > 0"),
        (0 <= cfg.fit.momentum < 1, "fit.momentum must be in [0, 1)"),
        (
            min(cfg.fit.w_chamfer, cfg.fit.w_edge, cfg.fit.w_normal, cfg.fit.w_laplacian) >= 0,
            "fit loss weights must be >= 0",
        ),
        (cfg.train.epochs >= 1, "train.epochs must be >= 1"),
        (cfg.train.batch_size >= 1, "train.batch_size must be >= 1"),
        (cfg.train.lr > 0, "train.lr must be > 0"),
        (0 < cfg.train.train_fraction <= 1, "train.train_fraction must be in (0, 1]"),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigError(message)
