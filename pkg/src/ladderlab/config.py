"""Experiment configuration: parsing, validation, canonical hashing.

Configs are human-edited YAML (JSON is a YAML subset, so plain JSON files
load too).  The canonical hash covers every field that can change computed
values - distribution and growth specs, functional parameters, sample counts,
seeds, caps - and deliberately excludes output paths and the parallelism
degree, which affect neither a single byte of the results (simulation is
keyed per stream).  Every artifact embeds the hash, so stale mixes of config
and samples are refused instead of silently estimated.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "jsonify"]


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


def jsonify(obj):
    """Recursively convert numpy scalars/arrays and tuples for json.dumps."""
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)  # inf / nan are not valid JSON scalars
    return obj


@dataclass
class ExperimentConfig:
    """Validated experiment description."""

    growth: dict | None = None
    increments: dict | None = None
    eps: float | None = None
    delta: float | None = None
    alpha: float | None = None
    c: float | None = None
    shift: float = 0.0
    n_samples: int = 10_000
    step_cap: int = 1_000_000
    seed: int = 0
    streams: int = 1
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.eps is not None and not 0.0 < self.eps < 1.0:
            raise ConfigError(f"eps must lie in (0, 1), got {self.eps}")
        if self.delta is not None and not self.delta > 0.0:
            raise ConfigError(f"delta must be positive, got {self.delta}")
        if self.alpha is not None and not self.alpha > 0.0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.c is not None and not self.c > 0.0:
            raise ConfigError(f"c must be positive, got {self.c}")
        if int(self.n_samples) < 1:
            raise ConfigError("n_samples must be at least one")
        if int(self.step_cap) < 1:
            raise ConfigError("step_cap must be at least one")
        if int(self.streams) < 1:
            raise ConfigError("streams must be at least one")
        self.n_samples = int(self.n_samples)
        self.step_cap = int(self.step_cap)
        self.seed = int(self.seed)
        self.streams = int(self.streams)
        self.shift = float(self.shift)

    def semantic_dict(self) -> dict:
        """Fields that determine computed values; basis of the config hash."""
        return {
            "growth": self.growth,
            "increments": self.increments,
            "eps": self.eps,
            "delta": self.delta,
            "alpha": self.alpha,
            "c": self.c,
            "shift": self.shift,
            "n_samples": self.n_samples,
            "step_cap": self.step_cap,
            "seed": self.seed,
        }

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.semantic_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


_KNOWN_KEYS = {
    "growth",
    "increments",
    "eps",
    "delta",
    "alpha",
    "c",
    "shift",
    "n_samples",
    "step_cap",
    "seed",
    "streams",
    "outputs",
}


def load_config(path, seed_override: int | None = None, streams_override: int | None = None) -> ExperimentConfig:
    """Load and validate a YAML/JSON config; overrides apply before hashing."""
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping")
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if seed_override is not None:
        raw["seed"] = seed_override
    if streams_override is not None:
        raw["streams"] = streams_override
    try:
        return ExperimentConfig(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
