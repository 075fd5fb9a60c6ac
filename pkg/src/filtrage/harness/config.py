"""Flat ``key = value`` experiment configuration.

One pair per line, ``#`` starts a comment.  Plain keys apply to every
selected experiment; ``<experiment>.<key>`` applies to one.  The special
key ``experiment`` lists the experiments to run (comma separated).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

SEED_ENV = "FILTRAGE_SEED"
RUN_KEYS = ("n_paths", "steps", "horizon", "seed", "rel_tol", "se_multiplier", "abs_tol")
INT_KEYS = ("n_paths", "steps", "seed")


class ConfigError(ValueError):
    """Malformed or unknown configuration entries."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    n_paths: int
    steps: int
    horizon: float
    seed: int = 20240611
    rel_tol: float = 0.0
    se_multiplier: float = 3.0
    abs_tol: float = 1e-12
    params: dict = field(default_factory=dict)
    out: str | None = None

    def __post_init__(self):
        if self.n_paths < 1 or self.steps < 1 or self.horizon <= 0:
            raise ConfigError(f"{self.experiment}: n_paths, steps and horizon must be positive")
        if self.rel_tol < 0 or self.se_multiplier < 0 or self.abs_tol < 0:
            raise ConfigError(f"{self.experiment}: tolerances must be nonnegative")

    def override(self, **changes) -> "ExperimentConfig":
        params = dict(self.params)
        params.update(changes.pop("params", {}))
        return replace(self, params=params, **changes)


def _number(key: str, text: str):
    try:
        if key in INT_KEYS:
            return int(text)
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None


def _param(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def parse_pairs(text: str, source: str = "<config>") -> list[tuple[str, str, int]]:
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"{source}:{lineno}: empty key or value")
        pairs.append((key, value, lineno))
    return pairs


@dataclass(frozen=True)
class ConfigSet:
    """Selected experiments plus the overrides read from a file."""

    selected: tuple[str, ...] = ()
    common: dict = field(default_factory=dict)
    per_experiment: dict = field(default_factory=dict)
    out: str | None = None


def load_config(path: str | Path | None, known: dict) -> ConfigSet:
    """Read a config file; ``known`` maps experiment ids to their default configs."""
    if path is None:
        return ConfigSet()
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return parse_config(text, known, str(p))


def parse_config(text: str, known: dict, source: str = "<config>") -> ConfigSet:
    selected: tuple[str, ...] = ()
    common: dict = {}
    per: dict = {}
    out = None
    for key, value, lineno in parse_pairs(text, source):
        where = f"{source}:{lineno}"
        if key == "experiment":
            ids = tuple(s.strip() for s in value.split(",") if s.strip())
            for i in ids:
                if i not in known:
                    raise ConfigError(f"{where}: unknown experiment {i!r}")
            selected = ids
        elif key == "out":
            out = value
        elif key in RUN_KEYS:
            common[key] = _number(key, value)
        elif "." in key:
            exp, sub = key.split(".", 1)
            if exp not in known:
                raise ConfigError(f"{where}: unknown experiment {exp!r}")
            bucket = per.setdefault(exp, {})
            if sub in RUN_KEYS:
                bucket[sub] = _number(sub, value)
            elif sub in known[exp].params:
                bucket.setdefault("params", {})[sub] = _param(value)
            else:
                raise ConfigError(f"{where}: unknown key {sub!r} for experiment {exp!r}")
        else:
            raise ConfigError(f"{where}: unknown key {key!r}")
    return ConfigSet(selected, common, per, out)


def resolve(defaults: dict, cfg: ConfigSet, only=None, env=None) -> list[ExperimentConfig]:
    """Final per-experiment configs: defaults, then file overrides, then the seed variable."""
    env = os.environ if env is None else env
    ids = list(only) if only else list(cfg.selected or defaults)
    for i in ids:
        if i not in defaults:
            raise ConfigError(f"unknown experiment {i!r}")
    seed = env.get(SEED_ENV)
    if seed is not None:
        try:
            seed = int(seed)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {seed!r}") from None
    out = []
    for i in ids:
        c = defaults[i].override(**cfg.common)
        c = c.override(**cfg.per_experiment.get(i, {}))
        if seed is not None:
            c = c.override(seed=seed)
        out.append(c)
    return out
