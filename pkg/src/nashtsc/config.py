"""Experiment configuration: a flat ``key = value`` text file.

Lines starting with ``#`` are comments.  ``preset = <name>`` picks the base
values (default ``paper-5x5``); every other key overrides one field.  The
demand table is a comma-separated list of ``<side><index>:<ivn>:<tfr>``
entries, e.g. ``demand = N1:1000:1/20, W3:1050:1/10``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .sim import Entrance

CONTROLLERS = ("opndqn", "dqn", "maql", "fixed")


class ConfigError(ValueError):
    pass


class UnknownKeyError(ConfigError):
    pass


class MalformedValueError(ConfigError):
    pass


class RangeError(ConfigError):
    pass


class ConfigFileMissing(ConfigError, FileNotFoundError):
    pass


def _table(rows):
    return tuple(Entrance(side, i + 1, ivn, Fraction(1, k))
                 for side, entries in rows for i, (ivn, k) in enumerate(entries))


DEMAND_5X5 = _table([
    ("N", [(1000, 20), (1000, 10), (1100, 15), (1050, 20), (900, 10)]),
    ("S", [(1100, 15), (900, 15), (900, 20), (1000, 10), (950, 20)]),
    ("E", [(1050, 20), (1000, 15), (950, 15), (1000, 20), (850, 10)]),
    ("W", [(950, 15), (1000, 20), (1050, 10), (1000, 10), (1000, 20)]),
])

# north-south corridors carry roughly twice the east-west flow
SMOKE_DEMAND = _table([
    ("N", [(60, 8), (60, 10), (60, 8)]),
    ("S", [(60, 10), (60, 8), (60, 10)]),
    ("E", [(60, 15), (60, 20), (60, 15)]),
    ("W", [(60, 20), (60, 15), (60, 20)]),
])


@dataclass(frozen=True)
class ExperimentConfig:
    rows: int = 5
    cols: int = 5
    edge_length: float = 120.0
    cell_length: float = 5.0
    observed_cells: int = 10
    demand: tuple = DEMAND_5X5
    controller: str = "opndqn"
    episodes: int = 300
    seed: int = 0
    # learning hyperparameters
    replay_capacity: int = 20000
    batch_size: int = 64
    epsilon_start: float = 1.0
    epsilon_end: float = 0.01
    epsilon_decay_epochs: int = 10000
    pretrain_steps: int = 2000
    target_update_interval: int = 100
    gamma: float = 0.99
    learning_rate: float = 1e-4
    rms_decay: float = 0.9
    rms_eps: float = 1e-8
    reward_scale: float = 0.01
    j_max: int = 10
    maql_alpha: float = 0.1
    fixed_action: int = 2
    max_episode_seconds: int = 25000

    def replace(self, **changes) -> "ExperimentConfig":
        cfg = dataclasses.replace(self, **changes)
        validate(cfg)
        return cfg


PRESETS = {
    "paper-5x5": ExperimentConfig(),
    "smoke-3x3": ExperimentConfig(
        rows=3, cols=3, edge_length=100.0, demand=SMOKE_DEMAND, episodes=150,
        epsilon_decay_epochs=1500, pretrain_steps=300, max_episode_seconds=5000,
    ),
}

_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_INT_FIELDS = {n for n, f in _FIELDS.items() if f.type == "int"}
_FLOAT_FIELDS = {n for n, f in _FIELDS.items() if f.type == "float"}


def format_demand(demand) -> str:
    return ", ".join(f"{e.name}:{e.ivn}:{e.tfr.numerator}/{e.tfr.denominator}" for e in demand)


def parse_demand(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    out = []
    for item in text.split(","):
        parts = [p.strip() for p in item.split(":")]
        if len(parts) != 3 or len(parts[0]) < 2:
            raise MalformedValueError(f"demand: cannot parse entry {item.strip()!r}, expected e.g. N1:1000:1/20")
        name, ivn, tfr = parts
        try:
            entrance = Entrance(name[0].upper(), int(name[1:]), int(ivn), Fraction(tfr))
        except (ValueError, ZeroDivisionError) as exc:
            raise MalformedValueError(f"demand: bad entry {item.strip()!r}: {exc}") from exc
        out.append(entrance)
    return tuple(out)


def _convert(key, raw):
    try:
        if key in _INT_FIELDS:
            return int(raw)
        if key in _FLOAT_FIELDS:
            return float(raw)
    except ValueError:
        raise MalformedValueError(f"{key}: expected a {_FIELDS[key].type}, got {raw!r}") from None
    if key == "demand":
        return parse_demand(raw)
    return raw


def validate(cfg: ExperimentConfig):
    def need(cond, key, msg):
        if not cond:
            raise RangeError(f"{key}: {msg}")

    need(cfg.rows >= 1, "rows", "must be >= 1")
    need(cfg.cols >= 1, "cols", "must be >= 1")
    need(cfg.cell_length > 0, "cell_length", "must be positive")
    n_cells = cfg.edge_length / cfg.cell_length
    need(cfg.edge_length > 0 and abs(n_cells - round(n_cells)) < 1e-9, "edge_length",
         f"must be a positive multiple of cell_length ({cfg.cell_length})")
    need(1 <= cfg.observed_cells <= round(n_cells), "observed_cells", f"must be in 1..{round(n_cells)}")
    need(cfg.controller in CONTROLLERS, "controller", f"must be one of {', '.join(CONTROLLERS)}")
    need(cfg.episodes >= 0, "episodes", "must be >= 0")
    need(cfg.replay_capacity >= 1, "replay_capacity", "must be >= 1")
    need(cfg.batch_size >= 1, "batch_size", "must be >= 1")
    need(0.0 <= cfg.epsilon_start <= 1.0, "epsilon_start", "must be in [0, 1]")
    need(0.0 <= cfg.epsilon_end <= 1.0, "epsilon_end", "must be in [0, 1]")
    need(cfg.epsilon_decay_epochs >= 0, "epsilon_decay_epochs", "must be >= 0")
    need(cfg.pretrain_steps >= 0, "pretrain_steps", "must be >= 0")
    need(cfg.target_update_interval >= 1, "target_update_interval", "must be >= 1")
    need(0.0 <= cfg.gamma <= 1.0, "gamma", "discount factor must be in [0, 1]")
    need(cfg.learning_rate > 0, "learning_rate", "must be positive")
    need(0.0 <= cfg.rms_decay < 1.0, "rms_decay", "must be in [0, 1)")
    need(cfg.rms_eps > 0, "rms_eps", "must be positive")
    need(cfg.reward_scale > 0, "reward_scale", "must be positive")
    need(cfg.j_max >= 1, "j_max", "must be >= 1")
    need(0.0 <= cfg.maql_alpha <= 1.0, "maql_alpha", "must be in [0, 1]")
    need(0 <= cfg.fixed_action <= 4, "fixed_action", "must be in 0..4")
    need(cfg.max_episode_seconds >= 1, "max_episode_seconds", "must be >= 1")
    names = set()
    for e in cfg.demand:
        limit = cfg.cols if e.direction in ("N", "S") else cfg.rows
        need(1 <= e.index <= limit, "demand", f"entrance {e.name} is outside a {cfg.rows}x{cfg.cols} grid")
        need(e.name not in names, "demand", f"entrance {e.name} listed twice")
        names.add(e.name)


def parse_text(text: str) -> ExperimentConfig:
    values = {}
    preset = "paper-5x5"
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise MalformedValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key == "preset":
            if raw not in PRESETS:
                raise MalformedValueError(f"preset: unknown preset {raw!r}, choose from {', '.join(PRESETS)}")
            preset = raw
            continue
        if key not in _FIELDS:
            raise UnknownKeyError(f"unknown config key {key!r} (line {lineno})")
        values[key] = _convert(key, raw)
    return PRESETS[preset].replace(**values)


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigFileMissing(f"config file not found: {path}")
    return parse_text(path.read_text())


def serialize(cfg: ExperimentConfig) -> str:
    lines = []
    for name in _FIELDS:
        value = getattr(cfg, name)
        if name == "demand":
            text = format_demand(value)
        else:
            text = value if isinstance(value, str) else repr(value)
        lines.append(f"{name} = {text}")
    return "\n".join(lines) + "\n"
