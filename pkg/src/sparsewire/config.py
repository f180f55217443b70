"""Experiment configuration: a flat, typed key-value file format.

One ``key = value`` assignment per line; ``#`` starts a comment; blank
lines are ignored.  The canonical serialized form lists keys in field
order with a single space around ``=``, and round-trips through
``parse_config``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import get_type_hints

from .errors import ConfigError

EXPERIMENTS = ("topomap", "classifier", "bench")


@dataclass
class ExperimentConfig:
    experiment: str = "topomap"
    seed: int = 1
    out_dir: str = "out"
    workers: int = 1

    # topomap / bench
    scale: int = 1
    duration_ms: float = 60000.0
    snapshot_every_ms: float = 200.0
    always_remap: bool = False
    bench_scales: tuple = (1, 2, 3)
    bench_duration_ms: float = 1000.0

    # classifier
    hidden_size: int = 128
    num_inputs: int = 20
    num_classes: int = 3
    example_steps: int = 200
    batch_size: int = 32
    num_batches: int = 200
    num_train: int = 320
    num_test: int = 96
    input_density: float = 0.1
    recurrent_density: float = 0.1
    deep_r: bool = True
    l1_strength: float = 0.005
    learning_rate: float = 1e-3

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if not 0 <= self.scale <= 7:
            raise ConfigError("scale must be in 0..7")
        if self.duration_ms < 0 or self.bench_duration_ms <= 0:
            raise ConfigError("durations must be non-negative")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not all(0 <= s <= 7 for s in self.bench_scales):
            raise ConfigError("bench_scales must be in 0..7")
        if not 0.0 < self.input_density <= 1.0 or not 0.0 < self.recurrent_density <= 1.0:
            raise ConfigError("densities must be in (0, 1]")
        if self.l1_strength < 0 or self.learning_rate <= 0:
            raise ConfigError("l1_strength must be >= 0 and learning_rate > 0")
        if min(self.hidden_size, self.num_inputs, self.num_classes,
               self.example_steps, self.batch_size, self.num_batches,
               self.num_train, self.num_test) < 1:
            raise ConfigError("network and task sizes must be positive")
        return self


_BOOL_WORDS = {"true": True, "on": True, "yes": True, "1": True,
               "false": False, "off": False, "no": False, "0": False}


def _parse_value(raw: str, typ):
    raw = raw.strip()
    if typ is bool:
        if raw.lower() not in _BOOL_WORDS:
            raise ConfigError(f"not a boolean: {raw!r}")
        return _BOOL_WORDS[raw.lower()]
    if typ is int:
        return int(raw)
    if typ is float:
        return float(raw)
    if typ is tuple:
        if not raw:
            return ()
        return tuple(int(x) for x in raw.split(","))
    return raw


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(text: str) -> ExperimentConfig:
    hints = get_type_hints(ExperimentConfig)
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = body.split("=", 1)
        key = key.strip()
        if key not in hints:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _parse_value(raw, hints[key])
        except (ValueError, ConfigError) as err:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {err}") from err
    return ExperimentConfig(**values)


def serialize_config(config: ExperimentConfig) -> str:
    lines = [f"{f.name} = {_format_value(getattr(config, f.name))}"
             for f in fields(ExperimentConfig)]
    return "\n".join(lines) + "\n"


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
