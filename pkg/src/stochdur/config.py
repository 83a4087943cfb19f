"""JSON run configuration.

Layout::

    {
      "kernel":  {"M": 6, "T": null, "noise_std": 1.0, "seed": 0},
      "weights": {"lambda_length": 1.0, "lambda_duration": 1.0,
                  "lambda_recon": 1.0, "lambda_mel": 45.0},
      "trainer": {"steps": 2000, "learning_rate": 0.02, ...},
      "task":    {"n_tokens": 6, "embed_dim": 16, "seed": 0, "target_noise": 0.0}
    }

Every section and key is optional; unknown ones are rejected.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .losses import LossWeights
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSection:
    M: int = 6
    T: int | None = None
    noise_std: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class TaskSection:
    n_tokens: int = 6
    embed_dim: int = 16
    seed: int = 0
    target_noise: float = 0.0


@dataclass(frozen=True)
class RunConfig:
    kernel: KernelSection = field(default_factory=KernelSection)
    weights: LossWeights = field(default_factory=LossWeights)
    trainer: dict = field(default_factory=dict)
    task: TaskSection = field(default_factory=TaskSection)

    def train_config(self) -> TrainConfig:
        return TrainConfig(noise_std=self.kernel.noise_std, seed=self.kernel.seed, weights=self.weights, **self.trainer)


_TRAINER_KEYS = {f.name for f in dataclasses.fields(TrainConfig)} - {"noise_std", "seed", "weights"}

_TYPES = {"int": int, "float": (int, float), "str": str}


def _check_type(section: str, key: str, value, annotation: str) -> None:
    allowed = annotation.replace(" ", "").split("|")
    if value is None:
        if "None" not in allowed:
            raise ConfigError(f"{section}.{key}: must not be null")
        return
    for name in allowed:
        expected = _TYPES.get(name)
        if expected is not None and isinstance(value, expected) and not isinstance(value, bool):
            return
    raise ConfigError(f"{section}.{key}: expected {annotation}, got {type(value).__name__} {value!r}")


def _build(cls, section: str, data, allowed: set[str] | None = None):
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be a JSON object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    names = allowed if allowed is not None else set(fields)
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"section {section!r}: unknown key(s) {', '.join(unknown)}")
    for key, value in data.items():
        _check_type(section, key, value, str(fields[key].type))
    return data if allowed is not None else cls(**data)


def parse_config(data) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(data) - {"kernel", "weights", "trainer", "task"})
    if unknown:
        raise ConfigError(f"unknown section(s) {', '.join(unknown)}")
    try:
        kernel = _build(KernelSection, "kernel", data.get("kernel", {}))
        weights = _build(LossWeights, "weights", data.get("weights", {}))
        trainer = dict(_build(TrainConfig, "trainer", data.get("trainer", {}), _TRAINER_KEYS))
        task = _build(TaskSection, "task", data.get("task", {}))
        cfg = RunConfig(kernel, weights, trainer, task)
        if kernel.M < 1:
            raise ConfigError("kernel.M must be >= 1")
        if kernel.T is not None and kernel.T < 1:
            raise ConfigError("kernel.T must be >= 1 or null")
        if task.n_tokens < 1 or task.embed_dim < 1:
            raise ConfigError("task.n_tokens and task.embed_dim must be >= 1")
        if task.target_noise < 0:
            raise ConfigError("task.target_noise must be >= 0")
        cfg.train_config()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    return parse_config(data)
