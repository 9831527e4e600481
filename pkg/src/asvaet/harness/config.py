"""Run configuration: JSON file values overridden by command-line flags."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

from ..model import ModelConfig

MODES = ("supervised", "self_training", "asvaet")


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    labeled_path: Optional[str] = None
    test_path: Optional[str] = None
    unlabeled_path: Optional[str] = None
    vectors_path: Optional[str] = None
    vectors_dim: Optional[int] = None
    output_dir: str = "run"

    mode: str = "asvaet"
    classifier: str = "memnet"
    classifier_options: dict = field(default_factory=dict)

    d_model: int = 100
    n_layers: int = 2
    n_heads: int = 8
    d_ff: Optional[int] = None
    dropout: float = 0.1
    z_dim: int = 50
    max_len: int = 80

    kl_weight: float = 1e-4
    kl_anneal_steps: int = 0
    gamma: float = 10.0
    label_prior: str = "uniform"
    per_label_noise: bool = False

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_labeled: int = 32
    batch_unlabeled: int = 32
    epochs: int = 20
    steps_per_epoch: Optional[int] = None
    patience: int = 10
    seed: int = 0

    self_training_chunk: int = 1000
    self_training_epochs: int = 5

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.label_prior not in ("uniform", "empirical"):
            raise ConfigError("label_prior must be 'uniform' or 'empirical'")
        for name in ("d_model", "n_layers", "n_heads", "z_dim", "max_len", "batch_labeled",
                     "batch_unlabeled", "epochs", "self_training_chunk", "self_training_epochs"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.kl_weight < 0 or self.gamma < 0 or self.learning_rate <= 0:
            raise ConfigError("kl_weight and gamma must be >= 0, learning_rate > 0")
        if self.steps_per_epoch is not None and self.steps_per_epoch <= 0:
            raise ConfigError("steps_per_epoch must be positive")

    def model_config(self) -> ModelConfig:
        return ModelConfig(self.d_model, self.n_layers, self.n_heads, self.d_ff, self.dropout,
                           self.z_dim)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path, **overrides) -> "TrainConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)

    def overridden(self) -> dict:
        """Fields differing from their defaults."""
        default = TrainConfig()
        return {k: v for k, v in self.to_dict().items() if getattr(default, k) != v}
