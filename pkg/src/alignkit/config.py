"""Declarative experiment configuration.

One flat JSON object describes a run; unknown keys are rejected and every
default matches the reference training recipe (temperature 0.5, learning
rate 1e-2, momentum 0.9, weight decay 1e-5, batch 32, 32 steps per epoch,
summed-loss alpha 0.5, alternating weight 1, 100 epochs, pretraining split
at epoch 50).  CLI flags mirror these keys one-to-one.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .contrastive import CRITICS, PAIRINGS, SCHEDULES, LossConfig, Schedule
from .toytrain import OptimizerConfig


@dataclass
class ExperimentConfig:
    # schedule
    schedule: str = "baseline"
    alternating_weight: float = 1.0
    sum_alpha: float = 0.5
    pretrain_split_epoch: int = 50
    # losses
    critic_final: str = "gaussian_l2"
    critic_bn: str = "gaussian_l2"
    tau_final: float = 0.5
    tau_bn: float = 0.5
    pairing: str = "cross_pair"
    # optimizer
    learning_rate: float = 1e-2
    momentum: float = 0.9
    weight_decay: float = 1e-5
    grad_clip_norm: float = 1.0
    epochs: int = 100
    iterations_per_epoch: int = 32
    batch_size: int = 32
    seed: int = 0
    # synthetic twin dataset / encoder
    n_samples: int = 256
    input_dim: int = 32
    latent_dim: int = 4
    noise_sigma: float = 0.1
    bn_dim: int = 8
    out_dim: int = 8
    # registration protocol
    max_rotation_deg: float = 30.0
    max_translation_px: float = 100.0
    rsr_threshold_px: float = 100.0
    # output
    output_dir: str = "out"

    def validate(self) -> None:
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")
        if self.critic_final not in CRITICS or self.critic_bn not in CRITICS:
            raise ValueError(f"critics must be one of {CRITICS}")
        if self.pairing not in PAIRINGS:
            raise ValueError(f"pairing must be one of {PAIRINGS}")
        for name in ("tau_final", "tau_bn", "alternating_weight", "sum_alpha"):
            if not (getattr(self, name) > 0):
                raise ValueError(f"{name} must be positive")
        for name in ("n_samples", "input_dim", "latent_dim", "bn_dim", "out_dim",
                     "pretrain_split_epoch"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.schedule == "pretraining" and self.pretrain_split_epoch >= self.epochs:
            raise ValueError("pretrain_split_epoch must be < epochs")
        self.optimizer()  # shares validation

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        coerced = {}
        for key, value in data.items():
            target = known[key].type
            if target in ("int", int):
                coerced[key] = int(value)
            elif target in ("float", float):
                coerced[key] = float(value)
            else:
                coerced[key] = str(value)
        cfg = cls(**coerced)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON config: {exc}") from None
        if not isinstance(data, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def schedule_spec(self) -> Schedule:
        return Schedule(
            kind=self.schedule,
            weight=self.alternating_weight,
            alpha=self.sum_alpha,
            split_epoch=self.pretrain_split_epoch,
        )

    def loss_final(self) -> LossConfig:
        return LossConfig(self.critic_final, self.tau_final, self.pairing)

    def loss_bn(self) -> LossConfig:
        return LossConfig(self.critic_bn, self.tau_bn, self.pairing)

    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            grad_clip_norm=self.grad_clip_norm,
            epochs=self.epochs,
            iterations_per_epoch=self.iterations_per_epoch,
            batch_size=self.batch_size,
            seed=self.seed,
        )
