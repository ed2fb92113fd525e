"""Training configuration and its on-disk ``key = value`` form."""
from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Mapping, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from selfstereo.data.augment import DEFAULT_PEAK_RATIO, MAX_OCCLUSION_RATIO, AugmentationConfig
from selfstereo.errors import ConfigError
from selfstereo.losses.consistency import DEFAULT_WARP_THRESHOLD
from selfstereo.losses.contrastive import ContrastiveConfig
from selfstereo.losses.momentum import DEFAULT_MOMENTUM
from selfstereo.losses.total import LossWeights
from selfstereo.model.config import ModelConfig
from selfstereo.utils.keyvalue import dump_keyvalue, load_keyvalue, merge_overrides


class TrainConfig(BaseModel):
    """Everything a run depends on; two runs with equal configs are bit-identical."""

    model_config = ConfigDict(extra="forbid")

    height: int = Field(64, ge=16)
    width: int = Field(128, ge=16)
    channels: int = Field(3, ge=1)
    d_max: int = Field(32, ge=2)
    stages: int = Field(2, ge=1, le=3)
    dataset_size: int = Field(200, ge=1)
    batch_size: int = Field(2, ge=1)
    total_steps: int = Field(4000, ge=1)

    learning_rate: float = Field(1e-4, gt=0.0)
    lr_decay_fraction: float = Field(0.2, ge=0.0, le=1.0)
    lr_decay_factor: float = Field(0.1, gt=0.0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    weight_decay: float = Field(1e-2, ge=0.0)
    adam_eps: float = Field(1e-8, gt=0.0)
    grad_clip: float = Field(5.0, ge=0.0)

    momentum: float = Field(DEFAULT_MOMENTUM, ge=0.0, lt=1.0)
    tau_warp: float = Field(DEFAULT_WARP_THRESHOLD, ge=0.0)
    occlusion_peak: float = Field(DEFAULT_PEAK_RATIO, ge=0.0, le=MAX_OCCLUSION_RATIO)
    # overrides the curriculum with a constant occlusion ratio when set
    fixed_occlusion_ratio: Optional[float] = Field(None, ge=0.0, le=MAX_OCCLUSION_RATIO)

    seed: int = Field(0, ge=0)
    precision: int = 32
    checkpoint_every: int = Field(0, ge=0)
    log_every: int = Field(10, ge=1)
    prefetch: int = Field(2, ge=0)

    model: ModelConfig = Field(default_factory=ModelConfig)
    losses: LossWeights = Field(default_factory=LossWeights)
    contrastive: ContrastiveConfig = Field(default_factory=ContrastiveConfig)
    augmentation: AugmentationConfig = Field(default_factory=AugmentationConfig)

    @field_validator("precision")
    @classmethod
    def _known_precision(cls, value: int) -> int:
        if value not in (32, 64):
            raise ValueError(f"precision must be 32 or 64, got {value}")
        return value

    @model_validator(mode="after")
    def _sync_model(self) -> "TrainConfig":
        synced = {**self.model.model_dump(), "d_max": self.d_max, "stages": self.stages, "in_channels": self.channels}
        self.model = ModelConfig.model_validate(synced)
        self.model.check_image(self.height, self.width)
        if 2 * self.d_max >= self.width:
            raise ValueError(f"d_max {self.d_max} must stay below half the width {self.width}")
        return self

    @property
    def decay_step(self) -> int:
        return int(round(self.total_steps * self.lr_decay_fraction))

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def to_keyvalue(self) -> str:
        return dump_keyvalue(self.model_dump(mode="json"))


def learning_rate(step: int, cfg: TrainConfig) -> float:
    """Two-phase schedule: the base rate, then ``lr_decay_factor`` times it from ``decay_step`` on."""
    if step >= cfg.decay_step:
        return cfg.learning_rate * cfg.lr_decay_factor
    return cfg.learning_rate


def config_from_dict(data: Mapping[str, Any], *, source: str = "<config>") -> TrainConfig:
    try:
        return TrainConfig.model_validate(dict(data))
    except ValidationError as exc:
        raise ConfigError(f"Invalid training config {source}: {exc}") from exc


def config_from_json(text: str, *, source: str = "<checkpoint>") -> TrainConfig:
    try:
        return TrainConfig.model_validate_json(text)
    except ValidationError as exc:
        raise ConfigError(f"Invalid training config {source}: {exc}") from exc


def load_train_config(
    path: Optional[str | os.PathLike[str]] = None, overrides: Optional[Mapping[str, Any]] = None
) -> TrainConfig:
    """Read a config file (or the defaults when ``path`` is None) and apply dotted overrides."""
    data = load_keyvalue(path) if path is not None else {}
    if overrides:
        data = merge_overrides(data, overrides)
    return config_from_dict(data, source=str(path) if path is not None else "<defaults>")


def save_train_config(cfg: TrainConfig, path: str | os.PathLike[str]) -> str:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(cfg.to_keyvalue(), encoding="utf-8")
    return str(target)
