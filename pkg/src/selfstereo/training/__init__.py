"""Optimizer, checkpoints and the dual-branch training loop."""
from selfstereo.training.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from selfstereo.training.config import (
    TrainConfig,
    config_from_json,
    learning_rate,
    load_train_config,
    save_train_config,
)
from selfstereo.training.optimizer import AdamState, adamw_step, clip_grad_norm
from selfstereo.training.prefetch import BatchPrefetcher, BatchStatus, StepBatch
from selfstereo.training.trainer import (
    FINAL_CHECKPOINT_NAME,
    TRAIN_METRICS_HEADER,
    TRAIN_METRICS_NAME,
    FitResult,
    StepMetrics,
    Trainer,
    fit,
    network_from_checkpoint,
)

__all__ = [
    "AdamState",
    "BatchPrefetcher",
    "BatchStatus",
    "Checkpoint",
    "FINAL_CHECKPOINT_NAME",
    "FitResult",
    "StepBatch",
    "StepMetrics",
    "TRAIN_METRICS_HEADER",
    "TRAIN_METRICS_NAME",
    "TrainConfig",
    "Trainer",
    "adamw_step",
    "clip_grad_norm",
    "config_from_json",
    "fit",
    "learning_rate",
    "load_checkpoint",
    "load_train_config",
    "network_from_checkpoint",
    "save_checkpoint",
    "save_train_config",
]
