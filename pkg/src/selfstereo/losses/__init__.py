"""Self-supervised objectives and their sampling machinery."""
from selfstereo.losses.consistency import ValidMask, consistency_mask, disparity_diff_loss, lr_valid_mask
from selfstereo.losses.contrastive import ContrastiveConfig, contrastive_loss, infonce_loss, sample_pairs
from selfstereo.losses.momentum import MomentumState, momentum_update
from selfstereo.losses.photometric import photometric_loss, smoothness_loss
from selfstereo.losses.queue import MemoryQueue, queue_update
from selfstereo.losses.total import LossParts, LossWeights, total_loss

__all__ = [
    "ContrastiveConfig",
    "LossParts",
    "LossWeights",
    "MemoryQueue",
    "MomentumState",
    "ValidMask",
    "consistency_mask",
    "contrastive_loss",
    "disparity_diff_loss",
    "infonce_loss",
    "lr_valid_mask",
    "momentum_update",
    "photometric_loss",
    "queue_update",
    "sample_pairs",
    "smoothness_loss",
    "total_loss",
]
