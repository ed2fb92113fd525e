from pathlib import Path
from typing import Optional

from selfstereo.commands.abstract_command import Command
from selfstereo.training.checkpoint import load_checkpoint
from selfstereo.training.config import TrainConfig, save_train_config
from selfstereo.training.trainer import FitResult, Trainer
from selfstereo.utils.filesystem import ensure_output_dir
from selfstereo.utils.logging import get_logger

logger = get_logger(__name__)

CONFIG_COPY_NAME = "train.conf"


class Train(Command):
    """Fit a model from a config, optionally resuming from a checkpoint of the same config."""

    def do(self, output_dir: str, cfg: TrainConfig, resume_path: Optional[str] = None) -> FitResult:
        out = Path(ensure_output_dir(output_dir))
        save_train_config(cfg, out / CONFIG_COPY_NAME)

        if resume_path:
            checkpoint = load_checkpoint(resume_path, expected_config=cfg.canonical_json())
            logger.info("Resuming from %s at step %d", resume_path, checkpoint.step)
            trainer = Trainer.from_checkpoint(checkpoint, cfg)
        else:
            trainer = Trainer(cfg)

        result = trainer.fit(out)
        logger.info("Training finished: %s", result.checkpoint_path)
        return result
