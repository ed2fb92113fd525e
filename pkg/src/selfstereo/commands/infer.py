from pathlib import Path
from typing import Dict, Optional

from selfstereo.autodiff.tensor import precision
from selfstereo.commands.abstract_command import Command
from selfstereo.commands.evaluate import PGM_DISPARITY_SCALE
from selfstereo.data.manifest import load_pfm_pair
from selfstereo.data.pfm import save_pfm, save_pgm16
from selfstereo.errors import ConfigError
from selfstereo.training.checkpoint import load_checkpoint
from selfstereo.training.trainer import network_from_checkpoint
from selfstereo.utils.filesystem import ensure_output_dir
from selfstereo.utils.logging import get_logger

logger = get_logger(__name__)


class Infer(Command):
    """Predict the disparity of one PFM pair and write it as PFM and 16-bit PGM."""

    def do(
        self,
        output_dir: str,
        checkpoint_path: str,
        left_path: str,
        right_path: str,
        stem: str = "disparity",
        expected_config: Optional[str] = None,
    ) -> Dict[str, str]:
        out = Path(ensure_output_dir(output_dir))
        cfg, network = network_from_checkpoint(load_checkpoint(checkpoint_path, expected_config=expected_config))
        pair = load_pfm_pair(left_path, right_path)
        if pair.left.shape[0] != cfg.channels:
            raise ConfigError(f"pair has {pair.left.shape[0]} channels, model expects {cfg.channels}")

        with precision(cfg.precision):
            pred = network.predict(pair.left, pair.right)
        paths = {
            "pfm": save_pfm(out / f"{stem}.pfm", pred),
            "pgm": save_pgm16(out / f"{stem}.pgm", pred, PGM_DISPARITY_SCALE),
        }
        logger.info("Wrote disparity %dx%d to %s", pred.shape[1], pred.shape[0], paths["pfm"])
        return paths
