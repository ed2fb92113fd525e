from pathlib import Path
from typing import Optional

import numpy as np

from selfstereo.autodiff.tensor import precision
from selfstereo.commands.abstract_command import Command
from selfstereo.data.manifest import read_manifest
from selfstereo.data.pfm import save_pfm, save_pgm16
from selfstereo.errors import ConfigError
from selfstereo.metrics import METRICS_NAME, EvalReport, sample_metrics
from selfstereo.training.checkpoint import load_checkpoint
from selfstereo.training.trainer import network_from_checkpoint
from selfstereo.utils.filesystem import ensure_output_dir
from selfstereo.utils.logging import get_logger

logger = get_logger(__name__)

# KITTI convention for 16-bit disparity PNG/PGM
PGM_DISPARITY_SCALE = 256.0


class Evaluate(Command):
    """Standard-branch inference over a manifest, scored on all and non-occluded pixels."""

    def do(
        self,
        output_dir: str,
        checkpoint_path: str,
        manifest_path: str,
        right_brightness: float = 1.0,
        d1_mode: str = "and",
        export: bool = False,
        expected_config: Optional[str] = None,
    ) -> EvalReport:
        if right_brightness <= 0:
            raise ValueError(f"right_brightness must be positive, got {right_brightness}")
        out = Path(ensure_output_dir(output_dir))
        checkpoint = load_checkpoint(checkpoint_path, expected_config=expected_config)
        cfg, network = network_from_checkpoint(checkpoint)
        manifest = read_manifest(manifest_path)
        if manifest.channels != cfg.channels:
            raise ConfigError(f"manifest has {manifest.channels} channels, model expects {cfg.channels}")
        cfg.model.check_image(manifest.height, manifest.width)

        report = EvalReport(d1_mode=d1_mode)
        with precision(cfg.precision):
            for index, sample in enumerate(manifest.samples()):
                right = sample.right
                if right_brightness != 1.0:
                    right = np.clip(right * right_brightness, 0.0, 1.0).astype(right.dtype)
                pred = network.predict(sample.left, right)
                name = f"{index:04d}"
                report.samples.append(
                    sample_metrics(name, pred, sample.gt_disparity, sample.gt_occlusion.astype(bool), d1_mode)
                )
                if export:
                    save_pfm(out / f"{name}_disparity.pfm", pred)
                    save_pgm16(out / f"{name}_disparity.pgm", pred, PGM_DISPARITY_SCALE)
                    save_pfm(out / f"{name}_error.pfm", np.abs(pred - sample.gt_disparity))
                logger.debug("Sample %s: EPE %.4f", name, report.samples[-1].epe_all)

        path = report.write_csv(out / METRICS_NAME)
        mean = report.mean()
        logger.info(
            "Evaluated %d samples: EPE all %.4f noc %.4f D1 %.4f", report.count, mean.epe_all, mean.epe_noc, mean.d1
        )
        logger.info("Wrote %s", path)
        return report
