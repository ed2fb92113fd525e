from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from selfstereo.autodiff.tensor import no_grad, precision
from selfstereo.commands.abstract_command import Command
from selfstereo.commands.evaluate import PGM_DISPARITY_SCALE
from selfstereo.data.manifest import read_manifest
from selfstereo.data.pfm import save_pgm16
from selfstereo.metrics import epe
from selfstereo.model.cost_volume import DisparityMap, wta_disparity
from selfstereo.model.network import StereoNetwork
from selfstereo.training.checkpoint import load_checkpoint
from selfstereo.training.trainer import CONTRAST_STRIDE, network_from_checkpoint
from selfstereo.utils.filesystem import ensure_output_dir, write_csv
from selfstereo.utils.logging import get_logger

logger = get_logger(__name__)

WTA_NAME = "wta.csv"
WTA_HEADER = ("sample", "epe_trained", "epe_random")


@dataclass
class WtaReport:
    rows: List[Dict[str, object]] = field(default_factory=list)

    def mean(self, column: str) -> float:
        return float(np.mean([row[column] for row in self.rows]))


def wta_map(network: StereoNetwork, left: np.ndarray, right: np.ndarray, d_max: int) -> np.ndarray:
    """Winner-take-all disparity of the stride-4 features, upsampled to full resolution."""
    with no_grad():
        features_left, features_right = network.extract_features(left, right)
        stride = CONTRAST_STRIDE
        coarse = wta_disparity(features_left[stride], features_right[stride], d_max // stride)
        full = DisparityMap(coarse.values, stride).full_resolution(*left.shape[1:])
    return np.array(full.values)


class Wta(Command):
    """Compare WTA maps from trained features with those from a freshly initialised network."""

    def do(
        self,
        output_dir: str,
        checkpoint_path: str,
        manifest_path: str,
        limit: Optional[int] = None,
        baseline_seed: int = 1,
        export: bool = False,
    ) -> WtaReport:
        out = Path(ensure_output_dir(output_dir))
        cfg, trained = network_from_checkpoint(load_checkpoint(checkpoint_path))
        manifest = read_manifest(manifest_path)
        cfg.model.check_image(manifest.height, manifest.width)

        report = WtaReport()
        with precision(cfg.precision):
            baseline = StereoNetwork(cfg.model, seed=baseline_seed)
            for index, sample in enumerate(manifest.samples()):
                if limit is not None and index >= limit:
                    break
                name = f"{index:04d}"
                maps = {
                    "trained": wta_map(trained, sample.left, sample.right, cfg.d_max),
                    "random": wta_map(baseline, sample.left, sample.right, cfg.d_max),
                }
                report.rows.append(
                    {"sample": name, **{f"epe_{k}": epe(v, sample.gt_disparity) for k, v in maps.items()}}
                )
                if export:
                    for kind, values in maps.items():
                        save_pgm16(out / f"{name}_wta_{kind}.pgm", values, PGM_DISPARITY_SCALE)

        if not report.rows:
            raise ValueError("wta: no samples selected")
        mean_row = {"sample": "mean", **{c: report.mean(c) for c in WTA_HEADER[1:]}}
        path = write_csv(out / WTA_NAME, WTA_HEADER, report.rows + [mean_row])
        logger.info(
            "WTA EPE over %d samples: trained %.4f, random %.4f (%s)",
            len(report.rows),
            mean_row["epe_trained"],
            mean_row["epe_random"],
            path,
        )
        return report
