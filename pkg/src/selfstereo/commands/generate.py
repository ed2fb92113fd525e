from pathlib import Path
from typing import Optional

from selfstereo.commands.abstract_command import Command
from selfstereo.data.manifest import DatasetManifest, build_manifest, dump_sample, write_manifest
from selfstereo.utils.filesystem import ensure_output_dir
from selfstereo.utils.logging import get_logger

logger = get_logger(__name__)


class Generate(Command):
    """Write a dataset manifest and, optionally, every sample as PFM/PGM files."""

    def do(
        self,
        output_dir: str,
        count: int,
        height: int,
        width: int,
        d_max: int,
        seed: int,
        channels: int = 3,
        split: str = "train",
        dump: bool = False,
        limit: Optional[int] = None,
    ) -> DatasetManifest:
        out = Path(ensure_output_dir(output_dir))
        manifest = build_manifest(out, count, height, width, d_max, seed, channels=channels, split=split)
        path = write_manifest(manifest)
        logger.info("Wrote %s manifest with %d samples to %s", split, count, path)

        if dump:
            for index, sample in enumerate(manifest.samples()):
                if limit is not None and index >= limit:
                    break
                dump_sample(sample, out / "samples", f"{index:04d}")
            logger.info("Dumped samples to %s", out / "samples")
        return manifest
