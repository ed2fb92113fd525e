"""Dataset manifests: the seeds and geometry that regenerate a synthetic set."""
from __future__ import annotations

import os
from pathlib import Path
from typing import Dict, Iterator, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from selfstereo.data.pfm import load_pfm, save_pfm, save_pgm16
from selfstereo.data.synth import StereoSample, generate_sample
from selfstereo.errors import ConfigError
from selfstereo.utils.filesystem import atomic_write_bytes, ensure_output_dir
from selfstereo.utils.keyvalue import dump_keyvalue, load_keyvalue
from selfstereo.utils.logging import get_logger

logger = get_logger(__name__)

MANIFEST_NAME = "manifest.txt"
_SPLITS = {"train": 0, "eval": 1}


class DatasetManifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    root: str
    count: int = Field(ge=1)
    height: int = Field(ge=1)
    width: int = Field(ge=2)
    channels: int = Field(3, ge=1)
    d_max: int = Field(ge=2)
    seeds: List[int]

    @model_validator(mode="after")
    def _consistent(self) -> "DatasetManifest":
        if len(self.seeds) != self.count:
            raise ValueError(f"manifest lists {len(self.seeds)} seeds for count {self.count}")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("manifest seeds must be pairwise distinct")
        if self.d_max >= self.width / 2:
            raise ValueError(f"d_max {self.d_max} must be below width/2 ({self.width / 2})")
        return self

    def samples(self) -> Iterator[StereoSample]:
        for seed in self.seeds:
            yield generate_sample(seed, self.height, self.width, self.d_max, self.channels)


def derive_seeds(seed: int, count: int, split: str = "train") -> List[int]:
    """Distinct per-sample seeds; different splits of one base seed never share a stream."""
    if split not in _SPLITS:
        raise ValueError(f"unknown split {split!r}, expected one of {sorted(_SPLITS)}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, _SPLITS[split]]))
    return [int(s) for s in rng.choice(2**31 - 1, size=count, replace=False)]


def build_manifest(
    root: str | os.PathLike[str],
    count: int,
    height: int,
    width: int,
    d_max: int,
    seed: int,
    *,
    channels: int = 3,
    split: str = "train",
) -> DatasetManifest:
    try:
        return DatasetManifest(
            root=str(root),
            count=count,
            height=height,
            width=width,
            channels=channels,
            d_max=d_max,
            seeds=derive_seeds(seed, count, split),
        )
    except ValidationError as exc:
        raise ConfigError(f"invalid dataset geometry: {exc}") from exc


def write_manifest(manifest: DatasetManifest, path: Optional[str | os.PathLike[str]] = None) -> str:
    target = Path(path) if path is not None else Path(manifest.root) / MANIFEST_NAME
    text = dump_keyvalue(manifest.model_dump())
    return atomic_write_bytes(target, text.encode("utf-8"))


def read_manifest(path: str | os.PathLike[str]) -> DatasetManifest:
    p = Path(path)
    if p.is_dir():
        p = p / MANIFEST_NAME
    raw = load_keyvalue(p)
    seeds = raw.get("seeds", [])
    if isinstance(seeds, str):
        raw["seeds"] = [seeds]
    try:
        return DatasetManifest.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"invalid manifest {p}: {exc}") from exc


def dump_sample(sample: StereoSample, output_dir: str | os.PathLike[str], stem: str) -> Dict[str, str]:
    """Write left/right/disparity PFMs and an occlusion PGM for one sample."""
    out = Path(ensure_output_dir(output_dir))
    paths = {
        "left": save_pfm(out / f"{stem}_left.pfm", _as_pfm_image(sample.left)),
        "right": save_pfm(out / f"{stem}_right.pfm", _as_pfm_image(sample.right)),
        "disparity": save_pfm(out / f"{stem}_disparity.pfm", sample.gt_disparity),
        "occlusion": save_pgm16(out / f"{stem}_occlusion.pgm", sample.gt_occlusion.astype(np.float64), 65535.0),
    }
    logger.debug("Dumped sample %s to %s", stem, out)
    return paths


def _as_pfm_image(image: np.ndarray) -> np.ndarray:
    if image.shape[0] == 3:
        return image
    if image.shape[0] == 1:
        return image[0]
    raise ValueError(f"PFM export supports 1 or 3 channels, got {image.shape[0]}")


def load_pfm_pair(
    left_path: str | os.PathLike[str],
    right_path: str | os.PathLike[str],
    disparity_path: Optional[str | os.PathLike[str]] = None,
) -> StereoSample:
    """Load a real stereo pair stored as PFM; missing ground truth becomes zeros."""
    left = load_pfm(left_path)
    right = load_pfm(right_path)
    if left.ndim == 2:
        left, right = left[None], right[None]
    if left.shape != right.shape:
        raise ValueError(f"left {left.shape} and right {right.shape} images differ in shape")
    h, w = left.shape[1:]
    gt = load_pfm(disparity_path) if disparity_path is not None else np.zeros((h, w), dtype=np.float32)
    return StereoSample(
        left=left,
        right=right,
        gt_disparity=gt,
        gt_occlusion=np.ones((h, w), dtype=bool),
        seed=-1,
    )
