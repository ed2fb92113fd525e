"""Disparity error metrics and evaluation reports."""
from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from rich.table import Table

from selfstereo.errors import ShapeError
from selfstereo.utils.filesystem import write_csv

METRICS_NAME = "metrics.csv"
METRICS_HEADER = ("sample", "epe_all", "epe_noc", "bad1", "bad2", "bad3", "d1")
BAD_THRESHOLDS = (1.0, 2.0, 3.0)
D1_MODES = ("and", "or")
D1_ABSOLUTE = 3.0
D1_RELATIVE = 0.05


def _errors(
    pred: np.ndarray, gt: np.ndarray, mask: Optional[np.ndarray], name: str
) -> Tuple[np.ndarray, np.ndarray]:
    """Absolute errors and ground truth on the selected pixels with finite ground truth."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"{name}: prediction {pred.shape} and ground truth {gt.shape} differ")
    selected = np.isfinite(gt)
    if mask is not None:
        mask = np.asarray(mask)
        if mask.shape != gt.shape:
            raise ShapeError(f"{name}: mask {mask.shape} does not match disparity {gt.shape}")
        selected &= mask.astype(bool)
    if not selected.any():
        raise ValueError(f"{name}: mask selects no pixels")
    return np.abs(pred[selected] - gt[selected]), gt[selected]


def epe(pred: np.ndarray, gt: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
    """Mean absolute disparity error over the masked pixels."""
    err, _ = _errors(pred, gt, mask, "epe")
    return float(err.mean())


def bad_t(pred: np.ndarray, gt: np.ndarray, mask: Optional[np.ndarray] = None, t: float = 3.0) -> float:
    """Fraction of masked pixels whose error is strictly above ``t``."""
    if t <= 0:
        raise ValueError(f"bad_t: threshold must be positive, got {t}")
    err, _ = _errors(pred, gt, mask, "bad_t")
    return float((err > t).mean())


def d1_rate(pred: np.ndarray, gt: np.ndarray, mask: Optional[np.ndarray] = None, mode: str = "and") -> float:
    """Outlier rate with an absolute 3 px and a relative 5 % threshold.

    ``and`` flags a pixel only when both thresholds are exceeded (KITTI); ``or``
    flags it when either one is.
    """
    if mode not in D1_MODES:
        raise ValueError(f"d1_rate: mode must be one of {D1_MODES}, got {mode!r}")
    err, gt_sel = _errors(pred, gt, mask, "d1_rate")
    absolute = err > D1_ABSOLUTE
    relative = err > D1_RELATIVE * np.abs(gt_sel)
    outliers = absolute & relative if mode == "and" else absolute | relative
    return float(outliers.mean())


@dataclass
class SampleMetrics:
    sample: str
    epe_all: float
    epe_noc: float
    bad1: float
    bad2: float
    bad3: float
    d1: float

    def row(self) -> Dict[str, object]:
        return asdict(self)


def sample_metrics(
    sample: str,
    pred: np.ndarray,
    gt: np.ndarray,
    noc_mask: Optional[np.ndarray] = None,
    d1_mode: str = "and",
) -> SampleMetrics:
    """Every metric for one prediction; rates are on all pixels, EPE on all and non-occluded ones."""
    bad1, bad2, bad3 = (bad_t(pred, gt, None, t) for t in BAD_THRESHOLDS)
    return SampleMetrics(
        sample=sample,
        epe_all=epe(pred, gt),
        epe_noc=epe(pred, gt, noc_mask) if noc_mask is not None else math.nan,
        bad1=bad1,
        bad2=bad2,
        bad3=bad3,
        d1=d1_rate(pred, gt, None, d1_mode),
    )


@dataclass
class EvalReport:
    samples: List[SampleMetrics] = field(default_factory=list)
    d1_mode: str = "and"

    @property
    def count(self) -> int:
        return len(self.samples)

    @property
    def masks(self) -> Tuple[str, ...]:
        if any(not math.isnan(s.epe_noc) for s in self.samples):
            return ("all", "noc")
        return ("all",)

    def mean(self) -> SampleMetrics:
        """Per-column mean of the sample rows; a column with no finite values is NaN."""
        if not self.samples:
            raise ValueError("EvalReport.mean: report has no samples")
        columns = {}
        for name in METRICS_HEADER[1:]:
            values = np.array([getattr(s, name) for s in self.samples], dtype=np.float64)
            finite = values[~np.isnan(values)]
            columns[name] = float(finite.mean()) if finite.size else math.nan
        return SampleMetrics(sample="mean", **columns)

    def rows(self) -> List[Dict[str, object]]:
        return [s.row() for s in self.samples] + [self.mean().row()]

    def write_csv(self, path: str | os.PathLike[str]) -> str:
        return write_csv(path, METRICS_HEADER, self.rows())

    def to_table(self) -> Table:
        caption = "D1: error > 3 px and > 5 % of gt" if self.d1_mode == "and" else "D1: error > 3 px or > 5 % of gt"
        table = Table(title=f"Evaluation over {self.count} samples", caption=caption)
        for name in METRICS_HEADER:
            table.add_column(name, justify="left" if name == "sample" else "right")
        for row in self.rows():
            table.add_row(*(_format(row[name]) for name in METRICS_HEADER))
        return table


def _format(value: object) -> str:
    if isinstance(value, float):
        return "-" if math.isnan(value) else f"{value:.4f}"
    return str(value)
