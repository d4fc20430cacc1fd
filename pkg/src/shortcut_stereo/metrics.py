"""D1 outlier rate and end-point error for (possibly sparse) disparity maps."""
from __future__ import annotations

import csv
import io as _io
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .core import DisparityMap

# per-dataset outlier thresholds in pixels
DATASET_THRESHOLDS = {"kitti": 3.0, "drivingstereo": 3.0, "middlebury": 2.0, "eth3d": 1.0}
EVAL_COLUMNS = ("sample_id", "n_valid", "d1_percent", "epe_mean", "threshold")


@dataclass(frozen=True)
class EvalResult:
    threshold: float
    n_valid: int
    n_outliers: int
    error_sum: float

    @property
    def empty(self) -> bool:
        return self.n_valid == 0

    @property
    def d1_percent(self) -> float:
        return 100.0 * self.n_outliers / self.n_valid if self.n_valid else float("nan")

    @property
    def epe_mean(self) -> float:
        return self.error_sum / self.n_valid if self.n_valid else float("nan")

    def __add__(self, other: "EvalResult") -> "EvalResult":
        if self.threshold != other.threshold:
            raise ValueError("cannot pool results evaluated at different thresholds")
        return EvalResult(self.threshold, self.n_valid + other.n_valid,
                          self.n_outliers + other.n_outliers, self.error_sum + other.error_sum)


def epe_map(pred: DisparityMap, gt: DisparityMap,
            mask: Optional[np.ndarray] = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel ``|pred - gt|`` and the joint validity mask.

    ``mask`` (e.g. non-occluded pixels) further restricts evaluation.
    Errors outside the mask are set to zero.
    """
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    valid = pred.valid & gt.valid
    if mask is not None:
        valid &= np.asarray(mask, dtype=bool)
    err = np.where(valid, np.abs(np.where(valid, pred.values, 0.0) - np.where(valid, gt.values, 0.0)), 0.0)
    return err, valid


def d1_rate(pred: DisparityMap, gt: DisparityMap, threshold: float = 3.0,
            mask: Optional[np.ndarray] = None, kitti_rule: bool = False) -> EvalResult:
    """Outliers are pixels with error strictly greater than ``threshold``.

    With ``kitti_rule`` a pixel must also exceed 5% of its ground-truth
    disparity, matching the official KITTI-2015 D1-all definition.
    """
    err, valid = epe_map(pred, gt, mask)
    e = err[valid]
    outlier = e > threshold
    if kitti_rule:
        outlier &= e > 0.05 * np.abs(gt.values[valid])
    return EvalResult(float(threshold), int(e.size), int(np.count_nonzero(outlier)), float(e.sum()))


def pooled(results: Iterable[EvalResult]) -> Optional[EvalResult]:
    """Pixel-pooled aggregate (sum of counts); ``None`` for no results."""
    total = None
    for r in results:
        total = r if total is None else total + r
    return total


def image_mean(results: Iterable[EvalResult]) -> tuple[float, float]:
    """Image-averaged ``(d1_percent, epe_mean)`` over non-empty results."""
    rs = [r for r in results if not r.empty]
    if not rs:
        return float("nan"), float("nan")
    return (float(np.mean([r.d1_percent for r in rs])),
            float(np.mean([r.epe_mean for r in rs])))


def eval_csv(rows: list[tuple[str, EvalResult]], include_aggregates: bool = True) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EVAL_COLUMNS)
    for sample_id, r in rows:
        writer.writerow(_csv_fields(sample_id, r.n_valid, r.d1_percent, r.epe_mean, r.threshold))
    results = [r for _, r in rows]
    if include_aggregates and results:
        p = pooled(results)
        writer.writerow(_csv_fields("pooled", p.n_valid, p.d1_percent, p.epe_mean, p.threshold))
        d1, epe = image_mean(results)
        writer.writerow(_csv_fields("image_mean", sum(not r.empty for r in results), d1, epe, p.threshold))
    return buf.getvalue()


def _csv_fields(sample_id, n_valid, d1, epe, threshold):
    def num(v):
        return "" if v != v else f"{v:.6f}"
    return [sample_id, n_valid, num(d1), num(epe), f"{threshold:g}"]
