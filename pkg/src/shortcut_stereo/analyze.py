"""Colour discrepancy between ground-truth stereo correspondences.

For every left pixel with valid disparity the right image is sampled at
``(x - d, y)`` and the mean absolute RGB difference is reported on the 0-255
scale. Synthetic pairs show near-zero discrepancy; photometric asymmetry
(real cameras, or asymmetric augmentation) pushes it up.
"""
from __future__ import annotations

import csv
import io as _io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .augment import AugmentConfig, asymmetric_chromatic_augment, sample_seed
from .core import DisparityMap, Histogram, StereoSample, bilinear_sample_rows
from .io import SampleManifest, load_sample

CDF_THRESHOLDS = (1, 2, 4, 8, 16)
PERCENTILES = (50, 90, 99)
REPORT_COLUMNS = ("label", "n_valid", "p50", "p90", "p99", "cdf1", "cdf2", "cdf4", "cdf8", "cdf16")
CONDITIONS = ("raw", "post_aca")


@dataclass(frozen=True)
class DiscrepancyMap:
    values: np.ndarray
    valid: np.ndarray
    n_occluded: int = 0
    n_out_of_bounds: int = 0

    @property
    def valid_values(self) -> np.ndarray:
        return self.values[self.valid]


@dataclass
class DiscrepancyReport:
    label: str
    n_valid: int
    histogram: Histogram
    cdf: dict[int, float] = field(default_factory=dict)
    percentiles: dict[int, float] = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return self.n_valid == 0

    def csv_row(self) -> dict:
        row = {"label": self.label, "n_valid": self.n_valid}
        for p in PERCENTILES:
            row[f"p{p}"] = "" if self.empty else _fmt(self.percentiles[p])
        for t in CDF_THRESHOLDS:
            row[f"cdf{t}"] = "" if self.empty else _fmt(self.cdf[t])
        return row


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def color_discrepancy_map(left: np.ndarray, right: np.ndarray, gt: DisparityMap,
                          occlusion: Optional[np.ndarray] = None) -> DiscrepancyMap:
    if left.shape != right.shape or left.shape[:2] != gt.shape:
        raise ValueError(f"shape mismatch: left {left.shape}, right {right.shape}, disparity {gt.shape}")
    h, w = gt.shape
    xs = np.arange(w, dtype=np.float64)[None, :] - np.where(gt.valid, gt.values, np.nan)
    sampled, inside = bilinear_sample_rows(right, xs)
    valid = gt.valid & inside
    n_occ = 0
    if occlusion is not None:
        occlusion = np.asarray(occlusion, dtype=bool)
        if occlusion.shape != gt.shape:
            raise ValueError(f"occlusion mask {occlusion.shape} does not match {gt.shape}")
        n_occ = int(np.count_nonzero(valid & occlusion))
        valid &= ~occlusion
    values = 255.0 * np.abs(left - sampled).mean(axis=2)
    values = np.where(valid, values, 0.0)
    return DiscrepancyMap(values, valid, n_occ, int(np.count_nonzero(gt.valid & ~inside)))


def _histogram(values: np.ndarray, bins: int, upper: float) -> Histogram:
    edges = np.linspace(0.0, upper, bins + 1)
    # overflow lands in the last bin
    counts, _ = np.histogram(np.minimum(values, upper), bins=edges)
    return Histogram(edges, counts, len(values))


def report_from_values(values: np.ndarray, label: str = "", bins: int = 64,
                       upper: float = 64.0) -> DiscrepancyReport:
    values = np.asarray(values, dtype=np.float64).ravel()
    hist = _histogram(values, bins, upper)
    if values.size == 0:
        return DiscrepancyReport(label, 0, hist)
    ordered = np.sort(values)
    n = ordered.size
    cdf = {t: float(np.searchsorted(ordered, t, side="right")) / n for t in CDF_THRESHOLDS}
    # order statistic: smallest value whose empirical CDF reaches q
    pct = {p: float(np.percentile(ordered, p, method="inverted_cdf")) for p in PERCENTILES}
    return DiscrepancyReport(label, n, hist, cdf, pct)


def discrepancy_report(dmap: DiscrepancyMap, bins: int = 64, upper: float = 64.0,
                       label: str = "") -> DiscrepancyReport:
    return report_from_values(dmap.valid_values, label, bins, upper)


def reports_csv(reports: list[DiscrepancyReport]) -> str:
    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in reports:
        writer.writerow(r.csv_row())
    return buf.getvalue()


@dataclass
class DatasetReport:
    samples: list[DiscrepancyReport]
    pooled: DiscrepancyReport
    failures: list[tuple[int, str]]
    condition: str

    @property
    def csv(self) -> str:
        return reports_csv(self.samples + [self.pooled])


def sample_discrepancy(sample: StereoSample, condition: str = "raw",
                       cfg: Optional[AugmentConfig] = None, seed: int = 0,
                       index: int = 0) -> DiscrepancyMap:
    if condition not in CONDITIONS:
        raise ValueError(f"unknown condition {condition!r}; expected one of {CONDITIONS}")
    if condition == "post_aca":
        sample, _, _ = asymmetric_chromatic_augment(sample, cfg or AugmentConfig(), sample_seed(seed, index))
    return color_discrepancy_map(sample.left, sample.right, sample.disparity, sample.occlusion)


def dataset_report(manifest: SampleManifest, condition: str = "raw",
                   cfg: Optional[AugmentConfig] = None, seed: int = 0,
                   bins: int = 64, upper: float = 64.0, label: str = "pooled",
                   jobs: int = 1) -> DatasetReport:
    """Per-sample and pooled discrepancy reports over a manifest.

    Samples that fail to load are listed in ``failures``; the rest are still
    processed. Pooled statistics are computed over the concatenation of all
    valid per-sample values.
    """
    if condition not in CONDITIONS:
        raise ValueError(f"unknown condition {condition!r}; expected one of {CONDITIONS}")
    failures = list(manifest.errors)

    def work(row):
        try:
            sample = load_sample(row)
            return row, sample_discrepancy(sample, condition, cfg, seed, row.index).valid_values, None
        except (OSError, ValueError) as exc:
            return row, None, f"row {row.index}: {exc}"

    results = _map_ordered(work, list(manifest.rows), jobs)
    reports, pooled_values = [], []
    for row, values, err in results:
        if err is not None:
            failures.append((row.index, err))
            continue
        reports.append(report_from_values(values, row.label, bins, upper))
        pooled_values.append(values)
    pooled = report_from_values(np.concatenate(pooled_values) if pooled_values else np.empty(0),
                                label, bins, upper)
    failures.sort()
    return DatasetReport(reports, pooled, failures, condition)


def _map_ordered(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def histogram_svg(hist: Histogram, title: str = "", width: int = 640, height: int = 320) -> str:
    """Render a histogram as a standalone SVG bar chart."""
    margin = 40
    plot_w, plot_h = width - 2 * margin, height - 2 * margin
    peak = max(int(hist.counts.max()) if hist.counts.size else 0, 1)
    bar_w = plot_w / max(len(hist.counts), 1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="{margin / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{_escape(title)}</text>',
    ]
    for i, c in enumerate(hist.counts):
        bh = plot_h * int(c) / peak
        parts.append(f'<rect x="{margin + i * bar_w:.2f}" y="{margin + plot_h - bh:.2f}" '
                     f'width="{max(bar_w - 1, 0.5):.2f}" height="{bh:.2f}" fill="steelblue"/>')
    base = margin + plot_h
    parts.append(f'<line x1="{margin}" y1="{base}" x2="{margin + plot_w}" y2="{base}" stroke="black"/>')
    for frac in (0.0, 0.5, 1.0):
        edge = hist.bin_edges[0] + frac * (hist.bin_edges[-1] - hist.bin_edges[0])
        parts.append(f'<text x="{margin + frac * plot_w:.1f}" y="{base + 16}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11">{edge:g}</text>')
    parts.append(f'<text x="{margin - 4}" y="{margin + 4}" text-anchor="end" '
                 f'font-family="sans-serif" font-size="11">{peak}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
