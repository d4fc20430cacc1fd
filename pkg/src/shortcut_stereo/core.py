"""Shared raster types and elementary operations.

Images are plain ``numpy`` arrays of shape ``(H, W, 3)`` holding float64
intensities in ``[0, 1]``. Disparity maps carry an explicit validity mask so
sparse ground truth (KITTI) and dense ground truth (PFM) share one type.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def as_image(data, check_range: bool = True) -> np.ndarray:
    """Validate and convert ``data`` to an ``(H, W, 3)`` float64 image."""
    img = np.asarray(data, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"image dimensions must be positive, got {img.shape[:2]}")
    if check_range and img.size and (np.nanmin(img) < 0.0 or np.nanmax(img) > 1.0
                                     or not np.all(np.isfinite(img))):
        raise ValueError("image intensities must be finite and inside [0, 1]")
    return img


@dataclass(frozen=True)
class DisparityMap:
    """Left-view disparity: left pixel ``(x, y)`` matches right ``(x - d, y)``."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if values.ndim != 2 or values.shape != valid.shape:
            raise ValueError(
                f"disparity values {values.shape} and mask {valid.shape} must be equal 2-D shapes")
        # non-finite or negative entries can never be valid
        valid = valid & np.isfinite(values) & (values >= 0)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @classmethod
    def dense(cls, values) -> "DisparityMap":
        values = np.asarray(values, dtype=np.float64)
        return cls(values, np.ones(values.shape, dtype=bool))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def crop(self, x0: int, y0: int, w: int, h: int) -> "DisparityMap":
        return DisparityMap(self.values[y0:y0 + h, x0:x0 + w].copy(),
                            self.valid[y0:y0 + h, x0:x0 + w].copy())


@dataclass(frozen=True)
class StereoSample:
    left: np.ndarray
    right: np.ndarray
    disparity: DisparityMap
    occlusion: Optional[np.ndarray] = None

    def __post_init__(self):
        left = as_image(self.left)
        right = as_image(self.right)
        if left.shape != right.shape or left.shape[:2] != self.disparity.shape:
            raise ValueError(
                f"left {left.shape[:2]}, right {right.shape[:2]} and disparity "
                f"{self.disparity.shape} must share dimensions")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        if self.occlusion is not None:
            occ = np.asarray(self.occlusion, dtype=bool)
            if occ.shape != self.disparity.shape:
                raise ValueError(f"occlusion mask shape {occ.shape} does not match {self.disparity.shape}")
            object.__setattr__(self, "occlusion", occ)

    @property
    def height(self) -> int:
        return self.left.shape[0]

    @property
    def width(self) -> int:
        return self.left.shape[1]

    def replace(self, **changes) -> "StereoSample":
        fields = dict(left=self.left, right=self.right,
                      disparity=self.disparity, occlusion=self.occlusion)
        fields.update(changes)
        return StereoSample(**fields)


@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    total: int

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=np.float64)
        counts = np.asarray(self.counts, dtype=np.int64)
        if edges.ndim != 1 or len(edges) != len(counts) + 1:
            raise ValueError("histogram needs len(bin_edges) == len(counts) + 1")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("histogram edges must be strictly ascending")
        if np.any(counts < 0) or int(counts.sum()) != int(self.total):
            raise ValueError("histogram counts must be non-negative and sum to total")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "total", int(self.total))

    def merge(self, other: "Histogram") -> "Histogram":
        if not np.array_equal(self.bin_edges, other.bin_edges):
            raise ValueError("cannot merge histograms with different bin edges")
        return Histogram(self.bin_edges, self.counts + other.counts, self.total + other.total)


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Rec.601 luma, ``0.299 R + 0.587 G + 0.114 B``, shape ``(H, W)``."""
    img = np.asarray(img, dtype=np.float64)
    # explicit sum keeps equal-channel inputs exact up to rounding of the weights
    return img[..., 0] * 0.299 + img[..., 1] * 0.587 + img[..., 2] * 0.114


def bilinear_sample(img: np.ndarray, x: float, y: float) -> Optional[np.ndarray]:
    """Sample ``img`` at subpixel ``(x, y)``.

    Returns ``None`` when the interpolation support does not lie inside the
    raster, i.e. unless ``0 <= x <= W - 1`` and ``0 <= y <= H - 1``.
    """
    h, w = img.shape[:2]
    if not (np.isfinite(x) and np.isfinite(y)):
        return None
    if x < 0 or y < 0 or x > w - 1 or y > h - 1:
        return None
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    fx, fy = x - x0, y - y0
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx if fx else img[y0, x0]
    bottom = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx if fx else img[y1, x0]
    return np.array(top * (1.0 - fy) + bottom * fy if fy else top, dtype=np.float64)


def bilinear_sample_rows(img: np.ndarray, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised horizontal bilinear lookup: pixel ``(x, y)`` reads ``img`` at ``(xs[y, x], y)``.

    Returns the sampled ``(H, W, C)`` values and an in-bounds mask. Lookups
    outside ``[0, W - 1]`` (or non-finite) are flagged and carry zeros.
    """
    h, w = img.shape[:2]
    xs = np.asarray(xs, dtype=np.float64)
    inside = np.isfinite(xs) & (xs >= 0) & (xs <= w - 1)
    xs_safe = np.where(inside, xs, 0.0)
    x0 = np.floor(xs_safe).astype(np.int64)
    fx = xs_safe - x0
    x1 = np.minimum(x0 + 1, w - 1)
    rows = np.arange(h)[:, None]
    a = img[rows, x0]
    b = img[rows, x1]
    frac = fx[..., None]
    # exact copy where fx == 0 so integer shifts reproduce source bits
    out = np.where(frac == 0.0, a, a * (1.0 - frac) + b * frac)
    out[~inside] = 0.0
    return out, inside
