"""Winner-take-all block matchers used to probe the colour-hint shortcut.

``sad_rgb`` compares raw RGB values and so profits from identical
correspondence colours; ``census`` compares local intensity orderings and is
blind to monotone photometric changes. Neither aggregates beyond its support
window nor regularizes, so any change in accuracy is due to photometry alone.
"""
from __future__ import annotations

import csv
import io as _io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .augment import AugmentConfig, asymmetric_chromatic_augment, sample_seed
from .core import DisparityMap, StereoSample, to_grayscale
from .datagen import generate, random_scene, derive_seed
from .metrics import EvalResult, d1_rate, pooled

METHODS = ("sad_rgb", "census")
# mid-contrast dots: at full range, 7x7 RGB windows stay distinctive under most
# brightness ratios and the raw-colour cue is hard to isolate
EXPERIMENT_TEXTURE_RANGE = (0.25, 0.75)


@dataclass(frozen=True)
class MatchConfig:
    max_disparity: int = 192
    window_radius: int = 3
    method: str = "sad_rgb"

    def __post_init__(self):
        if self.max_disparity < 1:
            raise ValueError("max_disparity must be >= 1")
        if self.window_radius < 1:
            raise ValueError("window_radius must be >= 1")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")


def box_sum(cost: np.ndarray, r: int) -> np.ndarray:
    """Sum over the ``(2r+1)^2`` window, truncated at the raster border.

    Plain shifted additions rather than an integral image: a window of exact
    zeros must sum to exactly zero.
    """
    h, w = cost.shape
    padded = np.zeros((h, w + 2 * r), dtype=cost.dtype)
    padded[:, r:r + w] = cost
    rows = padded[:, 0:w].copy()
    for k in range(1, 2 * r + 1):
        rows += padded[:, k:k + w]
    padded = np.zeros((h + 2 * r, w), dtype=cost.dtype)
    padded[r:r + h] = rows
    out = padded[0:h].copy()
    for k in range(1, 2 * r + 1):
        out += padded[k:k + h]
    return out


def census_transform(gray: np.ndarray, r: int) -> np.ndarray:
    """Bit ``k`` is set when neighbour ``k`` is darker than the centre.

    The border is edge-replicated. At most 63 neighbours fit (``r <= 3``).
    """
    side = 2 * r + 1
    if side * side - 1 > 64:
        raise ValueError(f"census window radius {r} needs more than 64 bits")
    h, w = gray.shape
    padded = np.pad(gray, r, mode="edge")
    desc = np.zeros((h, w), dtype=np.uint64)
    bit = 0
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if dx == 0 and dy == 0:
                continue
            neighbour = padded[r + dy:r + dy + h, r + dx:r + dx + w]
            desc |= (neighbour < gray).astype(np.uint64) << np.uint64(bit)
            bit += 1
    return desc


def _wta(pixel_cost, h: int, w: int, cfg: MatchConfig) -> DisparityMap:
    r = cfg.window_radius
    best = np.full((h, w), np.inf, dtype=np.float32)
    best_d = np.zeros((h, w))
    for d in range(0, min(cfg.max_disparity, w - 1 - r) + 1):
        # columns left of d carry no cost; zero padding in box_sum stands in for them
        agg = box_sum(np.asarray(pixel_cost(d), dtype=np.float32), r)
        # right window must not cross the left border: x >= d + r
        agg[:, :r] = np.inf
        view, dview = best[:, d:], best_d[:, d:]
        # strict improvement keeps ties at the smaller disparity
        better = agg < view
        view[better] = agg[better]
        dview[better] = d
    return DisparityMap(best_d, np.isfinite(best))


def _check(left: np.ndarray, right: np.ndarray) -> None:
    if left.shape != right.shape:
        raise ValueError(f"left {left.shape} and right {right.shape} differ in shape")


def sad_match(left: np.ndarray, right: np.ndarray, cfg: MatchConfig = MatchConfig()) -> DisparityMap:
    """Winner-take-all over the window sum of absolute RGB differences."""
    _check(left, right)
    h, w = left.shape[:2]
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    return _wta(lambda d: np.abs(left[:, d:] - right[:, :w - d]).sum(axis=2), h, w, cfg)


def census_match(left: np.ndarray, right: np.ndarray, cfg: MatchConfig = MatchConfig()) -> DisparityMap:
    """Winner-take-all over window-aggregated Hamming distances of census descriptors."""
    _check(left, right)
    h, w = left.shape[:2]
    r = cfg.window_radius
    cl = census_transform(to_grayscale(left), r)
    cr = census_transform(to_grayscale(right), r)
    return _wta(lambda d: np.bitwise_count(cl[:, d:] ^ cr[:, :w - d]), h, w, cfg)


def match(left: np.ndarray, right: np.ndarray, cfg: MatchConfig = MatchConfig()) -> DisparityMap:
    return (sad_match if cfg.method == "sad_rgb" else census_match)(left, right, cfg)


def evaluation_mask(sample: StereoSample, window_radius: int) -> np.ndarray:
    """Valid, non-occluded pixels whose true match has a full-width support window."""
    gt = sample.disparity
    cols = np.arange(sample.width)[None, :]
    mask = gt.valid & (cols - np.where(gt.valid, gt.values, 0) - window_radius >= 0)
    if sample.occlusion is not None:
        mask &= ~sample.occlusion
    return mask


# ------------------------------------------------------------------ experiment

@dataclass
class SusceptibilityResult:
    clean: dict[str, EvalResult]
    perturbed: dict[str, EvalResult]
    threshold: float = 3.0
    predictions: dict = field(default_factory=dict, repr=False)

    @property
    def d1_clean(self) -> dict[str, float]:
        return {m: r.d1_percent for m, r in self.clean.items()}

    @property
    def d1_perturbed(self) -> dict[str, float]:
        return {m: r.d1_percent for m, r in self.perturbed.items()}

    @property
    def degradation(self) -> dict[str, float]:
        return {m: self.perturbed[m].d1_percent - self.clean[m].d1_percent for m in self.clean}

    @property
    def ordering_holds(self) -> bool:
        deg = self.degradation
        return deg["sad_rgb"] > deg["census"]

    def csv(self) -> str:
        buf = _io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", "condition", "d1_percent", "epe_mean", "n_valid"])
        for condition, results in (("clean", self.clean), ("post_aca", self.perturbed)):
            for method, r in results.items():
                writer.writerow([method, condition, f"{r.d1_percent:.6f}", f"{r.epe_mean:.6f}", r.n_valid])
        for method, deg in self.degradation.items():
            writer.writerow([method, "degradation", f"{deg:.6f}", "", ""])
        return buf.getvalue()


def susceptibility_samples(seed: int, n: int, width: int = 512, height: int = 256,
                           texture: str = "random_rgb",
                           texture_range: tuple[float, float] = EXPERIMENT_TEXTURE_RANGE) -> list[StereoSample]:
    return [generate(random_scene(width, height, np.random.default_rng(derive_seed(seed, i)),
                                  texture=texture, texture_range=texture_range))
            for i in range(n)]


def shortcut_susceptibility_experiment(seed: int = 0, cfg: Optional[MatchConfig] = None,
                                       aca_cfg: Optional[AugmentConfig] = None, n_samples: int = 20,
                                       width: int = 512, height: int = 256, threshold: float = 3.0,
                                       keep_predictions: bool = False,
                                       samples: Optional[list[StereoSample]] = None,
                                       texture_range: tuple[float, float] = EXPERIMENT_TEXTURE_RANGE,
                                       ) -> SusceptibilityResult:
    """D1 of both matchers on clean random-dot pairs and on the same pairs after ACA.

    Results are pixel-pooled over all samples. Only non-occluded pixels with
    an in-frame, full-window correspondence are scored.
    """
    cfg = cfg or MatchConfig()
    aca_cfg = aca_cfg or AugmentConfig()
    if samples is None:
        samples = susceptibility_samples(seed, n_samples, width, height, texture_range=texture_range)
    per = {cond: {m: [] for m in METHODS} for cond in ("clean", "post_aca")}
    predictions = {}
    for i, sample in enumerate(samples):
        mask = evaluation_mask(sample, cfg.window_radius)
        perturbed, _, _ = asymmetric_chromatic_augment(sample, aca_cfg, sample_seed(seed, i))
        for cond, pair in (("clean", sample), ("post_aca", perturbed)):
            for method in METHODS:
                pred = match(pair.left, pair.right, MatchConfig(cfg.max_disparity, cfg.window_radius, method))
                per[cond][method].append(d1_rate(pred, sample.disparity, threshold, mask=mask))
                if keep_predictions:
                    predictions[(i, cond, method)] = pred
    return SusceptibilityResult(
        clean={m: pooled(per["clean"][m]) for m in METHODS},
        perturbed={m: pooled(per["post_aca"][m]) for m in METHODS},
        threshold=threshold,
        predictions=predictions,
    )
