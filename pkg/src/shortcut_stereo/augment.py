"""Asymmetric stereo augmentations and the training-sample pipeline.

Two augmentations break the cross-view colour identity of synthetic stereo
pairs:

* asymmetric chromatic augmentation (ACA): brightness, contrast and
  saturation drawn independently for each eye;
* asymmetric random patching (ARP): colour-shifted, noisy rectangles pasted
  into exactly one eye.

They are combined with synchronized random cropping and per-channel
normalization by :func:`build_training_sample`, whose randomness is a pure
function of ``(master_seed, sample_index)``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from .core import DisparityMap, StereoSample, to_grayscale

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

# independent substreams of a sample's seed sequence
_STREAM_CROP, _STREAM_ACA_LEFT, _STREAM_ACA_RIGHT, _STREAM_ARP = range(4)


@dataclass(frozen=True)
class ChromaticParams:
    brightness: float = 1.0
    contrast: float = 1.0
    saturation: float = 1.0


@dataclass(frozen=True)
class PatchSpec:
    x: int
    y: int
    w: int
    h: int
    color_shift: tuple[float, float, float]
    noise_seed: int


@dataclass
class AugmentConfig:
    brightness_range: tuple[float, float] = (0.4, 2.0)
    contrast_range: tuple[float, float] = (0.5, 1.5)
    saturation_range: tuple[float, float] = (0.5, 1.5)
    patch_prob: float = 0.5
    patch_count_range: tuple[int, int] = (2, 4)
    patch_size_range: tuple[int, int] = (50, 100)
    noise_sigma: float = 0.1
    color_shift_range: tuple[float, float] = (-0.5, 0.5)
    crop_h: int = 256
    crop_w: int = 512
    norm_mean: tuple[float, float, float] = IMAGENET_MEAN
    norm_std: tuple[float, float, float] = IMAGENET_STD
    master_seed: int = 0
    aca_enabled: bool = True
    arp_enabled: bool = True
    crop_enabled: bool = True

    def __post_init__(self):
        for name in ("brightness_range", "contrast_range", "saturation_range",
                     "color_shift_range", "patch_count_range", "patch_size_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} is empty: [{lo}, {hi}]")
            setattr(self, name, (lo, hi))
        if self.patch_count_range[0] < 0 or self.patch_size_range[0] < 1:
            raise ValueError("patch counts must be >= 0 and patch sizes >= 1")
        if not 0.0 <= self.patch_prob <= 1.0:
            raise ValueError(f"patch_prob must lie in [0, 1], got {self.patch_prob}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.crop_h < 1 or self.crop_w < 1:
            raise ValueError("crop dimensions must be positive")
        if len(self.norm_mean) != 3 or len(self.norm_std) != 3:
            raise ValueError("norm_mean and norm_std need three channels")
        if min(self.norm_std) <= 0:
            raise ValueError("norm_std components must be > 0")
        self.norm_mean = tuple(float(v) for v in self.norm_mean)
        self.norm_std = tuple(float(v) for v in self.norm_std)

    # flat ``key = value`` text, one entry per line; ranges as ``lo, hi``
    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ", ".join(repr(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            else:
                value = repr(value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, base: Optional["AugmentConfig"] = None) -> "AugmentConfig":
        return (base or cls()).updated(parse_kv_text(text))

    def updated(self, overrides: dict) -> "AugmentConfig":
        """Return a copy with ``overrides`` (strings or typed values) applied."""
        known = {f.name: f for f in fields(self)}
        values = asdict(self)
        for key, raw in overrides.items():
            if key not in known:
                raise KeyError(f"unknown augmentation option {key!r}")
            values[key] = _coerce(getattr(self, key), raw, key)
        return AugmentConfig(**values)


def parse_kv_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _coerce(default, raw, key):
    if not isinstance(raw, str):
        return tuple(raw) if isinstance(default, tuple) else raw
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(default, tuple):
        parts = [p.strip() for p in raw.strip("()[] ").split(",") if p.strip()]
        if len(parts) != len(default):
            raise ValueError(f"{key}: expected {len(default)} comma-separated values, got {raw!r}")
        return tuple(type(d)(float(p)) if isinstance(d, int) else float(p)
                     for d, p in zip(default, parts))
    if isinstance(default, int):
        return int(raw)
    return float(raw)


# ------------------------------------------------------------------ chromatic

def apply_chromatic(img: np.ndarray, params: ChromaticParams) -> np.ndarray:
    """Brightness, then contrast, then saturation; clamped to ``[0, 1]`` after each step.

    Contrast blends toward the mean gray level of its input, saturation
    blends each pixel toward its own gray value.
    """
    out = np.clip(params.brightness * img, 0.0, 1.0)
    c = params.contrast
    out = np.clip(c * out + (1.0 - c) * to_grayscale(out).mean(), 0.0, 1.0)
    s = params.saturation
    out = np.clip(s * out + (1.0 - s) * to_grayscale(out)[..., None], 0.0, 1.0)
    return out


def draw_chromatic(cfg: AugmentConfig, rng: np.random.Generator) -> ChromaticParams:
    # uniform(lo, lo) returns lo exactly, so degenerate ranges need no special case
    return ChromaticParams(
        brightness=float(rng.uniform(*cfg.brightness_range)),
        contrast=float(rng.uniform(*cfg.contrast_range)),
        saturation=float(rng.uniform(*cfg.saturation_range)),
    )


def _stream(rng, key: int) -> np.random.Generator:
    """Child generator ``key`` of ``rng`` (a Generator or SeedSequence)."""
    if isinstance(rng, np.random.SeedSequence):
        seq = rng
    else:
        seq = np.random.SeedSequence(int(rng.integers(0, 2**63)))
    child = np.random.SeedSequence(seq.entropy, spawn_key=seq.spawn_key + (key,))
    return np.random.default_rng(child)


def asymmetric_chromatic_augment(pair: StereoSample, cfg: AugmentConfig, rng):
    """Jitter each eye with its own independently drawn :class:`ChromaticParams`.

    ``rng`` may be a ``SeedSequence`` (the eyes then use fixed child streams)
    or a ``Generator``. Returns ``(augmented_pair, left_params, right_params)``.
    """
    left_params = draw_chromatic(cfg, _stream(rng, _STREAM_ACA_LEFT))
    right_params = draw_chromatic(cfg, _stream(rng, _STREAM_ACA_RIGHT))
    out = pair.replace(left=apply_chromatic(pair.left, left_params),
                       right=apply_chromatic(pair.right, right_params))
    return out, left_params, right_params


# --------------------------------------------------------------------- patching

def apply_patches(img: np.ndarray, patches: list[PatchSpec], sigma: float) -> np.ndarray:
    out = img.copy()
    for p in patches:
        noise = np.random.default_rng(p.noise_seed).normal(0.0, sigma, size=(p.h, p.w, 3)) if sigma > 0 \
            else np.zeros((p.h, p.w, 3))
        region = out[p.y:p.y + p.h, p.x:p.x + p.w]
        out[p.y:p.y + p.h, p.x:p.x + p.w] = np.clip(region + np.asarray(p.color_shift) + noise, 0.0, 1.0)
    return out


def draw_patches(height: int, width: int, cfg: AugmentConfig, rng: np.random.Generator) -> list[PatchSpec]:
    n_lo, n_hi = cfg.patch_count_range
    s_lo, s_hi = cfg.patch_size_range
    n = int(rng.integers(n_lo, n_hi + 1))
    patches = []
    for _ in range(n):
        # small images clamp the size range to the image
        w = int(rng.integers(min(s_lo, width), min(s_hi, width) + 1))
        h = int(rng.integers(min(s_lo, height), min(s_hi, height) + 1))
        x = int(rng.integers(0, width - w + 1))
        y = int(rng.integers(0, height - h + 1))
        shift = tuple(float(v) for v in rng.uniform(*cfg.color_shift_range, size=3))
        patches.append(PatchSpec(x, y, w, h, shift, int(rng.integers(0, 2**63))))
    return patches


def asymmetric_random_patching(pair: StereoSample, cfg: AugmentConfig, rng):
    """Perturb 2-4 random patches in one randomly chosen eye.

    Returns ``(pair, patches, eye)`` where ``eye`` is ``"left"``, ``"right"``
    or ``None`` when patching is disabled.
    """
    if not cfg.arp_enabled:
        return pair, [], None
    gen = _stream(rng, _STREAM_ARP) if isinstance(rng, np.random.SeedSequence) else rng
    eye = "left" if gen.random() < cfg.patch_prob else "right"
    patches = draw_patches(pair.height, pair.width, cfg, gen)
    target = apply_patches(getattr(pair, eye), patches, cfg.noise_sigma)
    return pair.replace(**{eye: target}), patches, eye


# -------------------------------------------------------------- crop / normalize

def crop_offset(sample: StereoSample, cfg: AugmentConfig, rng: np.random.Generator) -> tuple[int, int]:
    h, w = sample.height, sample.width
    if cfg.crop_h > h or cfg.crop_w > w:
        raise ValueError(f"crop {cfg.crop_h}x{cfg.crop_w} exceeds source {h}x{w}")
    x0 = int(rng.integers(0, w - cfg.crop_w + 1))
    y0 = int(rng.integers(0, h - cfg.crop_h + 1))
    return x0, y0


def crop_sample(sample: StereoSample, x0: int, y0: int, h: int, w: int) -> StereoSample:
    occ = None if sample.occlusion is None else sample.occlusion[y0:y0 + h, x0:x0 + w]
    return StereoSample(sample.left[y0:y0 + h, x0:x0 + w],
                        sample.right[y0:y0 + h, x0:x0 + w],
                        sample.disparity.crop(x0, y0, w, h), occ)


def synchronized_random_crop(sample: StereoSample, cfg: AugmentConfig, rng):
    """Cut one randomly placed ``crop_h x crop_w`` window from every raster.

    Returns ``(cropped, (x0, y0))``.
    """
    gen = _stream(rng, _STREAM_CROP) if isinstance(rng, np.random.SeedSequence) else rng
    x0, y0 = crop_offset(sample, cfg, gen)
    return crop_sample(sample, x0, y0, cfg.crop_h, cfg.crop_w), (x0, y0)


def normalize_image(img: np.ndarray, mean=IMAGENET_MEAN, std=IMAGENET_STD) -> np.ndarray:
    std = np.asarray(std, dtype=np.float64)
    if std.shape != (3,) or np.any(std <= 0):
        raise ValueError(f"std must be three positive values, got {std}")
    return (np.asarray(img, dtype=np.float64) - np.asarray(mean, dtype=np.float64)) / std


# --------------------------------------------------------------------- pipeline

@dataclass
class AugmentRecord:
    """Everything drawn while augmenting one sample; enough to replay it."""

    sample_index: int
    crop_offset: Optional[tuple[int, int]] = None
    left_params: Optional[ChromaticParams] = None
    right_params: Optional[ChromaticParams] = None
    eye: Optional[str] = None
    patches: list[PatchSpec] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "AugmentRecord":
        d = json.loads(line)
        return cls(
            sample_index=d["sample_index"],
            crop_offset=tuple(d["crop_offset"]) if d["crop_offset"] is not None else None,
            left_params=ChromaticParams(**d["left_params"]) if d["left_params"] else None,
            right_params=ChromaticParams(**d["right_params"]) if d["right_params"] else None,
            eye=d["eye"],
            patches=[PatchSpec(p["x"], p["y"], p["w"], p["h"], tuple(p["color_shift"]), p["noise_seed"])
                     for p in d["patches"]],
        )


@dataclass
class AugmentedSample:
    left: np.ndarray            # normalized, signed
    right: np.ndarray
    disparity: DisparityMap
    occlusion: Optional[np.ndarray]
    left_raw: np.ndarray        # augmented, pre-normalization, in [0, 1]
    right_raw: np.ndarray
    record: AugmentRecord


def sample_seed(master_seed: int, sample_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed) & (2**64 - 1), int(sample_index)])


def build_training_sample(sample: StereoSample, cfg: AugmentConfig, sample_index: int) -> AugmentedSample:
    """crop -> ACA -> ARP -> normalize, seeded by ``(cfg.master_seed, sample_index)``."""
    seq = sample_seed(cfg.master_seed, sample_index)
    record = AugmentRecord(sample_index)
    if cfg.crop_enabled:
        sample, record.crop_offset = synchronized_random_crop(sample, cfg, seq)
    if cfg.aca_enabled:
        sample, record.left_params, record.right_params = asymmetric_chromatic_augment(sample, cfg, seq)
    sample, record.patches, record.eye = asymmetric_random_patching(sample, cfg, seq)
    return _finish(sample, cfg, record)


def replay_training_sample(sample: StereoSample, cfg: AugmentConfig, record: AugmentRecord) -> AugmentedSample:
    """Re-apply a logged augmentation without touching any RNG."""
    if record.crop_offset is not None:
        x0, y0 = record.crop_offset
        sample = crop_sample(sample, x0, y0, cfg.crop_h, cfg.crop_w)
    if record.left_params is not None:
        sample = sample.replace(left=apply_chromatic(sample.left, record.left_params),
                                right=apply_chromatic(sample.right, record.right_params))
    if record.eye is not None:
        target = apply_patches(getattr(sample, record.eye), record.patches, cfg.noise_sigma)
        sample = sample.replace(**{record.eye: target})
    return _finish(sample, cfg, record)


def _finish(sample: StereoSample, cfg: AugmentConfig, record: AugmentRecord) -> AugmentedSample:
    return AugmentedSample(
        left=normalize_image(sample.left, cfg.norm_mean, cfg.norm_std),
        right=normalize_image(sample.right, cfg.norm_mean, cfg.norm_std),
        disparity=sample.disparity,
        occlusion=sample.occlusion,
        left_raw=sample.left,
        right_raw=sample.right,
        record=record,
    )
