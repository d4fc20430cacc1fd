"""Random-dot stereo scenes with exact ground truth.

A scene is a background plane plus fronto-parallel rectangles, each with an
integer disparity and its own random texture. Texture lives in left-view
coordinates, so a surface point seen at left ``x`` appears at right
``x - d`` with bit-identical colour unless a nearer layer covers it there.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .core import DisparityMap, StereoSample
from .io import SampleManifest, format_manifest, read_manifest, write_image, write_mask_png, write_pfm_disparity

TEXTURES = ("random_rgb", "random_gray_dots")


@dataclass(frozen=True)
class Layer:
    x: int
    y: int
    w: int
    h: int
    disparity: int


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    background_disparity: int = 0
    layers: tuple[Layer, ...] = field(default_factory=tuple)
    texture: str = "random_rgb"
    seed: int = 0
    # texture intensity limits; stored as 8-bit levels
    texture_range: tuple[float, float] = (0.0, 1.0)

    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"scene dimensions must be positive, got {self.width}x{self.height}")
        if self.texture not in TEXTURES:
            raise ValueError(f"unknown texture {self.texture!r}; expected one of {TEXTURES}")
        lo, hi = self.texture_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError(f"texture_range must satisfy 0 <= lo <= hi <= 1, got {self.texture_range}")
        limit = self.width / 4
        prev = self.background_disparity
        if not (isinstance(prev, (int, np.integer)) and 0 <= prev <= limit):
            raise ValueError(f"background disparity must be an integer in [0, {limit}], got {prev}")
        for i, layer in enumerate(self.layers):
            d = layer.disparity
            if not isinstance(d, (int, np.integer)) or not 0 <= d <= limit:
                raise ValueError(f"layer {i}: disparity must be an integer in [0, {limit}], got {d}")
            if d <= prev:
                raise ValueError(f"layer {i}: disparities must increase strictly back to front")
            if layer.w < 1 or layer.h < 1 or layer.x < 0 or layer.y < 0 \
                    or layer.x + layer.w > self.width or layer.y + layer.h > self.height:
                raise ValueError(f"layer {i}: rectangle {layer} not inside the {self.width}x{self.height} image")
            prev = d


def _texture(kind: str, shape: tuple[int, int], rng: np.random.Generator,
             levels: tuple[float, float] = (0.0, 1.0)) -> np.ndarray:
    h, w = shape
    lo, hi = int(round(levels[0] * 255)), int(round(levels[1] * 255))
    if kind == "random_rgb":
        raw = rng.integers(lo, hi + 1, size=(h, w, 3), dtype=np.uint8)
    else:
        raw = np.repeat(rng.integers(lo, hi + 1, size=(h, w, 1), dtype=np.uint8), 3, axis=2)
    # 8-bit quantized so PNG/PPM storage is lossless
    return raw.astype(np.float64) / 255.0


def generate(spec: SceneSpec) -> StereoSample:
    """Render the stereo pair, dense disparity and occlusion mask of ``spec``.

    The occlusion mask flags left pixels whose correspondence is hidden by a
    nearer layer in the right view. Pixels whose correspondence falls left of
    the image border are not flagged; callers check ``x - d >= 0`` themselves.
    """
    spec.validate()
    H, W = spec.height, spec.width
    full = Layer(0, 0, W, H, spec.background_disparity)
    layers = (full,) + tuple(spec.layers)
    seq = np.random.SeedSequence(spec.seed)
    rngs = [np.random.default_rng(s) for s in seq.spawn(len(layers))]

    left = np.empty((H, W, 3))
    right = np.empty((H, W, 3))
    disp = np.empty((H, W), dtype=np.int64)
    left_owner = np.empty((H, W), dtype=np.int64)
    right_owner = np.empty((H, W), dtype=np.int64)

    for k, (layer, rng) in enumerate(zip(layers, rngs)):
        d = int(layer.disparity)
        # indexed by left-view x; right pixel xr reads column xr + d
        tex = _texture(spec.texture, (H, W + d), rng, spec.texture_range)
        ys = slice(layer.y, layer.y + layer.h)
        xs = slice(layer.x, layer.x + layer.w)
        left[ys, xs] = tex[ys, xs]
        disp[ys, xs] = d
        left_owner[ys, xs] = k
        if k == 0:
            # the background also fills the right-border strip no left pixel sees
            xr0, xr1 = 0, W
        else:
            xr0, xr1 = max(layer.x - d, 0), min(layer.x + layer.w - d, W)
        if xr1 > xr0:
            right[ys, xr0:xr1] = tex[ys, xr0 + d:xr1 + d]
            right_owner[ys, xr0:xr1] = k

    xr = np.arange(W)[None, :] - disp
    in_frame = xr >= 0
    owner_at_match = np.take_along_axis(right_owner, np.clip(xr, 0, W - 1), axis=1)
    occlusion = in_frame & (owner_at_match != left_owner)
    return StereoSample(left, right, DisparityMap.dense(disp.astype(np.float64)), occlusion)


def random_scene(width: int, height: int, rng: np.random.Generator, n_layers: tuple[int, int] = (1, 3),
                 texture: str = "random_rgb", max_background: Optional[int] = None,
                 texture_range: tuple[float, float] = (0.0, 1.0)) -> SceneSpec:
    """Draw a scene with a background plane and ``n_layers`` foreground rectangles."""
    limit = width // 4
    n = int(rng.integers(n_layers[0], n_layers[1] + 1))
    if max_background is None:
        max_background = max(limit // 4, 0)
    bg = int(rng.integers(0, min(max_background, limit) + 1))
    # need n distinct disparities above bg
    n = min(n, limit - bg)
    disparities = np.sort(rng.choice(np.arange(bg + 1, limit + 1), size=n, replace=False)) if n > 0 else []
    layers = []
    for d in disparities:
        w = int(rng.integers(max(width // 10, 1), max(width // 3, 1) + 1))
        h = int(rng.integers(max(height // 6, 1), max(height // 2, 1) + 1))
        x = int(rng.integers(0, width - w + 1))
        y = int(rng.integers(0, height - h + 1))
        layers.append(Layer(x, y, w, h, int(d)))
    return SceneSpec(width, height, bg, tuple(layers), texture, int(rng.integers(0, 2**63)), tuple(texture_range))


def derive_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(master_seed) & (2**64 - 1), int(index)]).generate_state(1, np.uint64)[0])


def sample_spec(template: SceneSpec, master_seed: int, index: int, randomize_layers: bool = False) -> SceneSpec:
    seed = derive_seed(master_seed, index)
    if randomize_layers:
        return random_scene(template.width, template.height, np.random.default_rng(seed),
                            texture=template.texture, texture_range=template.texture_range)
    return replace(template, seed=seed)


def generate_manifest_set(n: int, template: SceneSpec, seed: int, out_dir: Union[str, Path],
                          randomize_layers: bool = False, image_format: str = "png8") -> SampleManifest:
    """Write ``n`` generated samples plus ``manifest.csv`` into ``out_dir``.

    Sample ``i`` depends only on ``(seed, i)``. Write failures are recorded
    in the returned manifest's ``errors`` and the remaining samples proceed.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ext = "ppm" if image_format == "ppm" else "png"
    rows, errors = [], []
    for i in range(n):
        stem = f"sample_{i:05d}"
        try:
            sample = generate(sample_spec(template, seed, i, randomize_layers))
            files = {
                "left": (f"{stem}_left.{ext}", write_image(sample.left, image_format)),
                "right": (f"{stem}_right.{ext}", write_image(sample.right, image_format)),
                "disparity": (f"{stem}_disp.pfm", write_pfm_disparity(sample.disparity)),
                "occlusion": (f"{stem}_occ.png", write_mask_png(sample.occlusion)),
            }
            for name, payload in files.values():
                (out / name).write_bytes(payload)
        except (OSError, ValueError) as exc:
            errors.append((i, f"sample {i}: {exc}"))
            continue
        row = {k: name for k, (name, _) in files.items()}
        row["format"] = "pfm"
        rows.append(row)
    (out / "manifest.csv").write_text(format_manifest(rows))
    manifest = read_manifest(out / "manifest.csv")
    manifest.errors.extend(errors)
    return manifest
