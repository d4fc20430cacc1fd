"""Readers and writers for stereo dataset formats.

* PFM (``Pf`` grayscale / ``PF`` colour): ASCII header then IEEE-754 float32
  rows stored bottom-to-top; a negative scale means little-endian.
* KITTI disparity PNG: 16-bit grayscale, ``d = raw / 256``, ``raw == 0`` invalid.
* 8-bit PNG / binary PPM images, mapped to ``[0, 1]`` by ``/ 255``.
* Sample manifests: CSV with header ``left,right,disparity,format[,occlusion]``.
"""
from __future__ import annotations

import csv
import io as _io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image as PILImage

from .core import DisparityMap, StereoSample, as_image

PathLike = Union[str, Path]

DISPARITY_FORMATS = ("pfm", "kitti_png16")
IMAGE_FORMATS = ("png8", "ppm")


class FormatError(ValueError):
    """Base class for every decode/encode failure raised by this module."""


class PFMHeaderError(FormatError):
    pass


class PFMTruncatedError(FormatError):
    pass


class PFMDimensionError(FormatError):
    pass


class PNGFormatError(FormatError):
    pass


class ImageDecodeError(FormatError):
    pass


class ManifestError(ValueError):
    pass


# --------------------------------------------------------------------------- PFM

_PFM_HEADER = re.compile(
    rb"\A(P[Ff])\s*?\r?\n\s*(-?\d+)\s+(-?\d+)\s*\r?\n\s*([-+0-9.eE]+)\s*?\r?\n")


def read_pfm(data: bytes) -> np.ndarray:
    """Decode PFM bytes into a float32 array, rows top-to-bottom.

    ``Pf`` yields shape ``(H, W)``, ``PF`` yields ``(H, W, 3)``.
    """
    if not data.startswith((b"Pf", b"PF")):
        raise PFMHeaderError("PFM data must start with 'Pf' or 'PF'")
    m = _PFM_HEADER.match(data)
    if m is None:
        raise PFMHeaderError("malformed PFM header")
    kind, w_txt, h_txt, scale_txt = m.groups()
    width, height = int(w_txt), int(h_txt)
    if width <= 0 or height <= 0:
        raise PFMDimensionError(f"PFM dimensions must be positive, got {width}x{height}")
    try:
        scale = float(scale_txt)
    except ValueError:
        raise PFMHeaderError(f"PFM scale {scale_txt!r} is not a number") from None
    if scale == 0 or not np.isfinite(scale):
        raise PFMHeaderError("PFM scale must be finite and non-zero")
    channels = 3 if kind == b"PF" else 1
    count = width * height * channels
    payload = data[m.end():]
    if len(payload) < 4 * count:
        raise PFMTruncatedError(
            f"PFM payload has {len(payload)} bytes, expected {4 * count}")
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    arr = np.frombuffer(payload, dtype=dtype, count=count)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return np.flipud(arr.reshape(shape)).astype(np.float32)


def write_pfm(values: np.ndarray) -> bytes:
    """Encode a 2-D (``Pf``) or ``(H, W, 3)`` (``PF``) array as little-endian PFM."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim == 2:
        kind = "Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        kind = "PF"
    else:
        raise PFMDimensionError(f"cannot write array of shape {arr.shape} as PFM")
    height, width = arr.shape[:2]
    if width <= 0 or height <= 0:
        raise PFMDimensionError("PFM dimensions must be positive")
    header = f"{kind}\n{width} {height}\n-1.0\n".encode("ascii")
    return header + np.flipud(arr).astype("<f4").tobytes()


def read_pfm_disparity(data: bytes) -> DisparityMap:
    """Decode a grayscale PFM into a disparity map; non-finite values become invalid."""
    arr = read_pfm(data)
    if arr.ndim != 2:
        raise PFMHeaderError("disparity PFM must be single-channel ('Pf')")
    return DisparityMap(arr, np.isfinite(arr))


def write_pfm_disparity(disp: DisparityMap) -> bytes:
    values = np.where(disp.valid, disp.values, np.inf)
    return write_pfm(values)


# ----------------------------------------------------------------- KITTI PNG16

def _open_png(data: bytes) -> PILImage.Image:
    try:
        img = PILImage.open(_io.BytesIO(data))
        img.load()
    except Exception as exc:  # PIL raises a zoo of exception types
        raise ImageDecodeError(f"cannot decode image: {exc}") from exc
    return img


def read_kitti_disparity_png16(data: bytes) -> DisparityMap:
    img = _open_png(data)
    if img.format != "PNG":
        raise PNGFormatError(f"expected PNG data, got {img.format}")
    if img.mode not in ("I;16", "I;16B", "I;16L", "I"):
        raise PNGFormatError(f"KITTI disparity must be 16-bit single-channel PNG, got mode {img.mode}")
    if img.mode == "I" and img.info.get("bits", 16) not in (16,):
        raise PNGFormatError("KITTI disparity must be 16-bit")
    raw = np.asarray(img, dtype=np.int64)
    if raw.ndim != 2:
        raise PNGFormatError("KITTI disparity must be single-channel")
    return DisparityMap(raw / 256.0, raw > 0)


def write_kitti_disparity_png16(disp: DisparityMap) -> bytes:
    raw = np.rint(np.where(disp.valid, disp.values, 0.0) * 256.0)
    if np.any(raw > 65535):
        raise PNGFormatError("disparity exceeds the 16-bit KITTI range (255.996 px)")
    raw = raw.astype(np.uint16)
    # a valid disparity that rounds to zero would silently become invalid
    raw[disp.valid & (raw == 0)] = 1
    return encode_png16(raw)


def encode_png16(raw: np.ndarray) -> bytes:
    buf = _io.BytesIO()
    PILImage.fromarray(np.asarray(raw, dtype=np.uint16)).save(buf, format="PNG")
    return buf.getvalue()


# ---------------------------------------------------------------------- images

def read_image(data: bytes, fmt: Optional[str] = None) -> np.ndarray:
    """Decode an 8-bit PNG or PPM/PGM into an ``(H, W, 3)`` float image in ``[0, 1]``.

    Grayscale sources are replicated to three channels.
    """
    if fmt is not None and fmt not in IMAGE_FORMATS:
        raise ImageDecodeError(f"unsupported image format {fmt!r}")
    img = _open_png(data)
    expected = {"png8": ("PNG",), "ppm": ("PPM",)}
    if fmt is not None and img.format not in expected[fmt]:
        raise ImageDecodeError(f"data is {img.format}, not {fmt}")
    if img.mode == "L":
        arr = np.repeat(np.asarray(img)[..., None], 3, axis=2)
    elif img.mode == "RGB":
        arr = np.asarray(img)
    elif img.mode == "RGBA":
        arr = np.asarray(img)[..., :3]
    elif img.mode == "LA":
        arr = np.repeat(np.asarray(img)[..., :1], 3, axis=2)
    elif img.mode in ("P", "1"):
        arr = np.asarray(img.convert("RGB"))
    else:
        raise ImageDecodeError(f"unsupported bit depth / mode {img.mode}; only 8-bit images are read")
    return arr.astype(np.float64) / 255.0


def quantize8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_image(img: np.ndarray, fmt: str = "png8") -> bytes:
    """Encode a ``[0, 1]`` image as 8-bit PNG or binary PPM (``P6``)."""
    arr = quantize8(as_image(img))
    if fmt == "ppm":
        h, w = arr.shape[:2]
        return f"P6\n{w} {h}\n255\n".encode("ascii") + arr.tobytes()
    if fmt == "png8":
        buf = _io.BytesIO()
        PILImage.fromarray(arr, mode="RGB").save(buf, format="PNG")
        return buf.getvalue()
    raise ImageDecodeError(f"unsupported image format {fmt!r}")


def write_mask_png(mask: np.ndarray) -> bytes:
    buf = _io.BytesIO()
    PILImage.fromarray(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8), mode="L").save(
        buf, format="PNG")
    return buf.getvalue()


def read_mask_png(data: bytes) -> np.ndarray:
    img = _open_png(data)
    arr = np.asarray(img.convert("L"))
    return arr > 127


def image_format_for(path: PathLike) -> str:
    suffix = Path(path).suffix.lower()
    return "ppm" if suffix in (".ppm", ".pgm", ".pnm") else "png8"


# -------------------------------------------------------------------- manifest

MANIFEST_COLUMNS = ("left", "right", "disparity", "format")


@dataclass(frozen=True)
class ManifestRow:
    index: int
    left: Path
    right: Path
    disparity: Path
    format: str
    occlusion: Optional[Path] = None

    @property
    def label(self) -> str:
        return self.left.stem


@dataclass
class SampleManifest:
    rows: list[ManifestRow] = field(default_factory=list)
    errors: list[tuple[int, str]] = field(default_factory=list)
    base_dir: Path = Path(".")

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)


def load_manifest(text: str, base_dir: PathLike = ".", check_files: bool = True) -> SampleManifest:
    """Parse manifest CSV text. Row problems are collected, not raised.

    Row indices count data rows from 0. Relative paths resolve against
    ``base_dir`` (normally the manifest's own directory).
    """
    base = Path(base_dir)
    reader = csv.DictReader(_io.StringIO(text))
    header = [h.strip() for h in (reader.fieldnames or [])]
    missing = [c for c in MANIFEST_COLUMNS if c not in header]
    if missing:
        raise ManifestError(f"manifest header lacks column(s): {', '.join(missing)}")
    reader.fieldnames = header
    manifest = SampleManifest(base_dir=base)
    for i, rec in enumerate(reader):
        rec = {k: (v or "").strip() for k, v in rec.items() if k is not None}
        fmt = rec["format"]
        if fmt not in DISPARITY_FORMATS:
            manifest.errors.append((i, f"row {i}: unknown disparity format {fmt!r}"))
            continue

        def resolve(p: str) -> Path:
            path = Path(p)
            return path if path.is_absolute() else base / path

        paths = {k: resolve(rec[k]) for k in ("left", "right", "disparity") if rec.get(k)}
        if len(paths) < 3:
            manifest.errors.append((i, f"row {i}: empty path field"))
            continue
        occ = resolve(rec["occlusion"]) if rec.get("occlusion") else None
        if check_files:
            absent = [str(p) for p in (*paths.values(), occ) if p is not None and not p.is_file()]
            if absent:
                manifest.errors.append((i, f"row {i}: file not found: {', '.join(absent)}"))
                continue
        manifest.rows.append(ManifestRow(i, paths["left"], paths["right"], paths["disparity"], fmt, occ))
    return manifest


def read_manifest(path: PathLike, check_files: bool = True) -> SampleManifest:
    path = Path(path)
    return load_manifest(path.read_text(), path.parent, check_files=check_files)


def format_manifest(rows: list[dict], with_occlusion: bool = True) -> str:
    buf = _io.StringIO()
    cols = list(MANIFEST_COLUMNS) + (["occlusion"] if with_occlusion else [])
    writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: row.get(c, "") for c in cols})
    return buf.getvalue()


DISPARITY_DECODERS = {
    "pfm": read_pfm_disparity,
    "kitti_png16": read_kitti_disparity_png16,
}


def read_disparity(data: bytes, fmt: str) -> DisparityMap:
    try:
        decoder = DISPARITY_DECODERS[fmt]
    except KeyError:
        raise ManifestError(f"unknown disparity format {fmt!r}") from None
    return decoder(data)


def load_sample(row: ManifestRow) -> StereoSample:
    left = read_image(row.left.read_bytes(), image_format_for(row.left))
    right = read_image(row.right.read_bytes(), image_format_for(row.right))
    disp = read_disparity(row.disparity.read_bytes(), row.format)
    occ = read_mask_png(row.occlusion.read_bytes()) if row.occlusion else None
    return StereoSample(left, right, disp, occ)
