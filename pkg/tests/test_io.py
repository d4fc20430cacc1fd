import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image as PILImage

from shortcut_stereo.core import DisparityMap
from shortcut_stereo.io import (ImageDecodeError, ManifestError, PFMDimensionError, PFMHeaderError, PFMTruncatedError,
                                PNGFormatError, encode_png16, load_manifest, load_sample, read_image,
                                read_kitti_disparity_png16, read_manifest, read_pfm, read_pfm_disparity,
                                write_image, write_kitti_disparity_png16, write_pfm)


def test_read_pfm_minimal_little_endian():
    data = b"Pf\n2 1\n-1.0\n" + struct.pack("<2f", 1.5, 2.5)
    assert read_pfm(data).tolist() == [[1.5, 2.5]]


def test_read_pfm_big_endian_and_row_order():
    # rows stored bottom-to-top
    data = b"Pf\n1 2\n1.0\n" + struct.pack(">2f", 7.0, 3.0)
    assert read_pfm(data).tolist() == [[3.0], [7.0]]


def test_read_pfm_color():
    data = b"PF\n1 1\n-1.0\n" + struct.pack("<3f", 0.1, 0.2, 0.3)
    assert read_pfm(data).shape == (1, 1, 3)


def test_write_pfm_zero_pixel():
    assert write_pfm(np.zeros((1, 1))) == b"Pf\n1 1\n-1.0\n" + b"\x00" * 4


def test_write_pfm_payload_size():
    data = write_pfm(np.ones((2, 2)))
    assert len(data) - len(b"Pf\n2 2\n-1.0\n") == 16


@pytest.mark.parametrize("data, error", [
    (b"P6\n1 1\n255\n\x00\x00\x00", PFMHeaderError),
    (b"Pf\nx y\n-1.0\n", PFMHeaderError),
    (b"Pf\n2 1\n-1.0\n" + b"\x00" * 7, PFMTruncatedError),
    (b"Pf\n0 1\n-1.0\n", PFMDimensionError),
    (b"Pf\n1 1\n0\n\x00\x00\x00\x00", PFMHeaderError),
])
def test_read_pfm_errors_are_distinct(data, error):
    with pytest.raises(error):
        read_pfm(data)


def test_pfm_errors_never_escape_as_other_types():
    rng = np.random.default_rng(3)
    good = write_pfm(rng.random((3, 4)))
    for cut in range(len(good)):
        try:
            read_pfm(good[:cut])
        except (PFMHeaderError, PFMTruncatedError, PFMDimensionError):
            pass


@given(st.integers(1, 9), st.integers(1, 9), st.integers(0, 2**32 - 1))
def test_pfm_round_trip_bit_exact(w, h, seed):
    values = np.random.default_rng(seed).standard_normal((h, w)).astype(np.float32) * 100
    out = read_pfm(write_pfm(values))
    assert out.shape == (h, w)
    assert out.tobytes() == values.tobytes()


def test_pfm_random_7x5_round_trip():
    values = np.random.default_rng(11).random((5, 7)).astype(np.float32)
    assert np.array_equal(read_pfm(write_pfm(values)), values)


def test_pfm_disparity_marks_nonfinite_invalid():
    values = np.array([[1.0, np.inf], [np.nan, 0.0]], dtype=np.float32)
    d = read_pfm_disparity(write_pfm(values))
    assert d.valid.tolist() == [[True, False], [False, True]]


def test_pfm_disparity_rejects_color():
    with pytest.raises(PFMHeaderError):
        read_pfm_disparity(write_pfm(np.zeros((2, 2, 3))))


def test_kitti_decoding_rules():
    raw = np.array([[0, 1, 255, 256, 12345, 65535]], dtype=np.uint16)
    d = read_kitti_disparity_png16(encode_png16(raw))
    assert d.valid.tolist() == [[False, True, True, True, True, True]]
    assert d.values[0, 3] == 1.0
    assert d.values[0, 4] == pytest.approx(48.22265625, abs=0)


@given(st.integers(1, 65535))
@settings(max_examples=200)
def test_kitti_encode_decode_exact(raw):
    d = read_kitti_disparity_png16(encode_png16(np.array([[raw]], dtype=np.uint16)))
    assert int(round(d.values[0, 0] * 256)) == raw


def test_kitti_writer_round_trip():
    d = DisparityMap(np.array([[0.0, 1.5, 200.25]]), np.array([[False, True, True]]))
    back = read_kitti_disparity_png16(write_kitti_disparity_png16(d))
    assert back.valid.tolist() == d.valid.tolist()
    assert back.values[0, 1:].tolist() == [1.5, 200.25]


def _png(arr, mode=None):
    buf = io.BytesIO()
    PILImage.fromarray(arr, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def test_kitti_rejects_8bit_and_rgb():
    with pytest.raises(PNGFormatError):
        read_kitti_disparity_png16(_png(np.zeros((2, 2), np.uint8)))
    with pytest.raises(PNGFormatError):
        read_kitti_disparity_png16(_png(np.zeros((2, 2, 3), np.uint8)))
    with pytest.raises(ImageDecodeError):
        read_kitti_disparity_png16(b"not a png")


def test_read_ppm_red_pixel():
    img = read_image(b"P6\n1 1\n255\n\xff\x00\x00", "ppm")
    assert img.tolist() == [[[1.0, 0.0, 0.0]]]


def test_grayscale_png_replicated():
    img = read_image(_png(np.array([[0, 64], [128, 255]], np.uint8)), "png8")
    assert img.shape == (2, 2, 3)
    assert np.array_equal(img[..., 0], img[..., 1]) and np.array_equal(img[..., 1], img[..., 2])


def test_read_image_rejects_16bit_and_garbage():
    with pytest.raises(ImageDecodeError):
        read_image(encode_png16(np.zeros((2, 2), np.uint16)))
    with pytest.raises(ImageDecodeError):
        read_image(b"garbage", "png8")


@pytest.mark.parametrize("fmt", ["png8", "ppm"])
def test_image_round_trip_quantization_bound(fmt):
    img = np.random.default_rng(5).random((9, 13, 3))
    back = read_image(write_image(img, fmt), fmt)
    assert np.max(np.abs(back - img)) <= 1 / 255


def test_manifest_header_only_is_empty():
    m = load_manifest("left,right,disparity,format\n")
    assert len(m) == 0 and m.errors == []


def test_manifest_missing_column():
    with pytest.raises(ManifestError):
        load_manifest("left,right,format\n")


def test_manifest_unknown_format_and_missing_file(tmp_path):
    for name in ("l.png", "r.png", "d.pfm"):
        (tmp_path / name).write_bytes(b"")
    text = ("left,right,disparity,format\n"
            "l.png,r.png,d.pfm,pfm\n"
            "l.png,r.png,d.pfm,exr\n"
            "l.png,missing.png,d.pfm,kitti_png16\n")
    m = load_manifest(text, tmp_path)
    assert [r.index for r in m.rows] == [0]
    assert m.rows[0].left == tmp_path / "l.png"
    assert [i for i, _ in m.errors] == [1, 2]
    assert "exr" in m.errors[0][1] and "row 1" in m.errors[0][1]
    assert "missing.png" in m.errors[1][1]


def test_manifest_dispatch_to_pfm_decoder(tmp_path):
    img = np.random.default_rng(0).random((4, 5, 3))
    (tmp_path / "l.png").write_bytes(write_image(img))
    (tmp_path / "r.ppm").write_bytes(write_image(img, "ppm"))
    (tmp_path / "d.pfm").write_bytes(write_pfm(np.full((4, 5), 2.0)))
    (tmp_path / "m.csv").write_text("left,right,disparity,format\nl.png,r.ppm,d.pfm,pfm\n")
    sample = load_sample(read_manifest(tmp_path / "m.csv").rows[0])
    assert np.all(sample.disparity.values == 2.0)
    assert np.array_equal(sample.left, sample.right)
