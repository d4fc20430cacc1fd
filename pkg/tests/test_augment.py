import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shortcut_stereo.augment import (AugmentConfig, AugmentRecord, ChromaticParams, PatchSpec, apply_chromatic,
                                     apply_patches, asymmetric_chromatic_augment, asymmetric_random_patching,
                                     build_training_sample, normalize_image, replay_training_sample,
                                     synchronized_random_crop)
from shortcut_stereo.analyze import color_discrepancy_map
from shortcut_stereo.core import DisparityMap, StereoSample, to_grayscale
from shortcut_stereo.datagen import Layer, SceneSpec, generate

IDENTITY = dict(brightness_range=(1, 1), contrast_range=(1, 1), saturation_range=(1, 1))


def make_sample(h=120, w=160, seed=0):
    rng = np.random.default_rng(seed)
    left, right = rng.random((h, w, 3)), rng.random((h, w, 3))
    disp = DisparityMap(rng.random((h, w)) * 20, rng.random((h, w)) < 0.8)
    return StereoSample(left, right, disp, rng.random((h, w)) < 0.1)


# ----------------------------------------------------------------- chromatic

def test_identity_params_bit_identical():
    img = np.random.default_rng(0).random((8, 9, 3))
    assert np.array_equal(apply_chromatic(img, ChromaticParams(1, 1, 1)), img)


def test_zero_saturation_desaturates():
    img = np.random.default_rng(1).random((8, 9, 3))
    out = apply_chromatic(img, ChromaticParams(1, 1, 0))
    assert np.allclose(out[..., 0], out[..., 1], atol=1e-15)
    assert np.allclose(out[..., 1], out[..., 2], atol=1e-15)


def test_brightness_doubles_uniform_gray():
    out = apply_chromatic(np.full((4, 4, 3), 0.25), ChromaticParams(2.0, 1.0, 1.0))
    assert np.allclose(out, 0.5, atol=1e-15)
    # uniform gray is a fixed point of contrast and saturation
    out = apply_chromatic(np.full((4, 4, 3), 0.25), ChromaticParams(2.0, 1.37, 0.61))
    assert np.allclose(out, 0.5, atol=1e-12)


def test_contrast_uses_mean_after_brightness():
    img = np.zeros((1, 2, 3))
    img[0, 1] = 0.4
    # after b=2: [0, 0.8], mean gray 0.4; c=0.5 -> [0.2, 0.6]
    out = apply_chromatic(img, ChromaticParams(2.0, 0.5, 1.0))
    assert np.allclose(out[0, :, 0], [0.2, 0.6])


def test_clamped_output():
    img = np.random.default_rng(2).random((16, 16, 3))
    out = apply_chromatic(img, ChromaticParams(2.0, 1.5, 1.5))
    assert out.min() >= 0 and out.max() <= 1


def test_aca_identity_ranges_leave_images():
    s = make_sample()
    out, lp, rp = asymmetric_chromatic_augment(s, AugmentConfig(**IDENTITY), np.random.default_rng(0))
    assert np.array_equal(out.left, s.left) and np.array_equal(out.right, s.right)
    assert lp == rp == ChromaticParams(1, 1, 1)


def test_aca_params_in_range_and_asymmetric():
    cfg = AugmentConfig()
    s = make_sample(8, 8)
    rng = np.random.default_rng(123)
    for _ in range(1000):
        out, lp, rp = asymmetric_chromatic_augment(s, cfg, rng)
        for p in (lp, rp):
            assert 0.4 <= p.brightness <= 2.0
            assert 0.5 <= p.contrast <= 1.5 and 0.5 <= p.saturation <= 1.5
        assert lp != rp
        assert out.disparity is s.disparity


# ----------------------------------------------------------------- patching

def test_arp_disabled():
    s = make_sample()
    out, patches, eye = asymmetric_random_patching(s, AugmentConfig(arp_enabled=False), np.random.default_rng(0))
    assert out is s and patches == [] and eye is None


@given(st.integers(0, 2**63 - 1))
@settings(max_examples=50)
def test_arp_geometry_and_locality(seed):
    s = make_sample(256, 512, seed=1)
    out, patches, eye = asymmetric_random_patching(s, AugmentConfig(), np.random.default_rng(seed))
    assert 2 <= len(patches) <= 4
    inside = np.zeros((256, 512), bool)
    for p in patches:
        assert 50 <= p.w <= 100 and 50 <= p.h <= 100
        assert 0 <= p.x and p.x + p.w <= 512 and 0 <= p.y and p.y + p.h <= 256
        assert all(-0.5 <= c <= 0.5 for c in p.color_shift)
        inside[p.y:p.y + p.h, p.x:p.x + p.w] = True
    other = "right" if eye == "left" else "left"
    assert np.array_equal(getattr(out, other), getattr(s, other))
    changed = getattr(out, eye)
    assert np.array_equal(changed[~inside], getattr(s, eye)[~inside])
    assert changed.min() >= 0 and changed.max() <= 1
    assert np.array_equal(out.disparity.values, s.disparity.values)


def test_arp_small_image_clamps_patch_size():
    s = make_sample(30, 40)
    out, patches, _ = asymmetric_random_patching(s, AugmentConfig(), np.random.default_rng(4))
    for p in patches:
        assert p.w <= 40 and p.h <= 30 and p.x + p.w <= 40 and p.y + p.h <= 30


def test_patch_noise_statistics():
    # mid-gray, zero shift: the perturbation is the clamped Gaussian alone
    img = np.full((100, 100, 3), 0.5)
    patch = PatchSpec(0, 0, 100, 100, (0.0, 0.0, 0.0), 99)
    delta = apply_patches(img, [patch], 0.1) - img
    assert abs(delta.mean()) < 0.005
    assert delta.std() == pytest.approx(0.1, rel=0.03)


def test_arp_eye_frequency():
    cfg = AugmentConfig(patch_size_range=(1, 1), noise_sigma=0.0)
    s = make_sample(4, 4)
    rng = np.random.default_rng(2024)
    lefts = sum(asymmetric_random_patching(s, cfg, rng)[2] == "left" for _ in range(10_000))
    assert abs(lefts / 10_000 - 0.5) <= 0.015


# --------------------------------------------------------------- crop / norm

def test_crop_exact_size_is_identity():
    s = make_sample(256, 512)
    out, (x0, y0) = synchronized_random_crop(s, AugmentConfig(), np.random.default_rng(0))
    assert (x0, y0) == (0, 0)
    assert np.array_equal(out.left, s.left) and np.array_equal(out.disparity.values, s.disparity.values)


def test_crop_kitti_sized_offsets_and_copy_semantics():
    s = make_sample(370, 1226)
    rng = np.random.default_rng(9)
    for _ in range(50):
        out, (x0, y0) = synchronized_random_crop(s, AugmentConfig(), rng)
        assert out.left.shape == (256, 512, 3) and out.disparity.shape == (256, 512)
        assert 0 <= x0 <= 714 and 0 <= y0 <= 114
        src = s.disparity
        assert np.array_equal(out.disparity.valid, src.valid[y0:y0 + 256, x0:x0 + 512])
        v = out.disparity.valid
        assert np.array_equal(out.disparity.values[v], src.values[y0:y0 + 256, x0:x0 + 512][v])
        assert np.array_equal(out.right, s.right[y0:y0 + 256, x0:x0 + 512])
        assert np.array_equal(out.occlusion, s.occlusion[y0:y0 + 256, x0:x0 + 512])


def test_crop_too_large():
    with pytest.raises(ValueError):
        synchronized_random_crop(make_sample(100, 100), AugmentConfig(), np.random.default_rng(0))


def test_normalize():
    img = np.random.default_rng(0).random((3, 3, 3))
    assert np.array_equal(normalize_image(img, (0, 0, 0), (1, 1, 1)), img)
    mean = (0.485, 0.456, 0.406)
    assert np.all(normalize_image(np.full((1, 1, 3), mean), mean, (0.229, 0.224, 0.225)) == 0)
    out = normalize_image(np.ones((1, 1, 3)))[0, 0]
    assert np.allclose(out, [2.2489, 2.4286, 2.6400], atol=1e-3)
    with pytest.raises(ValueError):
        normalize_image(img, (0, 0, 0), (1, 0, 1))


# ------------------------------------------------------------------ pipeline

def test_pipeline_all_disabled_is_normalized_crop():
    s = make_sample(256, 512)
    cfg = AugmentConfig(aca_enabled=False, arp_enabled=False)
    aug = build_training_sample(s, cfg, 0)
    assert np.array_equal(aug.left, normalize_image(s.left))
    assert np.array_equal(aug.right, normalize_image(s.right))
    assert aug.record.left_params is None and aug.record.eye is None


def test_pipeline_deterministic_and_replayable():
    s = make_sample(300, 600)
    cfg = AugmentConfig(master_seed=42)
    a, b = build_training_sample(s, cfg, 7), build_training_sample(s, cfg, 7)
    assert np.array_equal(a.left, b.left) and np.array_equal(a.right, b.right)
    assert a.record.to_json() == b.record.to_json()
    replayed = replay_training_sample(s, cfg, AugmentRecord.from_json(a.record.to_json()))
    assert np.array_equal(replayed.left, a.left) and np.array_equal(replayed.right, a.right)


def test_pipeline_indices_differ():
    s = make_sample(256, 512)
    cfg = AugmentConfig(master_seed=5)
    logs = [build_training_sample(s, cfg, i).record for i in range(100)]
    params = {(r.left_params, r.right_params) for r in logs}
    assert len(params) == 100


def test_pipeline_stages_use_independent_streams():
    # toggling ARP must not change the chromatic draws
    s = make_sample(256, 512)
    a = build_training_sample(s, AugmentConfig(master_seed=3), 1).record
    b = build_training_sample(s, AugmentConfig(master_seed=3, arp_enabled=False), 1).record
    assert a.left_params == b.left_params and a.crop_offset == b.crop_offset


def test_pipeline_range_and_geometry():
    s = make_sample(300, 600)
    aug = build_training_sample(s, AugmentConfig(master_seed=1), 0)
    assert aug.left_raw.min() >= 0 and aug.left_raw.max() <= 1
    assert aug.left.shape == (256, 512, 3) and aug.disparity.shape == (256, 512)


def test_config_text_round_trip():
    cfg = AugmentConfig(brightness_range=(0.5, 1.5), master_seed=99, arp_enabled=False, crop_w=128)
    assert AugmentConfig.from_text(cfg.to_text()) == cfg
    cfg2 = AugmentConfig.from_text("# comment\nnoise_sigma = 0.2\npatch_count_range = 1, 3\n")
    assert cfg2.noise_sigma == 0.2 and cfg2.patch_count_range == (1, 3)
    with pytest.raises(KeyError):
        AugmentConfig.from_text("gamma = 2\n")
    with pytest.raises(ValueError):
        AugmentConfig(brightness_range=(2.0, 1.0))


def test_aca_removes_zero_discrepancy():
    spec = SceneSpec(96, 64, 4, (Layer(20, 10, 30, 30, 12),), seed=3)
    s = generate(spec)
    before = color_discrepancy_map(s.left, s.right, s.disparity, s.occlusion)
    assert np.median(before.valid_values) == 0
    cfg = AugmentConfig(brightness_range=(0.7, 0.7), contrast_range=(1, 1), saturation_range=(1, 1))
    out, _, _ = asymmetric_chromatic_augment(s, cfg, np.random.default_rng(0))
    # equal params on both eyes keep the hint
    same = color_discrepancy_map(out.left, out.right, s.disparity, s.occlusion)
    assert np.median(same.valid_values) == 0
    scaled = s.replace(right=apply_chromatic(s.right, ChromaticParams(1.3, 1, 1)))
    after = color_discrepancy_map(scaled.left, scaled.right, s.disparity, s.occlusion)
    assert np.median(after.valid_values) > 0
