import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from oracles import naive_bicubic_down

from facesr.data import (
    DatasetError,
    DatasetManifest,
    FaceSample,
    MotionField,
    apply_motion_blur,
    augment_flip,
    build_manifest,
    composite_blur,
    dilate_mask,
    downsample8,
    load_image,
    make_toy_dataset,
    make_toy_face,
    sample_motion_field,
    save_image,
    synthesize_sample,
)


def uniform_field(h, w, dx=0.0, dy=0.0):
    return MotionField(np.full((h, w), float(dx)), np.full((h, w), float(dy)))


# --- motion field -----------------------------------------------------------


def test_zero_max_blur_gives_zero_field():
    f = sample_motion_field(7, 256, 0)
    assert not f.dx.any() and not f.dy.any()


def test_motion_field_is_deterministic():
    a, b = sample_motion_field(7, 256, 15), sample_motion_field(7, 256, 15)
    assert np.array_equal(a.dx, b.dx) and np.array_equal(a.dy, b.dy)


def test_motion_field_bounds():
    f = sample_motion_field(7, 256, 15)
    assert f.magnitude().max() <= 15.0 + 1e-12
    assert f.max_gradient() <= 1.0 + 1e-12
    # non-trivial: most seeds reach the magnitude bound
    assert f.magnitude().max() > 1.0


@pytest.mark.parametrize("size", [0, -3])
def test_motion_field_rejects_bad_size(size):
    with pytest.raises(DatasetError):
        sample_motion_field(0, size, 15)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), max_blur=st.floats(0.0, 30.0))
def test_motion_field_invariants_hold_for_any_seed(seed, max_blur):
    f = sample_motion_field(seed, 64, max_blur)
    assert f.magnitude().max() <= max_blur + 1e-9
    assert f.max_gradient() <= 1.0 + 1e-9


# --- blur -------------------------------------------------------------------


def test_zero_field_blur_is_bit_exact_identity(rng):
    img = rng.random((32, 40, 3))
    assert np.array_equal(apply_motion_blur(img, uniform_field(32, 40)), img)


def test_constant_image_survives_any_field():
    img = np.full((64, 64, 3), 0.5)
    out = apply_motion_blur(img, sample_motion_field(3, 64, 15))
    assert np.array_equal(out, img)


def test_point_spread_matches_line_kernel_oracle():
    img = np.zeros((48, 48, 1))
    img[24, 24] = 1.0
    out = apply_motion_blur(img, uniform_field(48, 48, dx=8.0))
    # 17 taps at half-pixel steps over [-4, 4]: trapezoid weights on integer offsets
    kernel = np.array([1.5, 2, 2, 2, 2, 2, 2, 2, 1.5]) / 17.0
    expected = ndimage.correlate(img[:, :, 0], kernel[None, :], mode="constant")
    np.testing.assert_allclose(out[:, :, 0], expected, atol=1e-15)
    assert abs(out.sum() - 1.0) < 1e-3
    assert np.count_nonzero(out) == 9 and np.all(out[24, 20:29] > 0)


def test_blur_dimension_mismatch():
    with pytest.raises(DatasetError):
        apply_motion_blur(np.zeros((8, 8, 3)), uniform_field(8, 9))


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_blur_roughly_preserves_global_mean(seed):
    rng = np.random.default_rng(seed)
    img = rng.random((128, 128, 3))
    out = apply_motion_blur(img, sample_motion_field(seed, 128, 15))
    assert abs(out.mean() - img.mean()) < 1e-2


def test_composite_blur_cases(rng):
    hr = rng.random((64, 64, 3))
    field = sample_motion_field(5, 64, 10)
    zeros, ones = np.zeros((64, 64, 1)), np.ones((64, 64, 1))
    assert np.array_equal(composite_blur(hr, zeros, field), hr)
    assert np.array_equal(composite_blur(hr, ones, uniform_field(64, 64)), hr)

    half = zeros.copy()
    half[:, :32] = 1.0
    out = composite_blur(hr, half, field)
    outside = dilate_mask(half, 10)[:, :, 0] == 0
    assert outside.any()
    assert np.array_equal(out[outside], hr[outside])
    assert not np.array_equal(out[:, :32], hr[:, :32])


def test_composite_rejects_soft_mask(rng):
    with pytest.raises(DatasetError):
        composite_blur(rng.random((8, 8, 3)), np.full((8, 8, 1), 0.5), uniform_field(8, 8))


# --- downsampling -----------------------------------------------------------


def test_downsample_constant():
    out = downsample8(np.full((256, 256, 3), 0.3))
    assert out.shape == (32, 32, 3)
    np.testing.assert_allclose(out, 0.3, atol=1e-15)


def test_downsample_checkerboard_is_exact():
    blocks = (np.indices((32, 32)).sum(axis=0) % 2).astype(float)
    img = np.kron(blocks, np.ones((8, 8)))[:, :, None]
    out = downsample8(img)
    np.testing.assert_allclose(out[:, :, 0], blocks, atol=1e-6)
    np.testing.assert_allclose(out, naive_bicubic_down(img, 8), atol=1e-12)


def test_downsample_matches_naive_oracle(rng):
    img = rng.random((64, 48, 3))
    np.testing.assert_allclose(downsample8(img), naive_bicubic_down(img, 8), atol=1e-12)


def test_downsample_rejects_indivisible():
    with pytest.raises(DatasetError):
        downsample8(np.zeros((60, 64, 3)))


def test_downsample_inverts_replication_on_constants():
    lr = np.full((4, 4, 3), 0.7)
    up = np.kron(lr, np.ones((8, 8, 1)))
    np.testing.assert_allclose(downsample8(up), lr, atol=1e-15)


# --- samples ----------------------------------------------------------------


@pytest.fixture(scope="module")
def face():
    return make_toy_face(np.random.default_rng(3), 256)


def test_synthesize_without_blur(face):
    hr, mask = face
    s = synthesize_sample(hr, mask, seed=11, max_blur=0)
    assert np.array_equal(s.hrb, hr)
    assert np.array_equal(s.lr, downsample8(hr))


def test_synthesize_is_deterministic_and_shaped(face):
    hr, mask = face
    a = synthesize_sample(hr, mask, seed=11, max_blur=15)
    b = synthesize_sample(hr, mask, seed=11, max_blur=15)
    assert a.equals(b)
    assert a.lr.shape == (32, 32, 3)
    assert not np.array_equal(a.hrb, hr)


@settings(max_examples=5, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_background_untouched_outside_dilated_mask(face, seed):
    hr, mask = face
    s = synthesize_sample(hr, mask, seed=seed, max_blur=15)
    outside = dilate_mask(mask, 15)[:, :, 0] == 0
    assert np.array_equal(s.hrb[outside], hr[outside])


def test_face_sample_rejects_wrong_lr_size():
    z = np.zeros((64, 64, 3))
    with pytest.raises(DatasetError):
        FaceSample("x", z, z, np.zeros((7, 8, 3)), np.zeros((64, 64, 1)))


def test_flip(face):
    hr, mask = face
    s = synthesize_sample(hr, mask, seed=2, max_blur=8)
    assert augment_flip(s, False) is s
    assert augment_flip(augment_flip(s, True), True).equals(s)
    f = augment_flip(s, True)
    w = s.lr.shape[1]
    for y in range(s.lr.shape[0]):
        for x in range(w):
            assert np.array_equal(f.lr[y, x], s.lr[y, w - 1 - x])
    assert np.array_equal(f.mask, s.mask[:, ::-1])


# --- io & manifests ---------------------------------------------------------


def test_png_round_trip_rounds_half_up(tmp_path):
    img = np.array([[[0.5 / 255, 1.5 / 255, 254.49 / 255]]])
    save_image(tmp_path / "a.png", img)
    back = load_image(tmp_path / "a.png")
    np.testing.assert_array_equal(np.rint(back * 255), [[[1, 2, 254]]])


def test_build_manifest_split(toy_dirs, tmp_path):
    hr_dir, mask_dir = toy_dirs
    train, test = build_manifest(hr_dir, mask_dir, tmp_path / "a", 8, 2, seed=1, max_blur=4, hr_size=64)
    assert len(train.ids) == 8 and len(test.ids) == 2
    assert not set(train.ids) & set(test.ids)
    train.validate()
    test.validate()
    doc = json.loads((train.root / "manifest.json").read_text())
    assert doc["count"] == 8 and doc["seed"] == 1 and doc["max_blur"] == 4

    train2, test2 = build_manifest(hr_dir, mask_dir, tmp_path / "b", 8, 2, seed=1, max_blur=4, hr_size=64)
    assert (train.root / "manifest.json").read_bytes() == (train2.root / "manifest.json").read_bytes()
    assert (test.root / "manifest.json").read_bytes() == (test2.root / "manifest.json").read_bytes()
    e = train.entries[0]
    assert train.path(e, "hrb").read_bytes() == train2.path(e, "hrb").read_bytes()

    loaded = DatasetManifest.load(train.root / "manifest.json")
    assert loaded.ids == train.ids
    s = loaded.load_sample(loaded.entries[0])
    assert s.lr.shape == (8, 8, 3) and s.mask.shape == (64, 64, 1)


def test_build_manifest_errors(toy_dirs, tmp_path):
    hr_dir, mask_dir = toy_dirs
    with pytest.raises(DatasetError, match="insufficient images"):
        build_manifest(hr_dir, mask_dir, tmp_path / "x", 9, 2, seed=1, hr_size=64)
    with pytest.raises(DatasetError, match="missing mask"):
        build_manifest(hr_dir, tmp_path / "nowhere", tmp_path / "x", 1, 1, hr_size=64)

    partial = tmp_path / "partial"
    partial.mkdir()
    for p in sorted(mask_dir.glob("*.png"))[:-1]:
        (partial / p.name).write_bytes(p.read_bytes())
    with pytest.raises(DatasetError, match="missing mask for"):
        build_manifest(hr_dir, partial, tmp_path / "x", 1, 1, hr_size=64)


def test_manifest_validate_detects_missing_file(toy_dirs, tmp_path):
    train, _ = build_manifest(*toy_dirs, tmp_path / "v", 2, 1, seed=0, max_blur=2, hr_size=64)
    train.path(train.entries[0], "lr").unlink()
    with pytest.raises(DatasetError, match="missing file"):
        train.validate()


def test_toy_dataset_masks_are_binary(tmp_path):
    hr_dir, mask_dir = make_toy_dataset(tmp_path, n=2, size=64, seed=5)
    m = load_image(next(mask_dir.glob("*.png")), gray=True)
    assert set(np.unique(m)) <= {0.0, 1.0}
    assert load_image(next(hr_dir.glob("*.png"))).shape == (64, 64, 3)
