import numpy as np
import pytest
import torch
from dataclasses import replace
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from fakefill.config import MaskSpec
from fakefill.data import (
    apply_mask,
    build_manifest,
    center_mask,
    dataset_mean_rgb,
    free_form_mask,
    load_image,
    load_manifest,
    save_manifest,
    split_sizes,
    to_uint8,
    write_toy_dataset,
)
from fakefill.errors import DataError

# Accepted-coverage mean over seeds 0..999 at resolution 128 with default
# spec parameters, measured once and pinned as a regression target.
MEASURED_MEAN_COVERAGE = 0.2407


def test_split_sizes_30k():
    assert split_sizes(30_000, 0.1) == (27_000, 3_000)


def test_split_sizes_no_val():
    assert split_sizes(10, 0.0) == (10, 0)


def test_build_manifest_deterministic_and_disjoint(tmp_path):
    write_toy_dataset(tmp_path, 10, resolution=16, seed=0)
    a = build_manifest(tmp_path, 0.3, seed=42)
    b = build_manifest(tmp_path, 0.3, seed=42)
    assert a.entries == b.entries
    assert len(a.ids("train")) == 7 and len(a.ids("val")) == 3
    assert not set(a.ids("train")) & set(a.ids("val"))
    c = build_manifest(tmp_path, 0.3, seed=43)
    assert c.entries != a.entries  # different seed, different split


def test_build_manifest_zero_val(tmp_path):
    write_toy_dataset(tmp_path, 10, resolution=16, seed=0)
    m = build_manifest(tmp_path, 0.0, seed=0)
    assert len(m.ids("train")) == 10 and len(m.ids("val")) == 0


def test_build_manifest_empty_dir(tmp_path):
    with pytest.raises(DataError, match="no images found"):
        build_manifest(tmp_path, 0.1, seed=0)


def test_build_manifest_skips_unreadable(tmp_path):
    write_toy_dataset(tmp_path, 3, resolution=16, seed=0)
    (tmp_path / "broken.png").write_bytes(b"this is not a png")
    m = build_manifest(tmp_path, 0.0, seed=0)
    assert m.skipped == ["broken.png"]
    assert len(m.entries) == 3


def test_manifest_tsv_roundtrip(tmp_path):
    write_toy_dataset(tmp_path / "imgs", 4, resolution=16, seed=0)
    m = build_manifest(tmp_path / "imgs", 0.5, seed=1)
    path = tmp_path / "manifest.tsv"
    save_manifest(m, path)
    text = path.read_text()
    assert all("\t" in line for line in text.strip().splitlines())
    loaded = load_manifest(path, tmp_path / "imgs")
    assert loaded.entries == m.entries


def test_load_manifest_malformed(tmp_path):
    p = tmp_path / "bad.tsv"
    p.write_text("a.png\tnot_a_split\n")
    with pytest.raises(DataError, match="malformed manifest line"):
        load_manifest(p, tmp_path)


def test_load_image_resizes(tmp_path):
    arr = (np.random.default_rng(0).uniform(0, 255, (256, 256, 3))).astype(np.uint8)
    p = tmp_path / "big.png"
    Image.fromarray(arr).save(p)
    img = load_image(p, 128)
    assert img.shape == (1, 3, 128, 128)
    assert img.dtype == torch.float32
    assert 0.0 <= float(img.min()) and float(img.max()) <= 1.0


def test_load_image_identity_resolution(tmp_path):
    arr = (np.random.default_rng(1).uniform(0, 255, (128, 128, 3))).astype(np.uint8)
    p = tmp_path / "same.png"
    Image.fromarray(arr).save(p)
    img = load_image(p, 128)
    expected = torch.from_numpy(arr.transpose(2, 0, 1).astype(np.float32) / 255.0)
    assert float((img[0] - expected).abs().max()) <= 1.0 / 255.0


def test_load_image_all_black(tmp_path):
    p = tmp_path / "black.png"
    Image.fromarray(np.zeros((32, 32, 3), np.uint8)).save(p)
    assert float(load_image(p, 32).abs().max()) == 0.0


def test_load_image_grayscale_converts(tmp_path):
    p = tmp_path / "gray.png"
    Image.fromarray(np.full((32, 32), 100, np.uint8), mode="L").save(p)
    img = load_image(p, 32)
    assert img.shape == (1, 3, 32, 32)
    assert torch.equal(img[:, 0], img[:, 1])


def test_load_image_decode_failure(tmp_path):
    p = tmp_path / "junk.png"
    p.write_bytes(b"junk")
    with pytest.raises(DataError, match=str(p)):
        load_image(p, 32)


def test_center_mask_exact_window():
    m = center_mask(128, 64)
    assert m.shape == (1, 1, 128, 128)
    expected = torch.zeros(128, 128)
    expected[32:96, 32:96] = 1.0
    assert torch.equal(m[0, 0], expected)
    assert float(m.mean()) == 0.25


def test_center_mask_full_frame():
    assert float(center_mask(64, 64).mean()) == 1.0


def test_center_mask_flip_symmetry():
    m = center_mask(32, 12)[0, 0]
    assert torch.equal(m, m.flip(0))
    assert torch.equal(m, m.flip(1))


def test_center_mask_errors():
    with pytest.raises(DataError, match="exceeds"):
        center_mask(64, 66)
    with pytest.raises(DataError, match="even"):
        center_mask(64, 15)


def test_free_form_mask_deterministic():
    spec = MaskSpec(mode="free_form", seed=123)
    a = free_form_mask(spec, 128)
    b = free_form_mask(spec, 128)
    assert torch.equal(a, b)
    assert set(torch.unique(a).tolist()) <= {0.0, 1.0}


def test_free_form_mask_coverage_sample():
    lo, hi = MaskSpec().coverage
    for seed in range(50):
        cov = float(free_form_mask(MaskSpec(mode="free_form", seed=seed), 128).mean())
        assert lo <= cov <= hi


def test_free_form_mask_mean_coverage_regression():
    spec = MaskSpec(mode="free_form")
    covs = [float(free_form_mask(replace(spec, seed=s), 128).mean()) for s in range(1000)]
    mean = float(np.mean(covs))
    lo, hi = spec.coverage
    assert abs(mean - (lo + hi) / 2.0) <= 0.05
    assert abs(mean - MEASURED_MEAN_COVERAGE) <= 0.02


def test_free_form_mask_wrong_mode():
    with pytest.raises(DataError, match="free_form"):
        free_form_mask(MaskSpec(mode="center"), 128)


def test_free_form_mask_unreachable_coverage():
    spec = MaskSpec(mode="free_form", coverage=(0.98, 0.99), seed=0)
    with pytest.raises(DataError, match="coverage"):
        free_form_mask(spec, 128, max_tries=5)


def test_apply_mask_identity_and_fill():
    img = torch.rand(2, 3, 16, 16)
    zeros = torch.zeros(2, 1, 16, 16)
    masked, gen_in = apply_mask(img, zeros)
    assert torch.equal(masked, img)
    assert gen_in.shape == (2, 4, 16, 16)
    ones = torch.ones(2, 1, 16, 16)
    masked, _ = apply_mask(img, ones, fill="zeros")
    assert float(masked.abs().max()) == 0.0


def test_apply_mask_coverage_arithmetic():
    img = torch.full((1, 3, 128, 128), 0.8)
    masked, _ = apply_mask(img, center_mask(128, 64))
    assert abs(float(masked.mean()) - 0.8 * 0.75) < 1e-6


def test_apply_mask_dataset_mean_fill():
    img = torch.zeros(1, 3, 8, 8)
    mask = torch.ones(1, 1, 8, 8)
    mean_rgb = torch.tensor([0.2, 0.4, 0.6])
    masked, _ = apply_mask(img, mask, fill="dataset_mean", mean_rgb=mean_rgb)
    assert torch.allclose(masked[0, :, 0, 0], mean_rgb)
    with pytest.raises(DataError, match="mean_rgb"):
        apply_mask(img, mask, fill="dataset_mean")


def test_apply_mask_shape_mismatch():
    with pytest.raises(DataError, match="mask shape"):
        apply_mask(torch.rand(1, 3, 8, 8), torch.zeros(1, 1, 4, 4))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), size=st.sampled_from([8, 16]))
def test_apply_mask_preserves_unmasked_pixels(seed, size):
    rng = np.random.default_rng(seed)
    img = torch.from_numpy(rng.uniform(0, 1, (1, 3, size, size)).astype(np.float32))
    mask = torch.from_numpy((rng.uniform(0, 1, (1, 1, size, size)) > 0.5).astype(np.float32))
    masked, gen_in = apply_mask(img, mask)
    keep = mask[0, 0] == 0.0
    assert torch.equal(masked[0][:, keep], img[0][:, keep])
    assert torch.equal(gen_in[:, 3:4], mask)


def test_dataset_mean_rgb(toy_dataset):
    mean = dataset_mean_rgb(toy_dataset, 32)
    assert mean.shape == (3,)
    assert ((mean > 0) & (mean < 1)).all()


def test_to_uint8_round_half_even():
    # 127.5/255 and 128.5/255 both quantize to 128 under round-half-even.
    vals = torch.tensor([127.5, 128.5, 1.5, 2.5]) / 255.0
    img = vals.reshape(1, 1, 4).expand(3, 1, 4)
    out = to_uint8(img)  # HWC
    assert out[0, :, 0].tolist() == [128, 128, 2, 2]


def test_write_toy_dataset_deterministic(tmp_path):
    a_names = write_toy_dataset(tmp_path / "a", 3, resolution=16, seed=9)
    write_toy_dataset(tmp_path / "b", 3, resolution=16, seed=9)
    for name in a_names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
