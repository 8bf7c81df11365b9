import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from skimage.metrics import structural_similarity

from mambax.errors import DimensionError
from mambax.pipeline.metrics import cc, ergas, evaluate, mse, per_band_rmse, psnr, sam, ssim


def test_identity_pair(rng):
    hr = rng.uniform(0, 1, (3, 16, 16))
    r = evaluate(hr, hr, 2)
    assert (r.psnr, r.ssim, r.sam, r.ergas, r.cc) == (100.0, 1.0, 0.0, 0.0, 1.0)
    assert r.per_band_rmse.shape == (3,) and not r.per_band_rmse.any()


def test_constant_offset(rng):
    hr = rng.uniform(0.1, 0.8, (3, 16, 16))
    sr = hr + 0.1
    assert mse(sr, hr) == pytest.approx(0.01, rel=1e-12)
    assert psnr(sr, hr) == pytest.approx(20.0, abs=1e-9)
    assert sam(2.0 * hr, hr) == pytest.approx(0.0, abs=1e-12)


def test_psnr_matches_brute_force_mse(rng):
    a, b = rng.uniform(0, 1, (2, 5, 5)), rng.uniform(0, 1, (2, 5, 5))
    total, n = 0.0, 0
    for c in range(2):
        for i in range(5):
            for j in range(5):
                total += (a[c, i, j] - b[c, i, j]) ** 2
                n += 1
    assert psnr(a, b) == pytest.approx(-10 * np.log10(total / n), rel=1e-12)


def test_anticorrelated_bands(rng):
    hr = rng.uniform(0, 1, (3, 8, 8))
    assert cc(1.0 - hr, hr) == pytest.approx(-1.0, abs=1e-12)


def test_cc_constant_band_convention():
    hr = np.stack([np.full((4, 4), 0.3), np.arange(16.0).reshape(4, 4) / 16])
    assert cc(hr, hr) == 1.0
    other = hr.copy()
    other[0] = 0.4
    assert cc(other, hr) == pytest.approx(0.5)


@pytest.mark.parametrize("size", [11, 16, 23])
def test_ssim_matches_skimage(rng, size):
    hr = rng.uniform(0, 1, (3, size, size))
    sr = np.clip(hr + rng.normal(0, 0.1, hr.shape), 0, 1)
    ref = np.mean(
        [
            structural_similarity(s, h, data_range=1.0, gaussian_weights=True, sigma=1.5, use_sample_covariance=False)
            for s, h in zip(sr, hr)
        ]
    )
    # skimage averages over the full padded image; ours over the valid region, so compare the valid interior
    pad = 5
    ours_valid = ssim(sr, hr)
    ref_valid = np.mean(
        [
            structural_similarity(
                s, h, data_range=1.0, gaussian_weights=True, sigma=1.5, use_sample_covariance=False, full=True
            )[1][pad:-pad, pad:-pad].mean()
            for s, h in zip(sr, hr)
        ]
    )
    assert ours_valid == pytest.approx(ref_valid, abs=1e-10)
    assert abs(ours_valid - ref) < 0.05


def test_ssim_too_small():
    with pytest.raises(DimensionError):
        ssim(np.zeros((1, 8, 8)), np.zeros((1, 8, 8)))


def test_ergas_closed_form(rng):
    hr = rng.uniform(0.2, 0.8, (4, 8, 8))
    sr = hr + 0.05
    rmse = per_band_rmse(sr, hr)
    np.testing.assert_allclose(rmse, 0.05, rtol=1e-12)
    expect = 100 / 4 * np.sqrt(np.mean(0.05**2 / hr.reshape(4, -1).mean(axis=1) ** 2))
    assert ergas(sr, hr, 4) == pytest.approx(expect, rel=1e-12)


def test_shape_mismatch():
    with pytest.raises(DimensionError):
        evaluate(np.zeros((2, 16, 16)), np.zeros((3, 16, 16)))


@given(st.integers(0, 10_000))
def test_sam_invariant_to_per_pixel_scaling(seed):
    r = np.random.default_rng(seed)
    a, b = r.uniform(0.01, 1, (5, 4, 4)), r.uniform(0.01, 1, (5, 4, 4))
    k = r.uniform(0.1, 10, (1, 4, 4))
    assert sam(a * k, b) == pytest.approx(sam(a, b), abs=1e-9)
    assert sam(a, b) >= 0


@given(st.integers(0, 10_000))
def test_ergas_zero_iff_rmse_zero(seed):
    r = np.random.default_rng(seed)
    hr = r.uniform(0.1, 1, (3, 4, 4))
    sr = hr.copy()
    assert ergas(sr, hr) == 0.0
    sr[r.integers(3), r.integers(4), r.integers(4)] += 0.01
    assert ergas(sr, hr) > 0 and per_band_rmse(sr, hr).any()


def test_sam_skips_zero_pixels():
    a = np.zeros((3, 2, 2))
    b = np.ones((3, 2, 2))
    a[:, 0, 0] = 1.0
    assert sam(a, b) == pytest.approx(0.0, abs=1e-12)


def test_sam_matches_arccos_reference(rng):
    a, b = rng.uniform(0.01, 1, (6, 5, 5)), rng.uniform(0.01, 1, (6, 5, 5))
    x, y = a.reshape(6, -1), b.reshape(6, -1)
    cos = (x * y).sum(0) / np.linalg.norm(x, axis=0) / np.linalg.norm(y, axis=0)
    assert sam(a, b) == pytest.approx(np.degrees(np.arccos(cos)).mean(), rel=1e-9)
