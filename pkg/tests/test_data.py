import hashlib
import json

import numpy as np
import pytest
from PIL import Image

from mambax.errors import ConfigError, DataError, DimensionError
from mambax.pipeline.data import ImagePair, load_dataset, read_raster, spectral_texture, synthesize_dataset, write_raster
from mambax.pipeline.degrade import box_decimate, degrade_mfsr, degrade_sisr


# -- degradation --------------------------------------------------------------------
def test_sisr_identity_when_no_degradation(rng):
    hr = rng.uniform(0, 1, (3, 8, 8))
    pair = degrade_sisr(hr, 1, blur_sigma=0.0, noise_sigma=0.0)
    np.testing.assert_array_equal(pair.lr, hr)


def test_blur_preserves_constants():
    hr = np.full((2, 8, 8), 0.6)
    np.testing.assert_allclose(degrade_sisr(hr, 2, blur_sigma=1.7).lr, 0.6, atol=1e-15)


def test_checkerboard_box_decimation():
    hr = np.indices((4, 4)).sum(axis=0)[None] % 2 * 1.0
    hr[0, 0, 0] = 0.6
    lr = degrade_sisr(hr, 2, blur_sigma=0.0).lr
    expect = np.array([[[(0.6 + 1 + 1 + 0) / 4, 0.5], [0.5, 0.5]]])
    np.testing.assert_allclose(lr, expect, atol=1e-15)
    np.testing.assert_array_equal(box_decimate(hr, 2), lr)


def test_noise_is_seeded_and_clipped(rng):
    hr = rng.uniform(0, 1, (2, 8, 8))
    a = degrade_sisr(hr, 2, noise_sigma=0.3, seed=5).lr
    assert np.array_equal(a, degrade_sisr(hr, 2, noise_sigma=0.3, seed=5).lr)
    assert not np.array_equal(a, degrade_sisr(hr, 2, noise_sigma=0.3, seed=6).lr)
    assert a.min() >= 0 and a.max() <= 1


def test_non_divisible_dims(rng):
    with pytest.raises(DimensionError):
        degrade_sisr(rng.uniform(0, 1, (2, 9, 8)), 2)


def test_pan_uniform_srf_is_band_mean():
    vals = np.array([0.1, 0.5, 0.9])
    hr = np.broadcast_to(vals[:, None, None], (3, 4, 4)).copy()
    np.testing.assert_allclose(degrade_mfsr(hr, 2).aux, vals.mean(), atol=1e-15)


def test_pan_one_hot_and_weighted(rng):
    hr = rng.uniform(0, 1, (2, 4, 4))
    np.testing.assert_array_equal(degrade_mfsr(hr, 2, srf=[0.0, 1.0]).aux[0], hr[1])
    pan = degrade_mfsr(hr, 2, srf=[0.3, 0.7]).aux[0]
    np.testing.assert_allclose(pan, 0.3 * hr[0] + 0.7 * hr[1], atol=1e-15)


def test_srf_errors(rng):
    hr = rng.uniform(0, 1, (2, 4, 4))
    with pytest.raises(ConfigError):
        degrade_mfsr(hr, 2, srf=[1.0])
    with pytest.raises(ConfigError):
        degrade_mfsr(hr, 2, srf=[0.5, 0.5 + 1e-8])
    degrade_mfsr(hr, 2, srf=[0.5, 0.5 + 1e-10])


# -- image pairs and files -------------------------------------------------------------
def test_pair_invariants(rng):
    with pytest.raises(DimensionError):
        ImagePair(rng.uniform(size=(2, 8, 8)), rng.uniform(size=(2, 3, 4)), scale=2)
    pair = degrade_mfsr(rng.uniform(size=(2, 8, 8)), 2)
    crop = pair.crop(2, 4, 4)
    assert crop.hr.shape == (2, 4, 4) and crop.lr.shape == (2, 2, 2) and crop.aux.shape == (1, 4, 4)
    np.testing.assert_array_equal(crop.lr, pair.lr[:, 1:3, 2:4])


def test_raster_round_trip_and_header(tmp_path, rng):
    arr = rng.uniform(size=(3, 5, 7)).astype(np.float32)
    path = tmp_path / "x.nspc"
    write_raster(path, arr)
    raw = path.read_bytes()
    assert raw[:4] == b"NSPC" and len(raw) == 16 + arr.size * 4
    assert np.frombuffer(raw[4:16], "<u4").tolist() == [3, 5, 7]
    np.testing.assert_array_equal(read_raster(path), arr)


def test_raster_errors(tmp_path):
    bad = tmp_path / "bad.nspc"
    bad.write_bytes(b"XXXX" + bytes(12))
    with pytest.raises(DataError):
        read_raster(bad)
    short = tmp_path / "short.nspc"
    short.write_bytes(b"NSPC" + np.array([1, 2, 2], "<u4").tobytes() + bytes(4))
    with pytest.raises(DataError):
        read_raster(short)
    with pytest.raises(DataError):
        read_raster(tmp_path / "missing.nspc")


def test_png_reader(tmp_path, rng):
    rgb = (rng.uniform(size=(4, 5, 3)) * 255).astype(np.uint8)
    Image.fromarray(rgb).save(tmp_path / "a.png")
    arr = read_raster(tmp_path / "a.png")
    assert arr.shape == (3, 4, 5)
    np.testing.assert_allclose(arr, rgb.transpose(2, 0, 1) / 255.0)


def test_spectral_texture_range(rng):
    img = spectral_texture(rng, bands=31, size=32)
    assert img.shape == (31, 32, 32) and img.min() >= 0 and img.max() <= 1
    # neighbouring bands are strongly correlated
    assert np.corrcoef(img[10].ravel(), img[11].ravel())[0, 1] > 0.9


def _digest(root):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(root.rglob("*")) if p.is_file()}


def test_synthesize_deterministic_and_loadable(tmp_path):
    kw = dict(bands=4, size=16, n_train=3, n_test=2, scale=2, blur_sigma=1.0, noise_sigma=0.01, srf=None, seed=11)
    synthesize_dataset(tmp_path / "a", **kw)
    synthesize_dataset(tmp_path / "b", **kw)
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["bands"] == 4 and len(manifest["splits"]["train"]) == 3
    pairs = load_dataset(tmp_path / "a", "test")
    assert len(pairs) == 2 and pairs[0].lr.shape == (4, 8, 8) and pairs[0].aux.shape == (1, 16, 16)
    assert load_dataset(tmp_path / "a", "train", with_aux=False)[0].aux is None
    with pytest.raises(DataError):
        load_dataset(tmp_path / "a", "val")
    with pytest.raises(DataError):
        load_dataset(tmp_path / "nowhere")
