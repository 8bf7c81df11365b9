"""Synthetic observation models: blur + decimation + noise for the LR image,
spectral response weighting for the panchromatic auxiliary."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from ..errors import ConfigError, DimensionError
from .data import ImagePair


def _check_hr(hr: np.ndarray, scale: int) -> np.ndarray:
    hr = np.asarray(hr, dtype=np.float64)
    if hr.ndim != 3:
        raise DimensionError(f"HR image must be (C, H, W), got {hr.shape}")
    if scale < 1 or hr.shape[1] % scale or hr.shape[2] % scale:
        raise DimensionError(f"HR spatial size {hr.shape[1:]} not divisible by scale {scale}")
    return hr


def box_decimate(img: np.ndarray, scale: int) -> np.ndarray:
    """Average non-overlapping scale x scale blocks."""
    c, h, w = img.shape
    return img.reshape(c, h // scale, scale, w // scale, scale).mean(axis=(2, 4))


def spatial_degrade(hr: np.ndarray, scale: int, blur_sigma: float) -> np.ndarray:
    out = hr
    if blur_sigma > 0:
        out = gaussian_filter(hr, sigma=(0.0, blur_sigma, blur_sigma), mode="reflect")
    return box_decimate(out, scale) if scale > 1 else out.copy()


def degrade_sisr(
    hr: np.ndarray, scale: int, blur_sigma: float = 1.0, noise_sigma: float = 0.0, seed: int = 0, source: str = ""
) -> ImagePair:
    hr = _check_hr(hr, scale)
    lr = spatial_degrade(hr, scale, blur_sigma)
    if noise_sigma > 0:
        lr = lr + np.random.default_rng(seed).normal(0.0, noise_sigma, size=lr.shape)
    lr = np.clip(lr, 0.0, 1.0)
    return ImagePair(hr=hr, lr=lr, aux=None, scale=scale, meta={"source": source, "bands": hr.shape[0], "seed": seed})


def check_srf(srf: Sequence[float] | None, bands: int) -> np.ndarray:
    if srf is None:
        return np.full(bands, 1.0 / bands)
    srf = np.asarray(srf, dtype=np.float64)
    if srf.shape != (bands,):
        raise ConfigError(f"srf has {srf.size} weights for {bands} bands")
    if abs(srf.sum() - 1.0) > 1e-9:
        raise ConfigError(f"srf weights must sum to 1 (got {srf.sum():.12g})")
    return srf


def degrade_mfsr(
    hr: np.ndarray,
    scale: int,
    srf: Sequence[float] | None = None,
    seed: int = 0,
    blur_sigma: float = 1.0,
    noise_sigma: float = 0.0,
    source: str = "",
) -> ImagePair:
    """LR multispectral input plus a full-resolution panchromatic auxiliary."""
    hr = _check_hr(hr, scale)
    weights = check_srf(srf, hr.shape[0])
    pair = degrade_sisr(hr, scale, blur_sigma, noise_sigma, seed, source)
    pan = np.tensordot(weights, hr, axes=(0, 0))[None]
    if noise_sigma > 0:
        pan = pan + np.random.default_rng(seed + 1).normal(0.0, noise_sigma, size=pan.shape)
    pair.aux = np.clip(pan, 0.0, 1.0)
    return pair
