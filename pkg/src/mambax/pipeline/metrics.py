"""Reconstruction quality metrics for (C, H, W) images in [0, 1]."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import fftconvolve

from ..errors import DimensionError

PSNR_CAP = 100.0


@dataclass
class MetricsReport:
    psnr: float
    ssim: float
    sam: float
    ergas: float
    cc: float
    per_band_rmse: np.ndarray

    def row(self) -> dict[str, float]:
        d = asdict(self)
        d.pop("per_band_rmse")
        return d


def _pair(sr, hr) -> tuple[np.ndarray, np.ndarray]:
    sr, hr = np.asarray(getattr(sr, "data", sr), float), np.asarray(getattr(hr, "data", hr), float)
    if sr.shape != hr.shape:
        raise DimensionError(f"metric inputs differ in shape: {sr.shape} vs {hr.shape}")
    if sr.ndim != 3:
        raise DimensionError(f"metric inputs must be (C, H, W), got {sr.shape}")
    return sr, hr


def mse(sr, hr) -> float:
    sr, hr = _pair(sr, hr)
    return float(np.mean((sr - hr) ** 2))


def psnr(sr, hr) -> float:
    err = mse(sr, hr)
    if err == 0.0:
        return PSNR_CAP
    return float(min(PSNR_CAP, -10.0 * np.log10(err)))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(sr, hr, data_range: float = 1.0, k1: float = 0.01, k2: float = 0.03) -> float:
    """Band-averaged SSIM with an 11x11 Gaussian window (sigma 1.5), valid region only."""
    sr, hr = _pair(sr, hr)
    win = gaussian_window()
    if min(sr.shape[1:]) < win.shape[0]:
        raise DimensionError(f"SSIM needs at least {win.shape[0]} pixels per side, got {sr.shape[1:]}")
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    scores = []
    for x, y in zip(sr, hr):
        f = lambda a: fftconvolve(a, win, mode="valid")  # noqa: E731
        mx, my = f(x), f(y)
        sxx = f(x * x) - mx * mx
        syy = f(y * y) - my * my
        sxy = f(x * y) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))


def sam(sr, hr) -> float:
    """Mean per-pixel spectral angle in degrees; pixels with a zero spectrum are skipped."""
    sr, hr = _pair(sr, hr)
    a = sr.reshape(sr.shape[0], -1)
    b = hr.reshape(hr.shape[0], -1)
    na, nb = np.linalg.norm(a, axis=0), np.linalg.norm(b, axis=0)
    ok = (na > 0) & (nb > 0)
    if not ok.any():
        return 0.0
    ua, ub = a[:, ok] / na[ok], b[:, ok] / nb[ok]
    # half-angle form: exact 0 for parallel spectra, no arccos cancellation near 1
    ang = 2.0 * np.arctan2(np.linalg.norm(ua - ub, axis=0), np.linalg.norm(ua + ub, axis=0))
    return float(np.degrees(ang).mean())


def per_band_rmse(sr, hr) -> np.ndarray:
    sr, hr = _pair(sr, hr)
    return np.sqrt(((sr - hr) ** 2).reshape(sr.shape[0], -1).mean(axis=1))


def ergas(sr, hr, scale: int = 1) -> float:
    sr, hr = _pair(sr, hr)
    rmse = per_band_rmse(sr, hr)
    mu = hr.reshape(hr.shape[0], -1).mean(axis=1)
    ratio = np.where(rmse == 0, 0.0, rmse**2 / np.maximum(mu**2, 1e-24))
    return float(100.0 / scale * np.sqrt(ratio.mean()))


def cc(sr, hr) -> float:
    """Mean per-band Pearson correlation.

    Zero-variance bands count as 1 when both bands are constant and equal,
    otherwise 0.
    """
    sr, hr = _pair(sr, hr)
    vals = []
    for x, y in zip(sr.reshape(sr.shape[0], -1), hr.reshape(hr.shape[0], -1)):
        xc, yc = x - x.mean(), y - y.mean()
        sx, sy = np.sqrt((xc * xc).sum()), np.sqrt((yc * yc).sum())
        if sx == 0 or sy == 0:
            vals.append(1.0 if sx == 0 and sy == 0 and np.array_equal(x, y) else 0.0)
        else:
            vals.append(float((xc * yc).sum() / (sx * sy)))
    return float(np.mean(vals))


def evaluate(sr, hr, scale: int = 1) -> MetricsReport:
    sr, hr = _pair(sr, hr)
    return MetricsReport(
        psnr=psnr(sr, hr),
        ssim=ssim(sr, hr),
        sam=sam(sr, hr),
        ergas=ergas(sr, hr, scale),
        cc=cc(sr, hr),
        per_band_rmse=per_band_rmse(sr, hr),
    )
