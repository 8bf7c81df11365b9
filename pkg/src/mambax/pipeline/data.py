"""Image pairs, the procedural spectral-texture dataset and raster file IO.

Raster layout: 16-byte header (b"NSPC", u32 C, u32 H, u32 W, little endian)
followed by planar float32 little-endian samples.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..errors import DataError, DimensionError

MAGIC = b"NSPC"
_HEADER = struct.Struct("<4sIII")


@dataclass
class ImagePair:
    hr: np.ndarray  # (C, H, W) in [0, 1]
    lr: np.ndarray  # (C, H/s, W/s)
    aux: np.ndarray | None = None  # (1, H, W) panchromatic
    scale: int = 2
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        c, h, w = self.hr.shape
        if self.lr.shape != (c, h // self.scale, w // self.scale) or h % self.scale or w % self.scale:
            raise DimensionError(f"LR shape {self.lr.shape} is not HR {self.hr.shape} / {self.scale}")
        if self.aux is not None and self.aux.shape != (1, h, w):
            raise DimensionError(f"auxiliary image must be (1, {h}, {w}), got {self.aux.shape}")

    def crop(self, top: int, left: int, size: int) -> ImagePair:
        """HR-coordinate crop; top/left/size must be multiples of the scale."""
        s = self.scale
        hr = self.hr[:, top : top + size, left : left + size]
        lr = self.lr[:, top // s : (top + size) // s, left // s : (left + size) // s]
        aux = None if self.aux is None else self.aux[:, top : top + size, left : left + size]
        return ImagePair(hr, lr, aux, s, dict(self.meta))


def write_raster(path: str | Path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.ndim != 3:
        raise DimensionError(f"raster must be (C, H, W), got {arr.shape}")
    c, h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, c, h, w))
        fh.write(arr.astype("<f4").tobytes(order="C"))


def read_raster(path: str | Path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".png":
        return read_png(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read raster {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, c, h, w = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    body = raw[_HEADER.size :]
    if len(body) != 4 * c * h * w:
        raise DataError(f"{path}: expected {4 * c * h * w} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(c, h, w).astype(np.float64)


def read_png(path: str | Path) -> np.ndarray:
    from PIL import Image

    try:
        img = np.asarray(Image.open(path))
    except OSError as exc:
        raise DataError(f"cannot read PNG {path}: {exc}") from exc
    if img.ndim == 2:
        img = img[:, :, None]
    if img.shape[2] > 4:
        raise DataError(f"{path}: PNG input limited to 4 bands")
    scale = 65535.0 if img.dtype == np.uint16 else 255.0
    return np.transpose(img, (2, 0, 1)).astype(np.float64) / scale


# -- procedural spectral textures -------------------------------------------------
def spectral_texture(rng: np.random.Generator, bands: int = 31, size: int = 64, n_gabor: int = 5) -> np.ndarray:
    """Band-correlated Gabor patches over a polynomial ramp, scaled into [0.05, 0.95]."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    lam = np.linspace(0.0, 1.0, bands)
    img = np.zeros((bands, size, size))
    for _ in range(n_gabor):
        freq = rng.uniform(2.0, 9.0)
        theta = rng.uniform(0.0, np.pi)
        phase = rng.uniform(0.0, 2 * np.pi)
        cx, cy = rng.uniform(0.1, 0.9, size=2)
        env = rng.uniform(0.15, 0.45)
        rot = (xx - cx) * np.cos(theta) + (yy - cy) * np.sin(theta)
        patch = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * env**2)) * np.cos(2 * np.pi * freq * rot + phase)
        center, width = rng.uniform(0.0, 1.0), rng.uniform(0.15, 0.5)
        signature = rng.uniform(0.5, 1.0) * np.exp(-((lam - center) ** 2) / (2 * width**2))
        img += signature[:, None, None] * patch[None]
    coef = rng.normal(0.0, 0.5, size=5)
    ramp = coef[0] * xx + coef[1] * yy + coef[2] * xx * yy + coef[3] * xx**2 + coef[4] * yy**2
    tilt = rng.uniform(0.3, 1.0) + rng.uniform(-0.5, 0.5) * lam
    img += tilt[:, None, None] * ramp[None]
    lo, hi = img.min(), img.max()
    return 0.05 + 0.9 * (img - lo) / max(hi - lo, 1e-12)


def synthesize_dataset(
    out_dir: str | Path,
    *,
    bands: int,
    size: int,
    n_train: int,
    n_test: int,
    scale: int,
    blur_sigma: float,
    noise_sigma: float,
    srf,
    seed: int,
) -> dict[str, Any]:
    """Write HR/LR/PAN rasters plus manifest.json; returns the manifest."""
    from .degrade import check_srf, degrade_mfsr

    out = Path(out_dir)
    weights = check_srf(srf, bands)
    manifest: dict[str, Any] = {
        "format": "nspc-raster-v1",
        "bands": bands,
        "size": size,
        "scale": scale,
        "blur_sigma": blur_sigma,
        "noise_sigma": noise_sigma,
        "srf": [float(v) for v in weights],
        "seed": seed,
        "splits": {},
    }
    seeds = np.random.SeedSequence(seed).spawn(n_train + n_test)
    try:
        for split, start, count in (("train", 0, n_train), ("test", n_train, n_test)):
            (out / split).mkdir(parents=True, exist_ok=True)
            entries = []
            for k in range(count):
                ss = seeds[start + k]
                img_seed = int(ss.generate_state(1)[0])
                hr = spectral_texture(np.random.default_rng(ss), bands, size)
                pair = degrade_mfsr(hr, scale, weights, img_seed, blur_sigma, noise_sigma)
                stem = f"{split}/{k:04d}"
                for kind, arr in (("hr", pair.hr), ("lr", pair.lr), ("pan", pair.aux)):
                    write_raster(out / f"{stem}_{kind}.nspc", arr)
                entries.append(
                    {
                        "id": f"{split}_{k:04d}",
                        "seed": img_seed,
                        "hr": f"{stem}_hr.nspc",
                        "lr": f"{stem}_lr.nspc",
                        "pan": f"{stem}_pan.nspc",
                    }
                )
            manifest["splits"][split] = entries
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    except OSError as exc:
        raise DataError(f"cannot write dataset under {out}: {exc}") from exc
    return manifest


def load_manifest(root: str | Path) -> dict[str, Any]:
    path = Path(root) / "manifest.json"
    if not path.is_file():
        raise DataError(f"dataset manifest not found: {path}")
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"unreadable manifest {path}: {exc}") from exc


def load_dataset(root: str | Path, split: str = "train", with_aux: bool = True) -> list[ImagePair]:
    root = Path(root)
    manifest = load_manifest(root)
    if split not in manifest.get("splits", {}):
        raise DataError(f"{root}: no split {split!r} in manifest")
    pairs = []
    for entry in manifest["splits"][split]:
        hr = read_raster(root / entry["hr"])
        lr = read_raster(root / entry["lr"])
        aux = read_raster(root / entry["pan"]) if with_aux and entry.get("pan") else None
        pairs.append(
            ImagePair(hr, lr, aux, int(manifest["scale"]), {"source": entry["id"], "bands": hr.shape[0]})
        )
    return pairs
