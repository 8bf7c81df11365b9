"""Desk-scale super-resolution pipeline: degradation, data, model, training, metrics."""

from .data import ImagePair, load_dataset, read_raster, synthesize_dataset, write_raster
from .degrade import degrade_mfsr, degrade_sisr
from .metrics import MetricsReport, evaluate
from .model import MambaX
from .train import Adam, train

__all__ = [
    "Adam",
    "ImagePair",
    "MambaX",
    "MetricsReport",
    "degrade_mfsr",
    "degrade_sisr",
    "evaluate",
    "load_dataset",
    "read_raster",
    "synthesize_dataset",
    "train",
    "write_raster",
]
