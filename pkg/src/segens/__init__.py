"""Segmentation losses, SSIM, Dice/IoU evaluation and sum-rule ensembles."""

from .ensemble import EnsembleSpec, Member, binarize, evaluate_ensemble, fuse
from .losses import LOSSES, LossParams, LossResult, compute_loss
from .metrics import ConfusionCounts, MetricReport, confusion, dice, evaluate_dataset, iou
from .raster import one_hot, read_mask_pgm, read_raster, resize_nearest, write_mask_pgm, write_raster
from .ssim import SsimParams, ssim_index, ssim_loss

__version__ = "0.1.0"

__all__ = [
    "LOSSES",
    "ConfusionCounts",
    "EnsembleSpec",
    "LossParams",
    "LossResult",
    "Member",
    "MetricReport",
    "SsimParams",
    "binarize",
    "compute_loss",
    "confusion",
    "dice",
    "evaluate_dataset",
    "evaluate_ensemble",
    "fuse",
    "iou",
    "one_hot",
    "read_mask_pgm",
    "read_raster",
    "resize_nearest",
    "ssim_index",
    "ssim_loss",
    "write_mask_pgm",
    "write_raster",
]
