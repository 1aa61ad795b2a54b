"""Dice / IoU scoring of hard masks and dataset-level aggregation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

MODES = ("mean_per_image", "pixel_level")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be nonnegative")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.tn + other.tn,
                               self.fp + other.fp, self.fn + other.fn)

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion(pred, truth, positive_class: int = 1) -> ConfusionCounts:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"dimension mismatch: prediction {pred.shape} vs truth {truth.shape}")
    p = pred == positive_class
    t = truth == positive_class
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    return ConfusionCounts(tp, p.size - tp - fp - fn, fp, fn)


def dice(c: ConfusionCounts) -> float:
    """``2TP / (2TP + FP + FN)``; two empty masks score 1."""
    den = 2 * c.tp + c.fp + c.fn
    return 1.0 if den == 0 else 2 * c.tp / den


def iou(c: ConfusionCounts) -> float:
    den = c.tp + c.fp + c.fn
    return 1.0 if den == 0 else c.tp / den


@dataclass
class MetricReport:
    per_image: list = field(default_factory=list)  # (image id, dice, iou)
    aggregate_mode: str = "mean_per_image"
    aggregate_dice: float = 0.0
    aggregate_iou: float = 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["image", "dice", "iou"])
        for image_id, d, j in self.per_image:
            writer.writerow([image_id, f"{d:.6f}", f"{j:.6f}"])
        writer.writerow(["AGGREGATE", f"{self.aggregate_dice:.6f}", f"{self.aggregate_iou:.6f}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, mode: str = "mean_per_image") -> "MetricReport":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["image", "dice", "iou"]:
            raise ValueError("metric CSV must start with the header image,dice,iou")
        if len(rows) < 2 or rows[-1][0] != "AGGREGATE":
            raise ValueError("metric CSV must end with an AGGREGATE row")
        per_image = [(r[0], float(r[1]), float(r[2])) for r in rows[1:-1]]
        return cls(per_image, mode, float(rows[-1][1]), float(rows[-1][2]))


def evaluate_dataset(pairs, mode: str = "mean_per_image", ids=None, positive_class: int = 1) -> MetricReport:
    """Score ``(prediction, truth)`` mask pairs.

    Parameters
    ----------
    pairs : sequence of (pred, truth) label masks, each pair dimension-matched
    mode : ``"mean_per_image"`` averages the per-image scores;
        ``"pixel_level"`` scores the confusion counts summed over all images
    ids : optional image identifiers, defaults to ``"0", "1", ...``
    """
    if mode not in MODES:
        raise ValueError(f"unknown aggregation mode {mode!r}; expected one of {MODES}")
    pairs = list(pairs)
    if not pairs:
        raise ValueError("cannot evaluate an empty dataset")
    ids = [str(i) for i in range(len(pairs))] if ids is None else [str(i) for i in ids]
    if len(ids) != len(pairs):
        raise ValueError("ids and pairs differ in length")
    counts = [confusion(p, t, positive_class) for p, t in pairs]
    per_image = [(i, dice(c), iou(c)) for i, c in zip(ids, counts)]
    if mode == "mean_per_image":
        # fsum is exactly rounded, so the mean does not depend on image order
        agg_d = math.fsum(d for _, d, _ in per_image) / len(per_image)
        agg_j = math.fsum(j for _, _, j in per_image) / len(per_image)
    else:
        total = sum(counts, ConfusionCounts())
        agg_d, agg_j = dice(total), iou(total)
    return MetricReport(per_image, mode, agg_d, agg_j)
