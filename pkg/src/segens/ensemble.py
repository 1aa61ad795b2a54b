"""Sum-rule fusion of member probability maps and ensemble scoring."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .metrics import MODES, MetricReport, evaluate_dataset
from .raster import load_mask, load_raster, resize_nearest

RASTER_EXT = ".segf"
MASK_EXT = ".pgm"


class MissingMemberError(FileNotFoundError):
    def __init__(self, image_id, source_id):
        super().__init__(f"member {source_id!r} has no prediction for image {image_id!r}")
        self.image_id = image_id
        self.source_id = source_id


@dataclass(frozen=True)
class Member:
    source: str
    weight: float = 1.0


@dataclass(frozen=True)
class EnsembleSpec:
    members: tuple
    threshold: float = 0.5
    mode: str = "mean_per_image"

    def __post_init__(self):
        if not self.members:
            raise ValueError("ensemble needs at least one member")
        for m in self.members:
            if not (m.weight >= 0 and np.isfinite(m.weight)):
                raise ValueError(f"member {m.source!r} has invalid weight {m.weight}")
        if not sum(m.weight for m in self.members) > 0:
            raise ValueError("ensemble weights must have a positive sum")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")

    @property
    def weights(self):
        return [m.weight for m in self.members]

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "EnsembleSpec":
        try:
            raw = d["members"]
        except KeyError:
            raise ValueError("ensemble spec needs a 'members' list") from None
        members = []
        for i, m in enumerate(raw):
            if "dir" not in m:
                raise ValueError(f"members[{i}]: missing 'dir'")
            path = m["dir"]
            if base_dir is not None and not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            members.append(Member(path, float(m.get("weight", 1.0))))
        return cls(tuple(members), float(d.get("threshold", 0.5)), d.get("mode", "mean_per_image"))

    @classmethod
    def load(cls, path) -> "EnsembleSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh), base_dir=os.path.dirname(os.path.abspath(path)))

    def to_dict(self) -> dict:
        return {
            "members": [{"dir": m.source, "weight": m.weight} for m in self.members],
            "threshold": self.threshold,
            "mode": self.mode,
        }


def normalized_weights(weights) -> list:
    """Weights divided by their sum, each correctly rounded.

    The division is done in exact rational arithmetic, so scaling all
    weights by a common factor (whenever the scaled values are exact) gives
    bitwise-identical results.
    """
    exact = [Fraction(float(w)) for w in weights]
    if any(w < 0 for w in exact):
        raise ValueError("weights must be nonnegative")
    total = sum(exact)
    if total <= 0:
        raise ValueError("weights must have a positive sum")
    return [float(w / total) for w in exact]


def fuse(maps, weights=None) -> np.ndarray:
    """Weighted mean of equally-shaped probability maps.

    Members are accumulated strictly left to right so the result is
    bit-reproducible for a given member order.
    """
    maps = [np.asarray(m, dtype=np.float64) for m in maps]
    if not maps:
        raise ValueError("nothing to fuse")
    if weights is None:
        weights = [1.0] * len(maps)
    if len(weights) != len(maps):
        raise ValueError(f"{len(maps)} maps but {len(weights)} weights")
    shape = maps[0].shape
    for i, m in enumerate(maps):
        if m.shape != shape:
            raise ValueError(f"map {i} has shape {m.shape}, expected {shape}")
    wn = normalized_weights(weights)
    out = wn[0] * maps[0]
    for w, m in zip(wn[1:], maps[1:]):
        out = out + w * m
    return out


def binarize(pmap, threshold: float = 0.5) -> np.ndarray:
    """Hard labels from a probability map.

    One- and two-channel maps mark foreground where the foreground
    probability (last channel) is >= `threshold`; wider maps use argmax with
    ties going to the lowest class index.
    """
    pmap = np.asarray(pmap)
    if pmap.ndim != 3:
        raise ValueError(f"expected (H, W, K) map, got {pmap.shape}")
    if pmap.shape[2] <= 2:
        return (pmap[..., -1] >= threshold).astype(np.int64)
    return np.argmax(pmap, axis=2).astype(np.int64)


def list_ids(directory, ext) -> list:
    return sorted(os.path.splitext(f)[0] for f in os.listdir(directory) if f.endswith(ext))


def fuse_image(spec: EnsembleSpec, image_id: str) -> np.ndarray:
    maps = []
    for m in spec.members:
        path = os.path.join(m.source, image_id + RASTER_EXT)
        if not os.path.exists(path):
            raise MissingMemberError(image_id, m.source)
        maps.append(load_raster(path))
    return fuse(maps, spec.weights)


def evaluate_ensemble(spec: EnsembleSpec, truth_dir, mode=None, num_classes: int = 2) -> MetricReport:
    """Fuse, resize back to the truth size, binarize and score every image.

    Image ids are the stems of the ``.pgm`` masks in `truth_dir`.
    """
    mode = spec.mode if mode is None else mode
    ids = list_ids(truth_dir, MASK_EXT)
    if not ids:
        raise ValueError(f"no {MASK_EXT} masks in {truth_dir}")
    pairs = []
    for image_id in ids:
        truth = load_mask(os.path.join(truth_dir, image_id + MASK_EXT), num_classes)
        fused = resize_nearest(fuse_image(spec, image_id), *truth.shape)
        pairs.append((binarize(fused, spec.threshold), truth))
    return evaluate_dataset(pairs, mode, ids)
