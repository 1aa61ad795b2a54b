"""Loss-diversity ensemble benchmark on synthetic data.

Trains one network per entry of a loss recipe (optionally with randomly
drawn activations), fuses their test-set probability maps with the sum
rule and scores every member and the fused ensemble.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .ensemble import binarize, fuse
from .metrics import evaluate_dataset
from .nnet import FcnModel, TrainConfig, default_pool, stochastic_select, synth_dataset, train
from .raster import save_mask, save_raster

log = logging.getLogger(__name__)

DEFAULT_RECIPE = ("gd", "gd", "tversky", "tversky", "comb1", "comb1", "comb2", "comb2", "comb3", "comb3")


@dataclass(frozen=True)
class BenchConfig:
    recipe: tuple = DEFAULT_RECIPE
    members: int = len(DEFAULT_RECIPE)
    n_train: int = 100
    n_test: int = 20
    height: int = 64
    width: int = 64
    seed: int = 42
    stochastic: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)
    mode: str = "mean_per_image"

    def __post_init__(self):
        object.__setattr__(self, "recipe", tuple(self.recipe))
        if self.members != len(self.recipe):
            raise ValueError(f"members: {self.members} does not match recipe size {len(self.recipe)}")
        if not self.recipe:
            raise ValueError("recipe: needs at least one loss kind")
        for kind in self.recipe:
            TrainConfig(loss=kind)
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("n_train/n_test: must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown bench fields: {sorted(unknown)}")
        if "recipe" in d and "members" not in d:
            d["members"] = len(d["recipe"])
        if "train" in d:
            d["train"] = TrainConfig.from_dict(d["train"])
        return cls(**d)


@dataclass
class MemberResult:
    name: str
    loss: str
    activations: list
    model: FcnModel
    predictions: list
    dice: float
    iou: float
    history: object = None


@dataclass
class BenchResult:
    members: list
    ensemble_dice: float
    ensemble_iou: float
    fused: list
    test: list

    @property
    def member_dice(self):
        return np.array([m.dice for m in self.members])

    def table_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "loss", "activations", "dice", "iou"])
        for m in self.members:
            w.writerow([m.name, m.loss, "+".join(m.activations), f"{m.dice:.6f}", f"{m.iou:.6f}"])
        w.writerow(["ENSEMBLE", "+".join(m.loss for m in self.members), "", f"{self.ensemble_dice:.6f}",
                    f"{self.ensemble_iou:.6f}"])
        return buf.getvalue()


def member_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _score(preds, masks, mode):
    report = evaluate_dataset([(binarize(p), m) for p, m in zip(preds, masks)], mode)
    return report.aggregate_dice, report.aggregate_iou


def train_member(cfg: BenchConfig, index: int, trainset, testset, threads: int = 1) -> MemberResult:
    kind = cfg.recipe[index]
    s = member_seed(cfg.seed, index)
    acts = stochastic_select(default_pool(), s) if cfg.stochastic else None
    model = FcnModel(in_channels=1, num_classes=2, activations=acts, seed=s)
    model, hist = train(model, trainset, replace(cfg.train, loss=kind, seed=s))
    images = [im for im, _ in testset]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            preds = list(pool.map(model.forward, images))
    else:
        preds = model.predict(images)
    # score what would be read back from SEGF files
    preds = [p.astype(np.float32).astype(np.float64) for p in preds]
    d, j = _score(preds, [m for _, m in testset], cfg.mode)
    name = f"member_{index:02d}"
    log.info("%s loss=%s acts=%s dice=%.4f", name, kind, [a.kind for a in model.activations], d)
    return MemberResult(name, kind, [a.kind for a in model.activations], model, preds, d, j, hist)


def run_bench(cfg: BenchConfig = BenchConfig(), threads: int = 1) -> BenchResult:
    data = synth_dataset(cfg.n_train + cfg.n_test, cfg.height, cfg.width, cfg.seed)
    trainset, testset = data[:cfg.n_train], data[cfg.n_train:]
    members = [train_member(cfg, i, trainset, testset, threads) for i in range(cfg.members)]
    fused = [fuse([m.predictions[j] for m in members]) for j in range(len(testset))]
    d, j = _score(fused, [m for _, m in testset], cfg.mode)
    return BenchResult(members, d, j, fused, testset)


def write_bench(result: BenchResult, cfg: BenchConfig, out_dir) -> None:
    """Persist models, per-member and fused test predictions, truth masks and the table."""
    os.makedirs(out_dir, exist_ok=True)
    ids = [f"test_{i:03d}" for i in range(len(result.test))]
    truth_dir = os.path.join(out_dir, "truth")
    os.makedirs(truth_dir, exist_ok=True)
    for image_id, (_, mask) in zip(ids, result.test):
        save_mask(os.path.join(truth_dir, image_id + ".pgm"), mask, 2)
    for m in result.members:
        mdir = os.path.join(out_dir, m.name)
        os.makedirs(mdir, exist_ok=True)
        m.model.save(os.path.join(mdir, "manifest.json"), os.path.join(mdir, "weights.segw"),
                     extra={"loss": m.loss, "train": replace(cfg.train, loss=m.loss, seed=m.model.seed).to_dict()})
        pdir = os.path.join(mdir, "pred")
        os.makedirs(pdir, exist_ok=True)
        for image_id, p in zip(ids, m.predictions):
            save_raster(os.path.join(pdir, image_id + ".segf"), p)
    fdir = os.path.join(out_dir, "fused")
    os.makedirs(fdir, exist_ok=True)
    for image_id, p in zip(ids, result.fused):
        save_raster(os.path.join(fdir, image_id + ".segf"), p)
    with open(os.path.join(out_dir, "ensemble.json"), "w") as fh:
        json.dump({"members": [{"dir": os.path.join(m.name, "pred"), "weight": 1.0} for m in result.members],
                   "threshold": 0.5, "mode": cfg.mode}, fh, indent=2)
        fh.write("\n")
    with open(os.path.join(out_dir, "table.csv"), "w") as fh:
        fh.write(result.table_csv())

