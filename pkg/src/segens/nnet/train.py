"""Mini-batch SGD with momentum and step learning-rate decay."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .. import metrics
from ..ensemble import binarize
from ..losses import LOSSES, LossParams, compute_loss
from ..raster import AUGMENTATIONS, augment, one_hot
from ..ssim import SsimParams

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch, step, value):
        super().__init__(f"non-finite loss {value} at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 1e-2
    drop_factor: float = 0.2
    drop_every: int = 5
    momentum: float = 0.9
    batch_size: int = 4
    loss: str = "gd"
    loss_params: LossParams = field(default_factory=LossParams)
    ssim: SsimParams = field(default_factory=SsimParams)
    augment: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs: must be >= 0")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate: must be >= 0")
        if not 0 < self.drop_factor <= 1:
            raise ValueError("drop_factor: must lie in (0, 1]")
        if self.drop_every < 1:
            raise ValueError("drop_every: must be >= 1")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum: must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size: must be >= 1")
        if self.loss not in LOSSES:
            raise ValueError(f"loss: unknown kind {self.loss!r}; valid kinds: {', '.join(LOSSES)}")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for 1-based `epoch`; drops after every completed `drop_every` epochs."""
        return self.learning_rate * self.drop_factor ** ((epoch - 1) // self.drop_every)

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown training fields: {sorted(unknown)}")
        if "loss_params" in d:
            d["loss_params"] = LossParams.from_dict(d["loss_params"])
        if "ssim" in d:
            d["ssim"] = SsimParams.from_dict(d["ssim"])
        return cls(**d)


@dataclass
class History:
    initial_loss: float = float("nan")
    lr: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_dice: list = field(default_factory=list)
    final_loss: float = float("nan")


def mean_loss(model, dataset, config: TrainConfig) -> float:
    vals = []
    for image, mask in dataset:
        probs = model.forward(image)
        vals.append(compute_loss(config.loss, probs, one_hot(mask, model.num_classes),
                                 config.loss_params, config.ssim).value)
    return float(np.mean(vals))


def dataset_dice(model, dataset, threshold=0.5) -> float:
    pairs = [(binarize(model.forward(im), threshold), m) for im, m in dataset]
    return metrics.evaluate_dataset(pairs).aggregate_dice


def _augment_pair(rng, image, mask):
    op = int(rng.integers(0, len(AUGMENTATIONS) + 1))
    if op == len(AUGMENTATIONS):
        return image, mask
    return augment(image, AUGMENTATIONS[op]), augment(mask, AUGMENTATIONS[op])


def train(model, dataset, config: TrainConfig = TrainConfig(), val=None):
    """Train `model` in place; returns ``(model, history)``.

    Each step averages per-image loss gradients over a mini-batch. With
    `val` given, the validation Dice is recorded after every epoch.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("training set is empty")
    rng = np.random.default_rng(config.seed)
    velocity = {k: np.zeros_like(v) for k, v in model.weights.items()}
    hist = History(initial_loss=mean_loss(model, dataset, config))
    k = model.num_classes
    step = 0
    for epoch in range(1, config.epochs + 1):
        lr = config.lr_at(epoch)
        order = rng.permutation(len(dataset))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            grads = {name: np.zeros_like(v) for name, v in model.weights.items()}
            for i in batch:
                image, mask = dataset[i]
                if config.augment:
                    image, mask = _augment_pair(rng, image, mask)
                probs, cache = model.forward(image, return_cache=True)
                res = compute_loss(config.loss, probs, one_hot(mask, k), config.loss_params, config.ssim)
                if not np.isfinite(res.value) or not np.all(np.isfinite(res.grad)):
                    raise TrainingDiverged(epoch, step, res.value)
                losses.append(res.value)
                for name, g in model.backward(cache, res.grad).items():
                    grads[name] += g
            for name, w in model.weights.items():
                velocity[name] = config.momentum * velocity[name] - lr * (grads[name] / len(batch))
                model.weights[name] = w + velocity[name]
            step += 1
        hist.lr.append(lr)
        hist.train_loss.append(float(np.mean(losses)))
        if val is not None:
            hist.val_dice.append(dataset_dice(model, val))
        log.info("epoch %d lr %.3g loss %.5f%s", epoch, lr, hist.train_loss[-1],
                 f" val dice {hist.val_dice[-1]:.4f}" if val is not None else "")
    hist.final_loss = mean_loss(model, dataset, config)
    return model, hist
