"""Region- and distribution-based segmentation losses with analytic gradients.

Every loss takes a prediction map ``pred`` of shape ``(H, W, K)`` and a
one-hot ``target`` of the same shape, and returns a :class:`LossResult`
holding the scalar value and ``d value / d pred``. The gradient treats every
entry of ``pred`` as a free variable (no simplex constraint).

The registry :data:`LOSSES` maps the stable kind names used in configs and
on the command line to callables ``f(pred, target, params, ssim_params)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from ._common import LossResult, check_pair
from .ssim import SsimParams, ssim_loss

__all__ = [
    "LOSSES",
    "LossParams",
    "LossResult",
    "class_weights",
    "comb1",
    "comb2",
    "comb3",
    "compute_loss",
    "cross_entropy",
    "focal_generalized_dice",
    "focal_region",
    "focal_tversky",
    "generalized_dice",
    "log_cosh",
    "log_cosh_value",
    "tversky_index",
    "tversky_loss",
]


@dataclass(frozen=True)
class LossParams:
    """Hyper-parameters shared by the loss catalog.

    ``gamma_focal_region`` is the exponent of the focal Dice and focal
    Tversky losses; ``gamma_ce`` is the focal cross-entropy modulating
    exponent; ``epsilon`` smooths ratios and clamps logarithms.
    """

    alpha: float = 0.3
    beta: float = 0.7
    gamma_focal_region: float = 4.0 / 3.0
    gamma_ce: float = 2.0
    epsilon: float = 1e-5

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.gamma_focal_region < 1:
            raise ValueError("gamma_focal_region must be >= 1")
        if self.gamma_ce < 0:
            raise ValueError("gamma_ce must be >= 0")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")

    @classmethod
    def from_dict(cls, d: dict) -> "LossParams":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown loss parameters: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


DEFAULT_PARAMS = LossParams()
DEFAULT_SSIM = SsimParams()


def class_weights(target, params: LossParams = DEFAULT_PARAMS) -> np.ndarray:
    """Per-class weights ``1 / ((sum of target mass)^2 + eps)``."""
    target = np.asarray(target, dtype=np.float64)
    counts = target.reshape(-1, target.shape[-1]).sum(axis=0)
    return 1.0 / (counts ** 2 + params.epsilon)


def generalized_dice(pred, target, params: LossParams = DEFAULT_PARAMS, weights=None) -> LossResult:
    """Generalized Dice loss.

    ``weights`` overrides the inverse squared-frequency class weights, e.g.
    ``np.ones(K)`` for an unweighted Dice loss.
    """
    pred, target = check_pair(pred, target)
    eps = params.epsilon
    w = class_weights(target, params) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (pred.shape[2],):
        raise ValueError(f"expected {pred.shape[2]} class weights, got shape {w.shape}")
    inter = (pred * target).sum(axis=(0, 1))
    total = (pred ** 2 + target ** 2).sum(axis=(0, 1))
    num = 2.0 * np.dot(w, inter) + eps
    den = np.dot(w, total) + eps
    grad = -(2.0 * w * target * den - num * 2.0 * w * pred) / den ** 2
    return LossResult(float(1.0 - num / den), grad)


def _tversky_terms(pred, target):
    # one-vs-rest split: the negative mass of class k is everything else
    y_neg = pred.sum(axis=2, keepdims=True) - pred
    t_neg = target.sum(axis=2, keepdims=True) - target
    inter = (pred * target).sum(axis=(0, 1))
    fp = (pred * t_neg).sum(axis=(0, 1))
    fn = (y_neg * target).sum(axis=(0, 1))
    return inter, fp, fn, t_neg


def tversky_index(pred, target, k: int, params: LossParams = DEFAULT_PARAMS) -> float:
    """Tversky index of class `k` against all other classes."""
    pred, target = check_pair(pred, target)
    if not 0 <= k < pred.shape[2]:
        raise ValueError(f"class {k} out of range for {pred.shape[2]} classes")
    inter, fp, fn, _ = _tversky_terms(pred, target)
    eps = params.epsilon
    return float((inter[k] + eps) / (inter[k] + params.alpha * fp[k] + params.beta * fn[k] + eps))


def tversky_loss(pred, target, params: LossParams = DEFAULT_PARAMS) -> LossResult:
    pred, target = check_pair(pred, target)
    a, b, eps = params.alpha, params.beta, params.epsilon
    inter, fp, fn, t_neg = _tversky_terms(pred, target)
    num = inter + eps
    den = inter + a * fp + b * fn + eps
    ti = num / den
    # d TI_k: own channel sees T_k and alpha*T_neg; other channels see beta*T_k
    own = (target * den - num * (target + a * t_neg)) / den ** 2
    cross = -(num * b / den ** 2) * target
    grad = -(own + cross.sum(axis=2, keepdims=True) - cross)
    return LossResult(float(np.sum(1.0 - ti)), grad)


def cross_entropy(pred, target, params: LossParams = DEFAULT_PARAMS, variant: str = "plain") -> LossResult:
    """Pixel-mean cross-entropy (``variant="plain"``) or focal cross-entropy.

    Predictions are clamped to ``[eps, 1 - eps]`` before the logarithm; the
    gradient is zero for clamped entries.
    """
    pred, target = check_pair(pred, target)
    eps = params.epsilon
    m = pred.shape[0] * pred.shape[1]
    y = np.clip(pred, eps, 1.0 - eps)
    inside = (pred > eps) & (pred < 1.0 - eps)
    log_y = np.log(y)
    if variant == "plain":
        value = -np.sum(target * log_y) / m
        grad = -target / y / m
    elif variant == "focal":
        g = params.gamma_ce
        mod = (1.0 - y) ** g
        value = -np.sum(target * mod * log_y) / m
        dmod = -g * (1.0 - y) ** (g - 1.0)
        grad = -target * (dmod * log_y + mod / y) / m
    else:
        raise ValueError(f"unknown cross-entropy variant {variant!r}")
    return LossResult(float(value), np.where(inside, grad, 0.0))


def focal_region(base: LossResult, params: LossParams = DEFAULT_PARAMS) -> LossResult:
    """Raise a region loss to the power ``1 / gamma_focal_region``."""
    inv = 1.0 / params.gamma_focal_region
    value = max(base.value, 0.0) ** inv
    slope = inv * max(base.value, params.epsilon) ** (inv - 1.0)
    return LossResult(value, slope * base.grad)


def log_cosh_value(x: float) -> float:
    """Overflow-free ``log(cosh(x))``."""
    ax = abs(x)
    return ax + math.log1p(math.exp(-2.0 * ax)) - math.log(2.0)


def log_cosh(base: LossResult) -> LossResult:
    return LossResult(log_cosh_value(base.value), math.tanh(base.value) * base.grad)


def focal_tversky(pred, target, params: LossParams = DEFAULT_PARAMS) -> LossResult:
    return focal_region(tversky_loss(pred, target, params), params)


def focal_generalized_dice(pred, target, params: LossParams = DEFAULT_PARAMS) -> LossResult:
    return focal_region(generalized_dice(pred, target, params), params)


def comb1(pred, target, params: LossParams = DEFAULT_PARAMS) -> LossResult:
    """Focal generalized Dice plus focal Tversky."""
    return focal_generalized_dice(pred, target, params) + focal_tversky(pred, target, params)


def comb2(pred, target, params: LossParams = DEFAULT_PARAMS) -> LossResult:
    """Log-cosh Dice, focal Dice and log-cosh focal Tversky, summed."""
    gd = generalized_dice(pred, target, params)
    ft = focal_tversky(pred, target, params)
    return log_cosh(gd) + focal_region(gd, params) + log_cosh(ft)


def comb3(pred, target, params: LossParams = DEFAULT_PARAMS, ssim_params: SsimParams = DEFAULT_SSIM) -> LossResult:
    """SSIM loss plus generalized Dice."""
    return ssim_loss(pred, target, ssim_params) + generalized_dice(pred, target, params)


LOSSES = {
    "gd": lambda y, t, p, s: generalized_dice(y, t, p),
    "bce": lambda y, t, p, s: cross_entropy(y, t, p, "plain"),
    "focal": lambda y, t, p, s: cross_entropy(y, t, p, "focal"),
    "tversky": lambda y, t, p, s: tversky_loss(y, t, p),
    "ft": lambda y, t, p, s: focal_tversky(y, t, p),
    "fgd": lambda y, t, p, s: focal_generalized_dice(y, t, p),
    "lc_gd": lambda y, t, p, s: log_cosh(generalized_dice(y, t, p)),
    "lc_bce": lambda y, t, p, s: log_cosh(cross_entropy(y, t, p, "plain")),
    "lc_tversky": lambda y, t, p, s: log_cosh(tversky_loss(y, t, p)),
    "lc_ft": lambda y, t, p, s: log_cosh(focal_tversky(y, t, p)),
    "ssim": lambda y, t, p, s: ssim_loss(y, t, s),
    "comb1": lambda y, t, p, s: comb1(y, t, p),
    "comb2": lambda y, t, p, s: comb2(y, t, p),
    "comb3": lambda y, t, p, s: comb3(y, t, p, s),
}


def compute_loss(kind: str, pred, target, params: LossParams = DEFAULT_PARAMS,
                 ssim_params: SsimParams = DEFAULT_SSIM) -> LossResult:
    try:
        fn = LOSSES[kind]
    except KeyError:
        raise ValueError(f"unknown loss kind {kind!r}; valid kinds: {', '.join(LOSSES)}") from None
    return fn(pred, target, params, ssim_params)
