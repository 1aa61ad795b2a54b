from __future__ import annotations

from typing import NamedTuple

import numpy as np


class LossResult(NamedTuple):
    """Scalar loss and its gradient with respect to the prediction map."""

    value: float
    grad: np.ndarray

    def __add__(self, other):
        if not isinstance(other, LossResult):
            return NotImplemented
        return LossResult(self.value + other.value, self.grad + other.grad)


def check_pair(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.ndim != 3:
        raise ValueError(f"prediction must be (H, W, K), got shape {pred.shape}")
    if pred.shape != target.shape:
        raise ValueError(f"dimension mismatch: prediction {pred.shape} vs target {target.shape}")
    return pred, target
