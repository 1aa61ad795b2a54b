"""Central finite differences for checking analytic gradients."""

from __future__ import annotations

import numpy as np


def numerical_gradient(f, x, h: float = 1e-5, indices=None) -> np.ndarray:
    """Central-difference gradient of scalar `f` at `x`.

    Only the flat positions in `indices` are probed when given; the other
    entries of the result are left at zero.
    """
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size) if indices is None else indices:
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(analytic, numeric, floor: float = 1e-6) -> np.ndarray:
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``.

    The floor keeps entries whose true derivative is ~0 from turning
    finite-difference round-off into large relative errors.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
