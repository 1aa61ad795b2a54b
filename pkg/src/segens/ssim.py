"""Windowed structural similarity and the SSIM loss, with exact gradients.

The Gaussian window is separable, so every windowed sum is ``R @ x @ C.T``
where ``R`` and ``C`` are banded matrices that already fold in replicate
padding. Reverse-mode differentiation then only needs their transposes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from ._common import LossResult, check_pair


@dataclass(frozen=True)
class SsimParams:
    window_size: int = 11
    window_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0

    def __post_init__(self):
        if self.window_size < 3 or self.window_size % 2 == 0:
            raise ValueError(f"window_size must be odd and >= 3, got {self.window_size}")
        if not self.window_sigma > 0:
            raise ValueError("window_sigma must be positive")
        if self.dynamic_range <= 0:
            raise ValueError("dynamic_range must be positive")

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2

    @classmethod
    def from_dict(cls, d: dict) -> "SsimParams":
        unknown = set(d) - {"window_size", "window_sigma", "k1", "k2", "dynamic_range"}
        if unknown:
            raise ValueError(f"unknown ssim fields: {sorted(unknown)}")
        return cls(**d)


class LocalStats(NamedTuple):
    mu_x: np.ndarray
    mu_y: np.ndarray
    sigma_x2: np.ndarray
    sigma_y2: np.ndarray
    sigma_xy: np.ndarray


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    """1-D normalised Gaussian weights of odd length `size`."""
    r = np.arange(size) - (size - 1) / 2
    w = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    return w / w.sum()


@lru_cache(maxsize=64)
def _window_operator(n: int, size: int, sigma: float) -> np.ndarray:
    w = gaussian_window(size, sigma)
    half = size // 2
    op = np.zeros((n, n))
    rows = np.arange(n)
    for j, wj in enumerate(w):
        # replicate padding: out-of-range taps land on the border pixel
        src = np.clip(rows + j - half, 0, n - 1)
        np.add.at(op, (rows, src), wj)
    op.setflags(write=False)
    return op


class _Window:
    """Separable Gaussian filter ``x -> R x C^T`` and its adjoint."""

    def __init__(self, shape, params: SsimParams):
        self.r = _window_operator(shape[0], params.window_size, float(params.window_sigma))
        self.c = _window_operator(shape[1], params.window_size, float(params.window_sigma))

    def __call__(self, x):
        return self.r @ x @ self.c.T

    def adjoint(self, g):
        return self.r.T @ g @ self.c


def _check_pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or x.shape != y.shape:
        raise ValueError(f"ssim expects two equal-shape single-channel rasters, got {x.shape} and {y.shape}")
    return x, y


def _stats(x, y, win: _Window):
    mu_x, mu_y = win(x), win(y)
    vx = win(x * x) - mu_x * mu_x
    vy = win(y * y) - mu_y * mu_y
    sxy = win(x * y) - mu_x * mu_y
    return mu_x, mu_y, vx, vy, sxy


def local_stats(x, y, params: SsimParams = SsimParams()) -> LocalStats:
    x, y = _check_pair(x, y)
    mu_x, mu_y, vx, vy, sxy = _stats(x, y, _Window(x.shape, params))
    return LocalStats(mu_x, mu_y, np.maximum(vx, 0.0), np.maximum(vy, 0.0), sxy)


def _ssim_terms(x, y, params, win):
    mu_x, mu_y, vx, vy, sxy = _stats(x, y, win)
    keep_x = vx > 0
    vx = np.where(keep_x, vx, 0.0)
    vy = np.maximum(vy, 0.0)
    a1 = 2 * mu_x * mu_y + params.c1
    a2 = 2 * sxy + params.c2
    b1 = mu_x ** 2 + mu_y ** 2 + params.c1
    b2 = vx + vy + params.c2
    smap = (a1 * a2) / (b1 * b2)
    return smap, (mu_x, mu_y, keep_x, a1, a2, b1, b2)


def ssim_index(x, y, params: SsimParams = SsimParams()):
    """Mean SSIM and the per-pixel SSIM map of two single-channel rasters."""
    x, y = _check_pair(x, y)
    smap, _ = _ssim_terms(x, y, params, _Window(x.shape, params))
    return float(smap.mean()), smap


def ssim_value_and_grad(x, y, params: SsimParams = SsimParams()):
    """Mean SSIM of (x, y) and its gradient with respect to ``x``."""
    x, y = _check_pair(x, y)
    win = _Window(x.shape, params)
    smap, (mu_x, mu_y, keep_x, a1, a2, b1, b2) = _ssim_terms(x, y, params, win)
    g = np.full_like(smap, 1.0 / smap.size)
    g_a1 = g * a2 / (b1 * b2)
    g_a2 = g * a1 / (b1 * b2)
    g_b1 = -g * smap / b1
    g_b2 = -g * smap / b2
    g_sxy = 2.0 * g_a2
    g_vx = np.where(keep_x, g_b2, 0.0)
    g_mux = 2.0 * mu_y * g_a1 + 2.0 * mu_x * g_b1 - mu_y * g_sxy - 2.0 * mu_x * g_vx
    grad = win.adjoint(g_mux) + 2.0 * x * win.adjoint(g_vx) + y * win.adjoint(g_sxy)
    return float(smap.mean()), grad


def ssim_loss(pred, target, params: SsimParams = SsimParams()) -> LossResult:
    """``1 - SSIM`` between a probability map and a one-hot target.

    Two-class maps are compared on the foreground channel only; with more
    classes the per-channel losses are averaged.
    """
    pred, target = check_pair(pred, target)
    k = pred.shape[2]
    grad = np.zeros_like(pred)
    if k == 2:
        s, g = ssim_value_and_grad(pred[..., 1], target[..., 1], params)
        grad[..., 1] = -g
        return LossResult(1.0 - s, grad)
    total = 0.0
    for c in range(k):
        s, g = ssim_value_and_grad(pred[..., c], target[..., c], params)
        total += 1.0 - s
        grad[..., c] = -g / k
    return LossResult(total / k, grad)
