"""Synthetic "polyp" images: bright soft-edged ellipses on a textured field."""

from __future__ import annotations

import numpy as np

MIN_FOREGROUND = 0.02
MAX_FOREGROUND = 0.6


def _texture(rng, h, w):
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    field = np.zeros((h, w))
    for _ in range(4):
        fy, fx = rng.uniform(0.5, 3.0, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        field += rng.uniform(0.3, 1.0) * np.sin(2 * np.pi * (fy * yy + fx * xx) + phase)
    field = (field - field.min()) / (np.ptp(field) + 1e-12)
    return 0.1 + 0.3 * field


def _sample(rng, h, w):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    image = _texture(rng, h, w)
    mask = np.zeros((h, w), dtype=bool)
    short = min(h, w)
    for _ in range(int(rng.integers(1, 4))):
        ry, rx = rng.uniform(0.1, 0.25, size=2) * short
        cy, cx = rng.uniform(0.15, 0.85) * h, rng.uniform(0.15, 0.85) * w
        theta = rng.uniform(0, np.pi)
        c, s = np.cos(theta), np.sin(theta)
        u = ((yy - cy) * c + (xx - cx) * s) / ry
        v = (-(yy - cy) * s + (xx - cx) * c) / rx
        r = np.sqrt(u * u + v * v)
        inside = r <= 1.0
        # approximate signed pixel distance to the rim, for a ~1px soft edge
        dist = (1.0 - r) * min(ry, rx)
        edge = 1.0 / (1.0 + np.exp(-2.5 * dist))
        image = image + rng.uniform(0.35, 0.5) * edge
        mask |= inside
    image = image + rng.normal(0.0, 0.04, size=(h, w))
    return np.clip(image, 0.0, 1.0), mask.astype(np.int64)


def synth_dataset(n: int, h: int = 64, w: int = 64, seed: int = 0) -> list:
    """`n` deterministic ``(image, mask)`` pairs; images are ``(h, w, 1)``.

    Samples whose foreground fraction falls outside [0.02, 0.6] are redrawn.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if h < 8 or w < 8:
        raise ValueError(f"images must be at least 8x8, got {h}x{w}")
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        image, mask = _sample(rng, h, w)
        frac = mask.mean()
        if MIN_FOREGROUND <= frac <= MAX_FOREGROUND:
            out.append((image[..., None], mask))
    return out
