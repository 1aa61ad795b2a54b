"""Activation zoo used by the stochastic-activation networks.

Each kind is a pair of vectorised functions ``forward(x, p)`` and
``backward(x, gy, p) -> (gx, gp)`` where ``p`` maps parameter names to
arrays broadcastable against ``x`` (per-channel along the last axis for the
learnable kinds) and ``gp`` holds gradients summed down to the parameter
shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# conventional defaults for each activation
DEFAULTS = {
    "relu": {},
    "leaky_relu": {"slope": 0.01},
    "elu": {"a": 1.0},
    "prelu": {"a": 0.25},
    "srelu": {"t_r": 0.4, "a_r": 0.4, "t_l": -0.4, "a_l": 0.4},
}
LEARNABLE = {"prelu": ("a",), "srelu": ("t_r", "a_r", "t_l", "a_l")}
KINDS = tuple(DEFAULTS)


@dataclass(frozen=True)
class Activation:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in DEFAULTS:
            raise ValueError(f"unknown activation {self.kind!r}; expected one of {KINDS}")
        unknown = set(self.params) - set(DEFAULTS[self.kind])
        if unknown:
            raise ValueError(f"{self.kind} has no parameters {sorted(unknown)}")
        object.__setattr__(self, "params", {**DEFAULTS[self.kind], **self.params})

    @property
    def learnable(self) -> tuple:
        return LEARNABLE.get(self.kind, ())

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "Activation":
        return cls(d["kind"], dict(d.get("params", {})))


def _sum_to(g, like):
    like = np.asarray(like)
    if like.ndim == 0:
        return np.asarray(g.sum())
    return g.reshape(-1, like.shape[-1]).sum(axis=0)


def forward(kind: str, x, p):
    x = np.asarray(x, dtype=np.float64)
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "leaky_relu":
        return np.where(x > 0, x, p["slope"] * x)
    if kind == "elu":
        return np.where(x > 0, x, p["a"] * np.expm1(np.minimum(x, 0.0)))
    if kind == "prelu":
        return np.where(x > 0, x, p["a"] * x)
    if kind == "srelu":
        t_r, a_r, t_l, a_l = p["t_r"], p["a_r"], p["t_l"], p["a_l"]
        return np.where(x >= t_r, t_r + a_r * (x - t_r), np.where(x <= t_l, t_l + a_l * (x - t_l), x))
    raise ValueError(f"unknown activation {kind!r}")


def backward(kind: str, x, gy, p):
    x = np.asarray(x, dtype=np.float64)
    if kind == "relu":
        return gy * (x > 0), {}
    if kind == "leaky_relu":
        return gy * np.where(x > 0, 1.0, p["slope"]), {}
    if kind == "elu":
        return gy * np.where(x > 0, 1.0, p["a"] * np.exp(np.minimum(x, 0.0))), {}
    if kind == "prelu":
        neg = x <= 0
        return gy * np.where(neg, p["a"], 1.0), {"a": _sum_to(gy * np.where(neg, x, 0.0), p["a"])}
    if kind == "srelu":
        t_r, a_r, t_l, a_l = p["t_r"], p["a_r"], p["t_l"], p["a_l"]
        right = x >= t_r
        left = (x <= t_l) & ~right
        mid = ~(right | left)
        gx = gy * (right * a_r + left * a_l + mid)
        gp = {
            "t_r": _sum_to(gy * right * (1.0 - a_r), t_r),
            "a_r": _sum_to(gy * right * (x - t_r), a_r),
            "t_l": _sum_to(gy * left * (1.0 - a_l), t_l),
            "a_l": _sum_to(gy * left * (x - t_l), a_l),
        }
        return gx, gp
    raise ValueError(f"unknown activation {kind!r}")


def activation_forward(act: Activation, x):
    """Evaluate `act` with its scalar parameters."""
    return forward(act.kind, x, act.params)


def activation_backward(act: Activation, x):
    """Derivative of `act` with respect to its input at `x`."""
    gx, _ = backward(act.kind, x, np.ones_like(np.asarray(x, dtype=np.float64)), act.params)
    return gx


def default_pool() -> list:
    return [Activation(k) for k in KINDS]


def stochastic_select(pool, seed: int, n_sites: int = 2) -> list:
    """Draw one activation per site, uniformly and independently, from `pool`."""
    pool = list(pool)
    if not pool:
        raise ValueError("activation pool is empty")
    rng = np.random.default_rng(seed)
    return [pool[int(i)] for i in rng.integers(0, len(pool), size=n_sites)]
