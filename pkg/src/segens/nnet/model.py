"""A three-layer fully-convolutional segmentation network in numpy.

Architecture: 3x3 conv (cin -> 16) -> act -> 3x3 conv (16 -> 16) -> act ->
1x1 conv (16 -> K) -> softmax, zero "same" padding throughout. Images are
``(H, W, cin)`` arrays; outputs are ``(H, W, K)`` probability maps.
"""

from __future__ import annotations

import json
import struct

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import activations as acts
from .activations import Activation

HIDDEN = 16
WEIGHTS_MAGIC = b"SEGW"
WEIGHTS_VERSION = 1


class FcnModel:
    def __init__(self, in_channels: int = 1, num_classes: int = 2, activations=None,
                 seed: int = 0, hidden: int = HIDDEN):
        if activations is None:
            activations = [Activation("relu"), Activation("relu")]
        if len(activations) != 2:
            raise ValueError("the network has exactly two activation sites")
        self.in_channels = in_channels
        self.num_classes = num_classes
        self.hidden = hidden
        self.seed = seed
        self.activations = list(activations)
        self.weights = self._init_weights(np.random.default_rng(seed))

    def _init_weights(self, rng) -> dict:
        c, h, k = self.in_channels, self.hidden, self.num_classes
        w = {
            "conv1.w": rng.normal(0.0, np.sqrt(2.0 / (9 * c)), (c, 3, 3, h)),
            "conv1.b": np.zeros(h),
            "conv2.w": rng.normal(0.0, np.sqrt(2.0 / (9 * h)), (h, 3, 3, h)),
            "conv2.b": np.zeros(h),
            "conv3.w": rng.normal(0.0, np.sqrt(2.0 / h), (h, k)),
            "conv3.b": np.zeros(k),
        }
        for site, act in enumerate(self.activations, start=1):
            for name in act.learnable:
                w[f"act{site}.{name}"] = np.full(h, float(act.params[name]))
        return w

    def _act_params(self, site: int) -> dict:
        act = self.activations[site - 1]
        p = dict(act.params)
        for name in act.learnable:
            p[name] = self.weights[f"act{site}.{name}"]
        return p

    # ------------------------------------------------------------------

    def forward(self, image, return_cache: bool = False):
        x = np.asarray(image, dtype=np.float64)
        if x.ndim == 2:
            x = x[..., None]
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise ValueError(f"expected (H, W, {self.in_channels}) image, got {np.shape(image)}")
        if x.shape[0] < 3 or x.shape[1] < 3:
            raise ValueError(f"image {x.shape[:2]} is smaller than the 3x3 kernel")
        w = self.weights
        cols1 = _im2col(x)
        z1 = cols1 @ w["conv1.w"].reshape(-1, self.hidden) + w["conv1.b"]
        z1 = z1.reshape(x.shape[0], x.shape[1], self.hidden)
        h1 = acts.forward(self.activations[0].kind, z1, self._act_params(1))
        cols2 = _im2col(h1)
        z2 = cols2 @ w["conv2.w"].reshape(-1, self.hidden) + w["conv2.b"]
        z2 = z2.reshape(z1.shape)
        h2 = acts.forward(self.activations[1].kind, z2, self._act_params(2))
        logits = h2 @ w["conv3.w"] + w["conv3.b"]
        probs = softmax(logits)
        if return_cache:
            return probs, (x.shape, cols1, z1, cols2, z2, h2, probs)
        return probs

    __call__ = forward

    def backward(self, cache, grad_probs) -> dict:
        """Gradients of every weight given ``d loss / d probs``."""
        shape, cols1, z1, cols2, z2, h2, probs = cache
        w = self.weights
        g = {}
        gl = probs * (grad_probs - np.sum(grad_probs * probs, axis=2, keepdims=True))
        g["conv3.w"] = h2.reshape(-1, self.hidden).T @ gl.reshape(-1, self.num_classes)
        g["conv3.b"] = gl.sum(axis=(0, 1))
        gh2 = gl @ w["conv3.w"].T

        gz2, gp2 = acts.backward(self.activations[1].kind, z2, gh2, self._act_params(2))
        gz2 = gz2.reshape(-1, self.hidden)
        g["conv2.w"] = (cols2.T @ gz2).reshape(w["conv2.w"].shape)
        g["conv2.b"] = gz2.sum(axis=0)
        gh1 = _col2im(gz2 @ w["conv2.w"].reshape(-1, self.hidden).T, z1.shape)

        gz1, gp1 = acts.backward(self.activations[0].kind, z1, gh1, self._act_params(1))
        gz1 = gz1.reshape(-1, self.hidden)
        g["conv1.w"] = (cols1.T @ gz1).reshape(w["conv1.w"].shape)
        g["conv1.b"] = gz1.sum(axis=0)
        for site, gp in ((1, gp1), (2, gp2)):
            for name, val in gp.items():
                g[f"act{site}.{name}"] = val
        return g

    def predict(self, images) -> list:
        return [self.forward(im) for im in images]

    # ------------------------------------------------------------------

    def manifest(self, extra=None) -> dict:
        m = {
            "architecture": {
                "layers": [
                    f"conv3x3({self.in_channels}->{self.hidden})", "act",
                    f"conv3x3({self.hidden}->{self.hidden})", "act",
                    f"conv1x1({self.hidden}->{self.num_classes})", "softmax",
                ],
                "in_channels": self.in_channels,
                "hidden": self.hidden,
                "num_classes": self.num_classes,
            },
            "activations": [a.to_dict() for a in self.activations],
            "seed": self.seed,
        }
        if extra:
            m.update(extra)
        return m

    @classmethod
    def from_manifest(cls, manifest: dict, weights: dict | None = None) -> "FcnModel":
        arch = manifest["architecture"]
        model = cls(arch["in_channels"], arch["num_classes"],
                    [Activation.from_dict(a) for a in manifest["activations"]],
                    seed=manifest.get("seed", 0), hidden=arch.get("hidden", HIDDEN))
        if weights is not None:
            missing = set(model.weights) - set(weights)
            if missing:
                raise ValueError(f"weights file lacks tensors {sorted(missing)}")
            for name, arr in model.weights.items():
                if weights[name].shape != arr.shape:
                    raise ValueError(f"tensor {name} has shape {weights[name].shape}, expected {arr.shape}")
                model.weights[name] = np.asarray(weights[name], dtype=np.float64)
        return model

    def save(self, manifest_path, weights_path, extra=None) -> None:
        with open(manifest_path, "w") as fh:
            json.dump(self.manifest(extra), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(weights_path, "wb") as fh:
            fh.write(write_weights(self.weights))

    @classmethod
    def load(cls, manifest_path, weights_path) -> "FcnModel":
        with open(manifest_path) as fh:
            manifest = json.load(fh)
        with open(weights_path, "rb") as fh:
            return cls.from_manifest(manifest, read_weights(fh.read()))


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _im2col(x):
    h, w, c = x.shape
    xp = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    # (H, W, C, 3, 3) -> rows of C*9 in (c, di, dj) order, matching weight layout
    return sliding_window_view(xp, (3, 3), axis=(0, 1)).reshape(h * w, c * 9)


def _col2im(cols, shape):
    h, w, c = shape
    cols = cols.reshape(h, w, c, 3, 3)
    gp = np.zeros((h + 2, w + 2, c))
    for di in range(3):
        for dj in range(3):
            gp[di:di + h, dj:dj + w] += cols[..., di, dj]
    return gp[1:-1, 1:-1]


# --------------------------------------------------------------------------
# named-tensor container: magic, version, count, then per tensor
# name length, name bytes, rank, dims, float32 payload (all little-endian)
# --------------------------------------------------------------------------

def write_weights(tensors: dict) -> bytes:
    out = [struct.pack("<4sII", WEIGHTS_MAGIC, WEIGHTS_VERSION, len(tensors))]
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)) + raw)
        out.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(out)


def read_weights(data: bytes) -> dict:
    magic, version, count = struct.unpack_from("<4sII", data)
    if magic != WEIGHTS_MAGIC:
        raise ValueError(f"bad weights magic {magic!r}")
    if version != WEIGHTS_VERSION:
        raise ValueError(f"unsupported weights version {version}")
    off = 12
    tensors = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<I", data, off)
            name = data[off + 4:off + 4 + n].decode("utf-8")
            off += 4 + n
            (rank,) = struct.unpack_from("<I", data, off)
            dims = struct.unpack_from(f"<{rank}I", data, off + 4)
            off += 4 + 4 * rank
            size = int(np.prod(dims, dtype=np.int64))
            if off + 4 * size > len(data):
                raise ValueError(f"tensor {name!r} truncated")
            tensors[name] = np.frombuffer(data, "<f4", size, off).astype(np.float64).reshape(dims)
            off += 4 * size
    except struct.error as exc:
        raise ValueError("weights file truncated") from exc
    return tensors
