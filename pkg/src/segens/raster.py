"""Raster containers, file formats, resizing and augmentation.

Probability maps are ``(H, W, K)`` float arrays (channel-fastest in C order)
and label masks are ``(H, W)`` integer arrays. Both are plain numpy arrays;
the helpers here validate and convert them.

On disk, probability maps use the SEGF container::

    offset  size  field
    0       4     magic b"SEGF"
    4       4     version (u32 = 1)
    8       4     height  (u32)
    12      4     width   (u32)
    16      4     channels (u32)
    20      ...   H*W*K float32, row-major, channel-fastest

All integers and floats are little-endian. Masks use binary PGM (P5).
"""

from __future__ import annotations

import re
import struct

import numpy as np

MAGIC = b"SEGF"
VERSION = 1
HEADER = struct.Struct("<4s4I")

AUGMENTATIONS = ("flip_h", "flip_v", "rot90")


class RasterError(ValueError):
    """Base class for malformed raster input."""


class BadMagicError(RasterError):
    pass


class BadVersionError(RasterError):
    pass


class TruncatedError(RasterError):
    pass


class NonFiniteError(RasterError):
    pass


class PGMError(RasterError):
    pass


class LabelRangeError(RasterError):
    pass


def validate_probmap(pmap, atol=1e-6):
    """Check the probability-map invariants, raising ``ValueError`` on failure.

    Entries must be finite and in [0, 1]; with two or more channels each
    pixel's channel vector must sum to 1 within `atol`.
    """
    pmap = np.asarray(pmap)
    if pmap.ndim != 3 or min(pmap.shape) < 1:
        raise ValueError(f"probability map must be (H, W, K) with positive sizes, got {pmap.shape}")
    if not np.all(np.isfinite(pmap)):
        raise ValueError("probability map contains non-finite values")
    if pmap.min() < 0.0 or pmap.max() > 1.0:
        raise ValueError("probability map values must lie in [0, 1]")
    if pmap.shape[2] >= 2:
        err = np.abs(pmap.sum(axis=2) - 1.0).max()
        if err > atol:
            raise ValueError(f"channel sums deviate from 1 by {err:.3g}")
    return pmap


def validate_mask(mask, num_classes: int):
    mask = np.asarray(mask)
    if mask.ndim != 2 or min(mask.shape) < 1:
        raise ValueError(f"label mask must be (H, W) with positive sizes, got {mask.shape}")
    if not np.issubdtype(mask.dtype, np.integer):
        raise ValueError("label mask must have an integer dtype")
    if num_classes < 1:
        raise ValueError("num_classes must be >= 1")
    if mask.min() < 0 or mask.max() >= num_classes:
        raise LabelRangeError(f"labels must lie in [0, {num_classes - 1}]")
    return mask


def one_hot(mask, num_classes: int) -> np.ndarray:
    """Expand an ``(H, W)`` label mask into an ``(H, W, K)`` indicator map."""
    mask = validate_mask(mask, num_classes)
    return (mask[..., None] == np.arange(num_classes)).astype(np.float64)


# --------------------------------------------------------------------------
# SEGF
# --------------------------------------------------------------------------

def write_raster(pmap) -> bytes:
    pmap = np.asarray(pmap)
    if pmap.ndim != 3 or min(pmap.shape) < 1:
        raise ValueError(f"raster must be (H, W, K) with positive sizes, got {pmap.shape}")
    payload = np.ascontiguousarray(pmap, dtype="<f4")
    if not np.all(np.isfinite(payload)):
        raise NonFiniteError("raster contains non-finite values")
    h, w, k = pmap.shape
    return HEADER.pack(MAGIC, VERSION, h, w, k) + payload.tobytes()


def read_raster(data: bytes) -> np.ndarray:
    """Decode a SEGF byte string into a float64 ``(H, W, K)`` array.

    The float32 payload is widened exactly, so ``write_raster(read_raster(b))``
    reproduces `b` byte for byte.
    """
    if len(data) < HEADER.size:
        raise TruncatedError(f"header needs {HEADER.size} bytes, got {len(data)}")
    magic, version, h, w, k = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise BadVersionError(f"unsupported version {version}")
    if min(h, w, k) < 1:
        raise RasterError(f"degenerate raster dimensions {h}x{w}x{k}")
    n = h * w * k
    expected = HEADER.size + 4 * n
    if len(data) < expected:
        raise TruncatedError(f"payload needs {expected} bytes, got {len(data)}")
    if len(data) > expected:
        raise RasterError(f"{len(data) - expected} trailing bytes after payload")
    arr = np.frombuffer(data, dtype="<f4", count=n, offset=HEADER.size)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("payload contains non-finite floats")
    return arr.astype(np.float64).reshape(h, w, k)


def load_raster(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_raster(fh.read())


def save_raster(path, pmap) -> None:
    with open(path, "wb") as fh:
        fh.write(write_raster(pmap))


# --------------------------------------------------------------------------
# PGM masks
# --------------------------------------------------------------------------

_PGM_HEADER = re.compile(rb"P5(?:\s+|#[^\n]*\n)+(\d+)(?:\s+|#[^\n]*\n)+(\d+)(?:\s+|#[^\n]*\n)+(\d+)\s")


def read_mask_pgm(data: bytes, num_classes: int) -> np.ndarray:
    """Decode a binary PGM into a label mask.

    For two classes pixels >= 128 become label 1. Otherwise the pixel value
    is the label itself and must be below `num_classes`.
    """
    m = _PGM_HEADER.match(data)
    if m is None:
        raise PGMError("not a binary PGM (P5) file")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise PGMError(f"maxval must be 255, got {maxval}")
    if w < 1 or h < 1:
        raise PGMError(f"degenerate PGM dimensions {w}x{h}")
    start = m.end()
    if len(data) - start < w * h:
        raise PGMError(f"pixel data truncated: need {w * h} bytes, got {len(data) - start}")
    pix = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=start).reshape(h, w)
    if num_classes == 2:
        return (pix >= 128).astype(np.int64)
    if num_classes < 1:
        raise ValueError("num_classes must be >= 1")
    if pix.max() >= num_classes:
        raise LabelRangeError(f"pixel value {int(pix.max())} is not a label below {num_classes}")
    return pix.astype(np.int64)


def write_mask_pgm(mask, num_classes: int) -> bytes:
    """Encode a label mask; binary masks are written as 0/255."""
    mask = validate_mask(mask, num_classes)
    if num_classes > 256:
        raise ValueError("PGM masks hold at most 256 classes")
    pix = (mask * 255) if num_classes == 2 else mask
    h, w = mask.shape
    return b"P5\n%d %d\n255\n" % (w, h) + pix.astype(np.uint8).tobytes()


def load_mask(path, num_classes: int) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_mask_pgm(fh.read(), num_classes)


def save_mask(path, mask, num_classes: int) -> None:
    with open(path, "wb") as fh:
        fh.write(write_mask_pgm(mask, num_classes))


# --------------------------------------------------------------------------
# geometry
# --------------------------------------------------------------------------

def nearest_indices(src: int, dst: int) -> np.ndarray:
    """Source index ``floor((i + 0.5) * src / dst)`` for each target index."""
    # exact integer form of the floor expression
    return ((2 * np.arange(dst) + 1) * src) // (2 * dst)


def resize_nearest(raster, new_h: int, new_w: int) -> np.ndarray:
    """Nearest-neighbour resize of a 2-D mask or 3-D probability map."""
    if new_h < 1 or new_w < 1:
        raise ValueError(f"target size must be positive, got {new_h}x{new_w}")
    raster = np.asarray(raster)
    rows = nearest_indices(raster.shape[0], new_h)
    cols = nearest_indices(raster.shape[1], new_w)
    return raster[rows[:, None], cols[None, :]]


def augment(raster, op: str) -> np.ndarray:
    """Apply one of ``flip_h``, ``flip_v`` or ``rot90`` (counter-clockwise).

    Works on masks and probability maps alike; only the two spatial axes move.
    """
    raster = np.asarray(raster)
    if op == "flip_h":
        out = raster[:, ::-1]
    elif op == "flip_v":
        out = raster[::-1]
    elif op == "rot90":
        out = np.rot90(raster, 1, axes=(0, 1))
    else:
        raise ValueError(f"unknown augmentation {op!r}; expected one of {AUGMENTATIONS}")
    return np.ascontiguousarray(out)
