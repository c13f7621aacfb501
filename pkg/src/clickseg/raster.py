"""Array conventions and image/mask serialization.

Conventions used across the package:

* images are ``uint8`` arrays, shape ``(H, W, 3)`` (RGB) or ``(H, W)`` (grey)
* binary masks are ``uint8`` arrays, shape ``(H, W)``, values 0/1
* label maps are ``int32`` arrays, shape ``(H, W)``, 0 = background,
  instances numbered 1..K (not necessarily contiguous unless stated)
* points are ``(x, y)`` pairs, x = column, y = row
"""
from __future__ import annotations

import io

import numpy as np
from PIL import Image

from .errors import InvalidInputError


def as_mask(a) -> np.ndarray:
    """Coerce to a 2-d uint8 0/1 mask, validating shape and values."""
    m = np.asarray(a)
    if m.ndim != 2:
        raise InvalidInputError(f"mask must be 2-d, got shape {m.shape}")
    if m.dtype == bool:
        return m.astype(np.uint8)
    if not np.isin(m, (0, 1)).all():
        raise InvalidInputError("mask values must be 0 or 1")
    return m.astype(np.uint8)


def as_labels(a) -> np.ndarray:
    m = np.asarray(a)
    if m.ndim != 2:
        raise InvalidInputError(f"label map must be 2-d, got shape {m.shape}")
    if m.size and m.min() < 0:
        raise InvalidInputError("label map values must be >= 0")
    return m.astype(np.int32)


def load_image(path_or_bytes) -> np.ndarray:
    """Read an image file (or raw bytes) as uint8 RGB (H, W, 3)."""
    if isinstance(path_or_bytes, (bytes, bytearray)):
        img = Image.open(io.BytesIO(path_or_bytes))
    else:
        img = Image.open(path_or_bytes)
    return np.asarray(img.convert("RGB"), dtype=np.uint8)


def save_image(path, image: np.ndarray) -> None:
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path)


def save_labels_png(path_or_buf, labels: np.ndarray) -> None:
    """Write a label map as a 16-bit grayscale PNG (lossless up to 65535)."""
    lab = as_labels(labels)
    if lab.size and lab.max() > 65535:
        raise InvalidInputError("label map exceeds 16-bit PNG range")
    Image.fromarray(lab.astype(np.uint16)).save(path_or_buf, format="PNG")


def labels_png_bytes(labels: np.ndarray) -> bytes:
    buf = io.BytesIO()
    save_labels_png(buf, labels)
    return buf.getvalue()


def load_labels_png(path_or_bytes) -> np.ndarray:
    if isinstance(path_or_bytes, (bytes, bytearray)):
        img = Image.open(io.BytesIO(path_or_bytes))
    else:
        img = Image.open(path_or_bytes)
    a = np.asarray(img)
    if a.ndim != 2:
        raise InvalidInputError("label PNG must be single-channel")
    return a.astype(np.int32)


def rle_encode(mask) -> list[int]:
    """Encode a 0/1 mask as a flat [start, length, start, length, ...] list.

    Runs are over the row-major flattened mask, starts are 0-based, runs
    never cross nothing special at row ends (a run may span rows; decoding
    is plain flat indexing so this is harmless and keeps the encoding dense).
    """
    m = as_mask(mask).ravel()
    if m.size == 0:
        return []
    edges = np.diff(np.concatenate(([0], m, [0])))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    out = np.empty(starts.size * 2, dtype=np.int64)
    out[0::2] = starts
    out[1::2] = ends - starts
    return out.tolist()


def rle_decode(runs, shape) -> np.ndarray:
    """Inverse of rle_encode. shape is (H, W)."""
    h, w = shape
    flat = np.zeros(h * w, dtype=np.uint8)
    if len(runs) % 2 != 0:
        raise InvalidInputError("run-length list must have even length")
    for i in range(0, len(runs), 2):
        s, n = runs[i], runs[i + 1]
        if n < 0 or s < 0 or s + n > flat.size:
            raise InvalidInputError("run exceeds raster bounds")
        flat[s:s + n] = 1
    return flat.reshape(h, w)
