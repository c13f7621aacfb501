"""Turn raw prediction maps into clean object masks and a full-image label map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .morph import connected_components, reconstruct, remove_small
from .raster import as_mask
from .signals import PatchSpec, place_mask

MIN_OBJECT_AREA = 50


@dataclass(frozen=True)
class ObjectResult:
    """One segmented object: a patch-space mask plus where it came from."""

    patch: PatchSpec
    mask: np.ndarray
    object_id: int

    def __post_init__(self):
        m = as_mask(self.mask)
        w, h = self.patch.size
        if m.shape != (h, w):
            raise InvalidInputError(
                f"mask shape {m.shape} does not match patch size {(h, w)}")
        if self.object_id < 1:
            raise InvalidInputError(f"object_id must be >= 1, got {self.object_id}")
        object.__setattr__(self, "mask", m)


def binarize(p: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Strictly-greater threshold: exactly 0.5 maps to background."""
    return (np.asarray(p) > threshold).astype(np.uint8)


def clean(mask: np.ndarray, inclusion: np.ndarray) -> np.ndarray:
    """Drop sub-50-px specks first, then keep only the components the
    inclusion guide touches."""
    m = as_mask(mask)
    inc = as_mask(inclusion)
    if m.shape != inc.shape:
        raise InvalidInputError(f"shape mismatch: {m.shape} vs {inc.shape}")
    lab = remove_small(connected_components(m), MIN_OBJECT_AREA)
    return reconstruct(inc, (lab > 0).astype(np.uint8))


def assemble(results, image_size) -> np.ndarray:
    """Paint every object mask back into image space, later results winning
    overlaps. `image_size` is (width, height); returns an int32 label map."""
    w, h = int(image_size[0]), int(image_size[1])
    if w < 1 or h < 1:
        raise InvalidInputError(f"bad image size {image_size}")
    canvas = np.zeros((h, w), dtype=np.int32)
    for res in results:
        place_mask(canvas, res.mask, res.patch, res.object_id)
    return canvas
