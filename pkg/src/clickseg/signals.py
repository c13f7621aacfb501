"""Guiding-signal synthesis: inclusion/exclusion maps and patch geometry.

A patch is a window into an image described by a PatchSpec: integer origin
(possibly negative for undersized images), a patch raster size, and per-axis
scale (image pixels per patch pixel). Images are mirror-padded outside their
bounds at extraction time; guide masks are zero-padded so no guide pixels are
fabricated.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import morph
from .errors import InvalidInputError, NotFoundError
from .raster import as_labels, as_mask


@dataclass(frozen=True)
class PatchSpec:
    """Window geometry. origin is the image-space (x, y) of patch pixel
    (0, 0); scale is image pixels per patch pixel along (x, y)."""
    origin: tuple[int, int]
    size: tuple[int, int]
    scale: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        w, h = self.size
        if w <= 0 or h <= 0:
            raise InvalidInputError("patch size must be positive")
        if self.scale[0] <= 0 or self.scale[1] <= 0:
            raise InvalidInputError("patch scale must be positive")

    def to_patch(self, point) -> tuple[float, float]:
        x, y = point
        return ((x - self.origin[0]) / self.scale[0],
                (y - self.origin[1]) / self.scale[1])

    def to_image(self, point) -> tuple[float, float]:
        x, y = point
        return (self.origin[0] + x * self.scale[0],
                self.origin[1] + y * self.scale[1])

    def footprint(self) -> tuple[int, int]:
        """Image-space extent (w, h) covered by the patch."""
        return (int(round(self.size[0] * self.scale[0])),
                int(round(self.size[1] * self.scale[1])))


@dataclass
class GuidingSignal:
    inclusion: np.ndarray
    exclusion: np.ndarray

    def __post_init__(self):
        self.inclusion = as_mask(self.inclusion)
        self.exclusion = as_mask(self.exclusion)
        if self.inclusion.shape != self.exclusion.shape:
            raise InvalidInputError("inclusion/exclusion shapes differ")
        if (self.inclusion & self.exclusion).any():
            raise InvalidInputError("inclusion and exclusion overlap")


def _mirror_index(idx: np.ndarray, n: int) -> np.ndarray:
    """Fold arbitrary integer indices into [0, n) by symmetric reflection
    (edge pixels repeat), period 2n."""
    if n == 1:
        return np.zeros_like(idx)
    m = np.mod(idx, 2 * n)
    return np.where(m < n, m, 2 * n - 1 - m)


def extract_patch(image: np.ndarray, spec: PatchSpec) -> np.ndarray:
    """Cut the window out of an image, mirror-padding outside the bounds.
    scale 1 is an exact gather; otherwise bilinear resampling at pixel
    centres. Output dtype is uint8."""
    img = np.asarray(image)
    h, w = img.shape[:2]
    pw, ph = spec.size
    ox, oy = spec.origin
    sx, sy = spec.scale
    if sx == 1.0 and sy == 1.0:
        iy = _mirror_index(oy + np.arange(ph), h)
        ix = _mirror_index(ox + np.arange(pw), w)
        return img[iy[:, None], ix[None, :]]
    # pixel-centre sampling: patch pixel p covers image span of width sx
    fx = ox + (np.arange(pw) + 0.5) * sx - 0.5
    fy = oy + (np.arange(ph) + 0.5) * sy - 0.5
    x0 = np.floor(fx).astype(np.int64)
    y0 = np.floor(fy).astype(np.int64)
    ax = (fx - x0)[None, :]
    ay = (fy - y0)[:, None]
    x0m = _mirror_index(x0, w)
    x1m = _mirror_index(x0 + 1, w)
    y0m = _mirror_index(y0, h)
    y1m = _mirror_index(y0 + 1, h)
    im = img.astype(np.float64)
    if im.ndim == 3:
        ax = ax[:, :, None]
        ay = ay[:, :, None]
    top = im[y0m[:, None], x0m[None, :]] * (1 - ax) + im[y0m[:, None], x1m[None, :]] * ax
    bot = im[y1m[:, None], x0m[None, :]] * (1 - ax) + im[y1m[:, None], x1m[None, :]] * ax
    out = top * (1 - ay) + bot * ay
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def extract_mask_patch(mask: np.ndarray, spec: PatchSpec) -> np.ndarray:
    """Window a 0/1 or label raster. Outside pixels are zero (background),
    never mirrored. Downscaling takes the max over each covered block so
    1-px structures survive; label maps therefore only use this at scale 1."""
    m = np.asarray(mask)
    h, w = m.shape
    pw, ph = spec.size
    ox, oy = spec.origin
    sx, sy = spec.scale
    if sx == 1.0 and sy == 1.0:
        out = np.zeros((ph, pw), dtype=m.dtype)
        iy = oy + np.arange(ph)
        ix = ox + np.arange(pw)
        okY = (iy >= 0) & (iy < h)
        okX = (ix >= 0) & (ix < w)
        out[np.ix_(okY, okX)] = m[np.ix_(iy[okY], ix[okX])]
        return out
    out = np.zeros((ph, pw), dtype=m.dtype)
    fw, fh = spec.footprint()
    iy = np.arange(max(oy, 0), min(oy + fh, h))
    ix = np.arange(max(ox, 0), min(ox + fw, w))
    if iy.size == 0 or ix.size == 0:
        return out
    qy = np.clip(((iy - oy) / sy).astype(np.int64), 0, ph - 1)
    qx = np.clip(((ix - ox) / sx).astype(np.int64), 0, pw - 1)
    np.maximum.at(out, (qy[:, None], qx[None, :]), m[np.ix_(iy, ix)])
    return out


def place_mask(canvas: np.ndarray, mask: np.ndarray, spec: PatchSpec, value: int) -> None:
    """Paint the foreground of a patch-space mask onto an image-space canvas
    in place, nearest-neighbour for scale != 1. Pixels outside the canvas are
    dropped (mirror padding never paints back)."""
    h, w = canvas.shape
    ox, oy = spec.origin
    sx, sy = spec.scale
    fw, fh = spec.footprint()
    iy = np.arange(max(oy, 0), min(oy + fh, h))
    ix = np.arange(max(ox, 0), min(ox + fw, w))
    if iy.size == 0 or ix.size == 0:
        return
    qy = np.clip(((iy - oy) / sy).astype(np.int64), 0, spec.size[1] - 1)
    qx = np.clip(((ix - ox) / sx).astype(np.int64), 0, spec.size[0] - 1)
    sub = np.asarray(mask)[qy[:, None], qx[None, :]]
    region = canvas[np.ix_(iy, ix)]
    region[sub > 0] = value
    canvas[np.ix_(iy, ix)] = region


def _patch_pixel(spec: PatchSpec, point) -> tuple[int, int]:
    qx, qy = spec.to_patch(point)
    return (int(np.floor(qx + 0.5)), int(np.floor(qy + 0.5)))


def _in_patch(spec: PatchSpec, px: tuple[int, int]) -> bool:
    return 0 <= px[0] < spec.size[0] and 0 <= px[1] < spec.size[1]


def click_signal(clicks, target_index: int, window: PatchSpec) -> GuidingSignal:
    """Point guides for one object: a single inclusion pixel at the target
    click, exclusion pixels at every other click that falls inside the
    window (clicks outside are dropped silently)."""
    if not 0 <= target_index < len(clicks):
        raise InvalidInputError("target_index out of range")
    w, h = window.size
    inc = np.zeros((h, w), dtype=np.uint8)
    exc = np.zeros((h, w), dtype=np.uint8)
    tx, ty = _patch_pixel(window, clicks[target_index])
    if not _in_patch(window, (tx, ty)):
        raise InvalidInputError("target click outside window")
    inc[ty, tx] = 1
    for i, c in enumerate(clicks):
        if i == target_index:
            continue
        px, py = _patch_pixel(window, c)
        if _in_patch(window, (px, py)) and not (px == tx and py == ty):
            exc[py, px] = 1
    return GuidingSignal(inc, exc)


def train_signal_nucleus(gt, target_id: int, rng) -> GuidingSignal:
    """Training guides for nuclei/cells: one random interior point of the
    target (>= 2 px from its boundary when possible, so the point keeps
    moving between epochs), and the snapped centroid of every other
    instance as exclusion."""
    lab = as_labels(gt)
    target = (lab == target_id).astype(np.uint8)
    if not target.any():
        raise NotFoundError(f"instance {target_id} not in label map")
    inc = np.zeros_like(target)
    x, y = morph.sample_interior_point(target, 2, rng)
    inc[y, x] = 1
    exc = np.zeros_like(target)
    for other in np.unique(lab):
        if other == 0 or other == target_id:
            continue
        cx, cy = morph.centroid(lab, int(other))
        exc[cy, cx] = 1
    return GuidingSignal(inc, exc)


def train_signal_gland(gt_mask, rng, others=None) -> GuidingSignal:
    """Training guide for glands: threshold the in-mask distance transform
    at a random tau ~ U[0, mu+sigma] (moments over foreground only), keep
    the largest surviving component, and use its skeleton as the inclusion
    squiggle. tau is redrawn up to 8 times if it wipes the mask, then forced
    to 0. Exclusion marks one snapped-centroid pixel per other instance in
    `others` (a label map), when given."""
    m = as_mask(gt_mask)
    if not m.any():
        raise InvalidInputError("gland mask is empty")
    d = morph.edt(m)
    fg = d[m > 0]
    mu, sigma = float(fg.mean()), float(fg.std())
    mbar = None
    for _ in range(8):
        tau = float(rng.uniform(0.0, mu + sigma))
        cand = (d > tau).astype(np.uint8)
        if cand.any():
            mbar = cand
            break
    if mbar is None:
        mbar = (d > 0.0).astype(np.uint8)
    comps = morph.connected_components(mbar)
    if comps.max() > 1:
        areas = np.bincount(comps.ravel())[1:]
        mbar = (comps == (int(np.argmax(areas)) + 1)).astype(np.uint8)
    inc = morph.skeletonize(mbar)
    exc = np.zeros_like(m)
    if others is not None:
        olab = as_labels(others)
        for oid in np.unique(olab):
            if oid == 0:
                continue
            cx, cy = morph.centroid(olab, int(oid))
            exc[cy, cx] = 1
    return GuidingSignal(inc, exc)


def _bresenham(x0: int, y0: int, x1: int, y1: int):
    """Integer 8-connected line from (x0, y0) to (x1, y1), inclusive."""
    dx = abs(x1 - x0)
    dy = abs(y1 - y0)
    sx = 1 if x1 >= x0 else -1
    sy = 1 if y1 >= y0 else -1
    err = dx - dy
    x, y = x0, y0
    while True:
        yield x, y
        if x == x1 and y == y1:
            return
        e2 = 2 * err
        if e2 > -dy:
            err -= dy
            x += sx
        if e2 < dx:
            err += dx
            y += sy


def rasterize_squiggle(squiggle, window: PatchSpec) -> np.ndarray:
    """Draw polylines (image coordinates, sub-pixel allowed) into the patch
    raster as 8-connected 1-px strokes. Pixels falling outside the window
    are clipped; a squiggle entirely outside raises."""
    w, h = window.size
    out = np.zeros((h, w), dtype=np.uint8)
    if not squiggle:
        raise InvalidInputError("squiggle has no polylines")
    plotted = 0
    for line in squiggle:
        if len(line) == 0:
            raise InvalidInputError("empty polyline")
        pts = [_patch_pixel(window, p) for p in line]
        if len(pts) == 1:
            px, py = pts[0]
            if 0 <= px < w and 0 <= py < h:
                out[py, px] = 1
                plotted += 1
            continue
        for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
            for x, y in _bresenham(x0, y0, x1, y1):
                if 0 <= x < w and 0 <= y < h:
                    if not out[y, x]:
                        plotted += 1
                    out[y, x] = 1
    if plotted == 0:
        raise InvalidInputError("squiggle lies entirely outside the window")
    return out


def patch_for_click(image_size, click, size: int) -> PatchSpec:
    """Square scale-1 window of the given size centred on the click and
    clamped to the image; if the image is narrower than the window in an
    axis the origin goes negative so the image sits centred and the margins
    mirror at extraction time."""
    iw, ih = image_size
    cx = int(np.floor(click[0] + 0.5))
    cy = int(np.floor(click[1] + 0.5))

    def axis(c, n):
        if n >= size:
            return min(max(c - size // 2, 0), n - size)
        return (n - size) // 2

    return PatchSpec(origin=(axis(cx, iw), axis(cy, ih)), size=(size, size))


def patch_for_squiggle(image_size, squiggle, target: int = 512) -> PatchSpec:
    """Window for a drawn squiggle: its bounding box, expanded symmetrically
    (clamped to the image) until each axis reaches `target`; an axis that
    still exceeds `target` keeps its full extent and records a downscale
    factor instead. The patch raster is always target x target."""
    if not squiggle or any(len(line) == 0 for line in squiggle):
        raise InvalidInputError("squiggle has no points")
    xs = [p[0] for line in squiggle for p in line]
    ys = [p[1] for line in squiggle for p in line]
    iw, ih = image_size

    def axis(lo, hi, n):
        a0 = int(np.floor(lo))
        a1 = int(np.ceil(hi))
        extent = a1 - a0 + 1
        if extent < target:
            if n < target:
                return (n - target) // 2, 1.0  # undersized image: mirror pad
            a0 -= (target - extent) // 2
            a0 = min(max(a0, 0), n - target)
            return a0, 1.0
        if extent == target:
            return a0, 1.0
        return a0, extent / target

    ox, sx = axis(min(xs), max(xs), iw)
    oy, sy = axis(min(ys), max(ys), ih)
    return PatchSpec(origin=(ox, oy), size=(target, target), scale=(sx, sy))


def jitter_click(click, radius: float, rng, image_size=None):
    """Displace a click by a uniform random offset of Euclidean norm <=
    radius, clamped to image bounds when image_size is given."""
    if radius == 0:
        return click
    theta = float(rng.uniform(0.0, 2.0 * np.pi))
    r = radius * float(np.sqrt(rng.uniform()))
    x = click[0] + r * np.cos(theta)
    y = click[1] + r * np.sin(theta)
    if image_size is not None:
        x = min(max(x, 0.0), image_size[0] - 1)
        y = min(max(y, 0.0), image_size[1] - 1)
    return (x, y)
