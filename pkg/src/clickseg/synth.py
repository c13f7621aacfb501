"""Seeded synthetic microscopy images with exact instance ground truth.

Three families: elliptical nuclei on a textured background, two-compartment
cells (dark nucleus inside lighter cytoplasm) blended with feathered alpha,
and annular glands whose lumen is a real hole in the instance label.
Everything is a pure function of the config (including its seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import InvalidConfigError, InvalidInputError
from .raster import load_image, load_labels_png, save_image, save_labels_png

KINDS = ("nucleus", "cell", "gland")


@dataclass(frozen=True)
class SynthConfig:
    kind: str = "nucleus"
    canvas: tuple = (64, 64)  # (width, height)
    count_range: tuple = (3, 7)
    size_range: tuple = (10, 22)  # object extent in px (max diameter)
    touching_prob: float = 0.0
    noise: float = 5.0
    lumen: bool = True  # glands only: carve the interior hole
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        w, h = self.canvas
        if w < 16 or h < 16:
            raise InvalidConfigError(f"canvas too small: {self.canvas}")
        lo, hi = self.count_range
        if not (0 <= lo <= hi):
            raise InvalidConfigError(f"empty count range {self.count_range}")
        slo, shi = self.size_range
        if not (4 <= slo <= shi):
            raise InvalidConfigError(f"bad size range {self.size_range}")
        if self.kind == "gland" and shi < 16:
            raise InvalidConfigError(
                f"glands need size_range max >= 16 to fit a lumen, got {shi}")
        if shi + 6 > min(w, h):
            raise InvalidConfigError(
                f"size range {self.size_range} does not fit canvas {self.canvas}")
        if not 0.0 <= self.touching_prob <= 1.0:
            raise InvalidConfigError(f"touching_prob outside [0,1]: {self.touching_prob}")
        if self.noise < 0:
            raise InvalidConfigError(f"negative noise level {self.noise}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "canvas": list(self.canvas),
            "count_range": list(self.count_range),
            "size_range": list(self.size_range),
            "touching_prob": self.touching_prob, "noise": self.noise,
            "lumen": self.lumen, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        return cls(kind=d["kind"], canvas=tuple(d["canvas"]),
                   count_range=tuple(d["count_range"]),
                   size_range=tuple(d["size_range"]),
                   touching_prob=float(d["touching_prob"]),
                   noise=float(d["noise"]), lumen=bool(d.get("lumen", True)),
                   seed=int(d["seed"]))


# -- rendering helpers -------------------------------------------------------


def _box_blur(f: np.ndarray, k: int) -> np.ndarray:
    if k <= 1:
        return f
    kern = np.ones(k) / k
    out = np.apply_along_axis(lambda r: np.convolve(r, kern, mode="same"), 1, f)
    return np.apply_along_axis(lambda c: np.convolve(c, kern, mode="same"), 0, out)


def _texture(rng, shape, base, noise) -> np.ndarray:
    """Low-frequency blotches plus per-pixel noise around a base color."""
    h, w = shape
    img = np.empty((h, w, 3), dtype=np.float64)
    blotch = _box_blur(rng.normal(0.0, 18.0, (h, w)), 9)
    for c in range(3):
        img[:, :, c] = base[c] + blotch + rng.normal(0.0, noise, (h, w))
    return img


def ellipse_field(shape, center, axes, theta: float) -> np.ndarray:
    """Quadratic form of a rotated ellipse: <=1 inside, 1 on the boundary."""
    h, w = shape
    cx, cy = center
    a, b = axes
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dx = xx - cx
    dy = yy - cy
    ct, st = np.cos(theta), np.sin(theta)
    u = dx * ct + dy * st
    v = -dx * st + dy * ct
    return (u / a) ** 2 + (v / b) ** 2


def feathered_alpha(field: np.ndarray, reff: float, feather: float) -> np.ndarray:
    """Alpha ramp 0 at the field=1 boundary rising inward over ~feather px.

    feather = 0 degenerates to the hard 0/1 footprint.
    """
    if feather <= 0:
        return (field <= 1.0).astype(np.float64)
    ramp = (1.0 - field) * reff / (2.0 * feather)
    return np.clip(ramp, 0.0, 1.0) * (field <= 1.0)


def paste(image: np.ndarray, alpha: np.ndarray, color) -> None:
    """Alpha-blend a flat color into a float image, in place."""
    a = alpha[:, :, None]
    col = np.asarray(color, dtype=np.float64)[None, None, :]
    image *= (1.0 - a)
    image += a * col


def _finish(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def _dilate8(m: np.ndarray) -> np.ndarray:
    p = np.pad(m, 1)
    out = np.zeros_like(m, dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            out |= p[1 + dy:1 + dy + m.shape[0], 1 + dx:1 + dx + m.shape[1]].astype(bool)
    return out


def _slide_until_touching(shape_mask: np.ndarray, taken: np.ndarray):
    """Translate a candidate footprint along its approach line until it is
    8-adjacent to `taken` without overlapping it. Returns the shifted mask
    or None."""
    h, w = taken.shape
    ys, xs = np.nonzero(shape_mask)
    if ys.size == 0:
        return None
    ty, tx = np.nonzero(taken)
    cy, cx = ys.mean(), xs.mean()
    oy, ox = ty.mean(), tx.mean()
    dy, dx = oy - cy, ox - cx
    norm = max(np.hypot(dy, dx), 1e-9)
    dy, dx = dy / norm, dx / norm
    ring = _dilate8(taken > 0) & ~(taken > 0)
    for step in range(0, 2 * max(h, w)):
        sy = int(round(dy * step))
        sx = int(round(dx * step))
        cand = np.zeros_like(shape_mask)
        yy = ys + sy
        xx = xs + sx
        ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        if not ok.all():
            return None  # slid out of canvas
        cand[yy, xx] = 1
        if (cand & (taken > 0)).any():
            return None  # passed through without a clean touching stop
        if (cand.astype(bool) & ring).any():
            return cand
    return None


# -- generators ----------------------------------------------------------------


def _sample_ellipse(rng, config, taken, touching: bool):
    """One placement attempt. Returns (mask, field, axes) or None."""
    h, w = taken.shape
    slo, shi = config.size_range
    extent = rng.uniform(slo, shi)
    a = extent / 2.0
    b = a * rng.uniform(0.55, 0.95)
    theta = rng.uniform(0.0, np.pi)
    margin = a + 2
    cx = rng.uniform(margin, w - margin)
    cy = rng.uniform(margin, h - margin)
    field = ellipse_field((h, w), (cx, cy), (a, b), theta)
    mask = (field <= 1.0).astype(np.uint8)
    if mask.sum() < 8:
        return None
    if touching and taken.any():
        mask = _slide_until_touching(mask, taken)
        if mask is None:
            return None
        # recompute the shading field at the shifted location
        ys, xs = np.nonzero(mask)
        field = ellipse_field((h, w), (xs.mean(), ys.mean()), (a, b), theta)
    elif (mask & (taken > 0)).any() or (_dilate8(mask > 0) & (taken > 0)).any():
        return None  # non-touching placements keep a 1-px gap
    return mask, field, (a, b)


def gen_nuclei(config: SynthConfig):
    """Elliptical nuclei with color jitter on a textured background."""
    rng = np.random.default_rng(config.seed)
    w, h = config.canvas
    labels = np.zeros((h, w), dtype=np.int32)
    img = _texture(rng, (h, w), (214, 196, 222), config.noise)
    lo, hi = config.count_range
    target = int(rng.integers(lo, hi + 1))
    next_id = 1
    for _ in range(target):
        for _attempt in range(80):
            touching = labels.any() and rng.random() < config.touching_prob
            got = _sample_ellipse(rng, config, labels, touching)
            if got is None:
                continue
            mask, field, (a, b) = got
            base = np.array([88, 52, 128]) + rng.uniform(-22, 22, 3)
            shade = 1.0 - 0.25 * np.clip(field, 0, 1)  # darker toward the rim
            alpha = feathered_alpha(field, min(a, b), 1.0) * mask
            for c in range(3):
                chan = img[:, :, c]
                col = base[c] * shade
                chan[...] = chan * (1 - alpha) + col * alpha
            labels[mask > 0] = next_id
            next_id += 1
            break
    return _finish(img), labels


def gen_cells(config: SynthConfig):
    """Two-compartment cells feather-blended onto a textured canvas."""
    rng = np.random.default_rng(config.seed)
    w, h = config.canvas
    labels = np.zeros((h, w), dtype=np.int32)
    img = _texture(rng, (h, w), (228, 225, 218), config.noise)
    lo, hi = config.count_range
    target = int(rng.integers(lo, hi + 1))
    next_id = 1
    for _ in range(target):
        for _attempt in range(80):
            touching = labels.any() and rng.random() < config.touching_prob
            got = _sample_ellipse(rng, config, labels, touching)
            if got is None:
                continue
            mask, field, (a, b) = got
            cyto = np.array([196, 214, 233]) + rng.uniform(-16, 16, 3)
            nuc = np.array([96, 70, 150]) + rng.uniform(-18, 18, 3)
            alpha = feathered_alpha(field, min(a, b), 2.0) * mask
            paste(img, alpha, cyto)
            # nucleus compartment: a smaller off-center ellipse, image only
            ys, xs = np.nonzero(mask)
            ncx = xs.mean() + rng.uniform(-a / 4, a / 4)
            ncy = ys.mean() + rng.uniform(-a / 4, a / 4)
            nfield = ellipse_field((h, w), (ncx, ncy), (a * 0.45, b * 0.45),
                                   rng.uniform(0, np.pi))
            nalpha = feathered_alpha(nfield, min(a, b) * 0.45, 1.5)
            paste(img, nalpha * (mask > 0), nuc)
            labels[mask > 0] = next_id
            next_id += 1
            break
    return _finish(img), labels


def _gland_masks(rng, config, taken):
    """One gland placement attempt: (ring_mask, lumen_mask) or None."""
    h, w = taken.shape
    slo, shi = config.size_range
    diameter = rng.uniform(max(slo, 14), shi)
    # wobbly radius profile, normalized so the max radius is diameter/2
    k = int(rng.integers(2, 5))
    phase = rng.uniform(0, 2 * np.pi)
    amp = rng.uniform(0.05, 0.14)
    margin = diameter / 2 + 2
    if margin * 2 >= min(h, w):
        return None
    cx = rng.uniform(margin, w - margin)
    cy = rng.uniform(margin, h - margin)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    ang = np.arctan2(yy - cy, xx - cx)
    rad = np.hypot(yy - cy, xx - cx)
    profile = 1.0 + amp * np.cos(k * ang + phase)
    router = (diameter / 2.0) * profile / (1.0 + amp)
    thickness = max(3.0, 0.30 * diameter / 2.0)
    rinner = np.maximum(router - thickness, 0.0)
    outer = rad <= router
    lumen = rad <= rinner
    ring = outer & ~lumen if config.lumen else outer
    ring = ring.astype(np.uint8)
    if ring.sum() < 30 or (config.lumen and lumen.sum() < 4):
        return None
    if ((_dilate8(outer) | outer) & (taken > 0)).any():
        return None
    return ring, (lumen & outer).astype(np.uint8)


def gen_glands(config: SynthConfig):
    """Annular glands; with lumen enabled the hole is left unlabeled."""
    rng = np.random.default_rng(config.seed)
    w, h = config.canvas
    labels = np.zeros((h, w), dtype=np.int32)
    img = _texture(rng, (h, w), (231, 203, 214), config.noise)
    lo, hi = config.count_range
    target = int(rng.integers(lo, hi + 1))
    next_id = 1
    for _ in range(target):
        for _attempt in range(80):
            got = _gland_masks(rng, config, labels)
            if got is None:
                continue
            ring, lumen = got
            epith = np.array([150, 96, 160]) + rng.uniform(-16, 16, 3)
            pale = np.array([246, 240, 243]) + rng.uniform(-6, 6, 3)
            paste(img, ring.astype(np.float64) * 0.95, epith)
            if config.lumen:
                paste(img, lumen.astype(np.float64) * 0.95, pale)
            labels[ring > 0] = next_id
            next_id += 1
            break
    return _finish(img), labels


_GENERATORS = {"nucleus": gen_nuclei, "cell": gen_cells, "gland": gen_glands}


def generate(config: SynthConfig):
    """(image, labels) for the configured object kind."""
    return _GENERATORS[config.kind](config)


# -- augmentation ------------------------------------------------------------


def hflip(image: np.ndarray, labels: np.ndarray):
    return image[:, ::-1].copy(), labels[:, ::-1].copy()


def vflip(image: np.ndarray, labels: np.ndarray):
    return image[::-1].copy(), labels[::-1].copy()


def augment(image: np.ndarray, labels: np.ndarray, rng, *,
            noise_sigma: float = 5.0, brightness: float = 0.12,
            contrast: float = 0.12):
    """Joint flips, then image-only photometric jitter.

    The label raster is only ever flipped; with all photometric magnitudes
    zero the image comes back pixel-identical (modulo the flips).
    """
    img, lab = image, labels
    if rng.random() < 0.5:
        img, lab = hflip(img, lab)
    if rng.random() < 0.5:
        img, lab = vflip(img, lab)
    if noise_sigma == 0 and brightness == 0 and contrast == 0:
        return (img.copy() if img is image else img), lab
    f = img.astype(np.float64)
    if brightness:
        f = f * (1.0 + rng.uniform(-brightness, brightness))
    if contrast:
        c = 1.0 + rng.uniform(-contrast, contrast)
        mu = f.mean()
        f = (f - mu) * c + mu
    if noise_sigma:
        f = f + rng.normal(0.0, noise_sigma, f.shape)
    return _finish(f), lab


# -- dataset IO ----------------------------------------------------------------


def per_image_seed(master_seed: int, index: int) -> int:
    return (master_seed * 1_000_003 + index * 7919 + 1) % (2 ** 63)


def gen_dataset(config: SynthConfig, count: int):
    """`count` independent draws; per-image seeds derived from config.seed."""
    if count < 0:
        raise InvalidInputError(f"negative count {count}")
    out = []
    for i in range(count):
        seed = per_image_seed(config.seed, i)
        img, lab = generate(replace(config, seed=seed))
        out.append((img, lab, seed))
    return out


def save_dataset(path, config: SynthConfig, items) -> None:
    """Layout: images/NNNN.png, labels/NNNN.png (16-bit), manifest.json."""
    root = Path(path)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "labels").mkdir(parents=True, exist_ok=True)
    files = []
    for i, (img, lab, seed) in enumerate(items):
        name = f"{i:04d}.png"
        save_image(root / "images" / name, img)
        save_labels_png(root / "labels" / name, lab)
        files.append({"image": f"images/{name}", "labels": f"labels/{name}",
                      "seed": int(seed)})
    manifest = {"config": config.to_dict(), "count": len(files), "files": files}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1))


def load_dataset(path):
    """Returns (manifest dict, list of (image, labels))."""
    root = Path(path)
    mpath = root / "manifest.json"
    if not mpath.exists():
        raise InvalidInputError(f"no dataset manifest under {root}")
    manifest = json.loads(mpath.read_text())
    pairs = []
    for entry in manifest["files"]:
        img = load_image(root / entry["image"])
        lab = load_labels_png(root / entry["labels"])
        pairs.append((img, lab))
    return manifest, pairs
