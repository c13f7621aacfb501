"""Training loop and evaluation harness.

Each training step samples an image, picks one target instance, synthesizes
fresh point/squiggle guides, crops a patch, and takes one optimizer step on
the combined dice + weighted cross-entropy objective.  The weight map uses
the target's full mask against the union of the other instances' masks.
Everything is driven by one seeded generator, so runs are reproducible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidConfigError, InvalidInputError
from .metrics import MetricReport, report
from .morph import centroid, sample_interior_point, skeletonize
from .network import (
    NetworkConfig,
    SegmentationModel,
    build,
    load_checkpoint,
    loss,
    save_checkpoint,
    weight_map,
)
from .neural import AdamState, Tensor, adam_step
from .postproc import ObjectResult, assemble, binarize, clean
from .signals import (
    click_signal,
    extract_mask_patch,
    extract_patch,
    jitter_click,
    patch_for_click,
    patch_for_squiggle,
    train_signal_gland,
    train_signal_nucleus,
)
from .synth import augment, load_dataset

GUIDE_MODES = ("gt-centroid", "gt-interior", "jitter")


@dataclass(frozen=True)
class TrainConfig:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    epochs: int = 40
    batch_size: int = 16
    steps_per_epoch: int = 0  # 0: one pass worth of batches per epoch
    lr: float = 3e-3
    weight_decay: float = 5e-5
    patch_size: int = 64
    seed: int = 0
    augment: bool = True
    exclusion: bool = True  # ablation flag: False zeroes the exclusion path
    checkpoint: str = "model.ckpt"
    log: str = "train_log.csv"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.steps_per_epoch < 0:
            raise InvalidConfigError("epochs/batch_size must be positive")
        if self.lr <= 0 or self.weight_decay <= 0:
            raise InvalidConfigError("lr and weight_decay must be > 0")
        div = 1 << self.network.depth
        if self.patch_size < div or self.patch_size % div:
            raise InvalidConfigError(
                f"patch_size must be a positive multiple of {div}")


def _instance_ids(lab: np.ndarray) -> np.ndarray:
    return np.unique(lab[lab > 0])


def _patch_channels(img, lab, target_id, spec, signal, exclusion: bool):
    """Assemble the 5-channel input plus patch-space target and other-mask."""
    rgb = extract_patch(img, spec).astype(np.float32) / 255.0
    inc = extract_mask_patch(signal.inclusion, spec)
    exc = extract_mask_patch(signal.exclusion, spec) if exclusion else \
        np.zeros_like(inc)
    x = np.concatenate([rgb.transpose(2, 0, 1),
                        inc[None].astype(np.float32),
                        exc[None].astype(np.float32)], axis=0)
    tgt = extract_mask_patch((lab == target_id).astype(np.uint8), spec)
    others = (lab > 0) & (lab != target_id)
    oth = extract_mask_patch(others.astype(np.uint8), spec) if exclusion else \
        np.zeros_like(tgt)
    return x, tgt, oth


def _train_sample(img, lab, target_id, rng, config: TrainConfig):
    kind = config.network.kind
    if kind == "gland":
        mask = (lab == target_id).astype(np.uint8)
        signal = train_signal_gland(mask, rng, others=np.where(
            lab == target_id, 0, lab).astype(np.int32))
        ys, xs = np.nonzero(signal.inclusion)
        anchor = (int(round(xs.mean())), int(round(ys.mean())))
    else:
        signal = train_signal_nucleus(lab, target_id, rng)
        ys, xs = np.nonzero(signal.inclusion)
        anchor = (int(xs[0]), int(ys[0]))
    h, w = lab.shape
    spec = patch_for_click((w, h), anchor, config.patch_size)
    return _patch_channels(img, lab, target_id, spec, signal, config.exclusion)


def make_batch(pairs, config: TrainConfig, rng):
    """(x, targets, others) batch arrays; x is (B, 5, P, P) float32."""
    B, P = config.batch_size, config.patch_size
    xb = np.zeros((B, 5, P, P), dtype=np.float32)
    gb = np.zeros((B, P, P), dtype=np.float64)
    ob = np.zeros((B, P, P), dtype=np.float64)
    for b in range(B):
        for _ in range(50):
            img, lab = pairs[int(rng.integers(len(pairs)))]
            if config.augment:
                img, lab = augment(img, lab, rng)
            ids = _instance_ids(lab)
            if ids.size == 0:
                continue
            target = int(ids[int(rng.integers(ids.size))])
            x, tgt, oth = _train_sample(img, lab, target, rng, config)
            if tgt.sum() == 0:
                continue  # instance landed outside its patch crop
            xb[b], gb[b], ob[b] = x, tgt, oth
            break
        else:
            raise InvalidInputError("could not sample a trainable instance")
    return xb, gb, ob


def train_step(model: SegmentationModel, params, opt: AdamState,
               xb, gb, ob, dice_factor_two: bool) -> float:
    """One forward/backward/update on a prepared batch; returns mean loss."""
    out = model.forward(Tensor(xb), training=True)
    p = out.data[:, 0].astype(np.float64)
    B = p.shape[0]
    total = 0.0
    seed = np.zeros_like(p)
    for i in range(B):
        w = weight_map(gb[i], ob[i]) if gb[i].sum() else np.ones_like(gb[i])
        v, gr = loss(p[i], gb[i], w, dice_factor_two=dice_factor_two)
        total += v
        seed[i] = gr
    total /= B
    seed /= B
    out.backward(seed[:, None, :, :].astype(np.float32))
    adam_step(params, [prm.grad for prm in params], opt)
    for prm in params:
        prm.grad = None
    return total


def train(dataset_path, config: TrainConfig):
    """Full run: returns (model, log rows) and writes checkpoint + CSV log.

    Log rows are (epoch, mean_loss, lr); determinism is down to the seed."""
    manifest, pairs = load_dataset(dataset_path)
    if not pairs:
        raise InvalidInputError(f"dataset at {dataset_path} is empty")
    rng = np.random.default_rng(config.seed)
    model = build(config.network, rng)
    params = model.parameters()
    opt = AdamState(lr=config.lr, weight_decay=config.weight_decay)
    steps = config.steps_per_epoch or max(1, len(pairs) // config.batch_size)
    rows = []
    for epoch in range(config.epochs):
        losses = []
        for _ in range(steps):
            xb, gb, ob = make_batch(pairs, config, rng)
            losses.append(train_step(model, params, opt, xb, gb, ob,
                                     config.network.dice_factor_two))
        rows.append((epoch, float(np.mean(losses)), config.lr))
    save_checkpoint(model, config.checkpoint)
    with open(config.log, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["epoch", "mean_loss", "lr"])
        wr.writerows(rows)
    return model, rows


# -- evaluation ----------------------------------------------------------------


def _click_for_instance(lab, lid, mode, sigma, rng):
    if mode == "gt-interior":
        return sample_interior_point((lab == lid).astype(np.uint8), 2, rng)
    c = centroid(lab, lid)
    if mode == "jitter" and sigma > 0:
        h, w = lab.shape
        return jitter_click(c, sigma, rng, image_size=(w, h))
    return c


def predict_objects(model: SegmentationModel, img, lab, *, mode="gt-centroid",
                    sigma=0.0, rng=None, exclusion=True):
    """Segment every GT instance of one image with synthesized guides.

    Returns a list of ObjectResult keyed 1..K in instance order."""
    if rng is None:
        rng = np.random.default_rng(0)
    if mode not in GUIDE_MODES:
        raise InvalidInputError(f"guide mode must be one of {GUIDE_MODES}")
    P = model.config.patch_size
    h, w = lab.shape
    ids = [int(v) for v in _instance_ids(lab)]
    results = []
    if model.config.kind == "gland":
        for k, lid in enumerate(ids, start=1):
            m = (lab == lid).astype(np.uint8)
            sk = skeletonize(m)
            pts = [(int(x), int(y)) for y, x in np.argwhere(sk > 0)]
            spec = patch_for_squiggle((w, h), [pts], target=P)
            inc_img = sk
            exc_img = np.zeros_like(sk)
            if exclusion:
                for other in ids:
                    if other != lid:
                        cx, cy = centroid(lab, other)
                        exc_img[cy, cx] = 1
            rgb = extract_patch(img, spec).astype(np.float32) / 255.0
            inc = extract_mask_patch(inc_img, spec)
            exc = extract_mask_patch(exc_img, spec)
            x = np.concatenate([rgb.transpose(2, 0, 1), inc[None].astype(np.float32),
                                exc[None].astype(np.float32)], axis=0)
            p = model.predict(x)
            mask = clean(binarize(p), inc)
            results.append(ObjectResult(spec, mask, k))
        return results
    clicks = [_click_for_instance(lab, lid, mode, sigma, rng) for lid in ids]
    for k, lid in enumerate(ids, start=1):
        spec = patch_for_click((w, h), clicks[k - 1], P)
        signal = click_signal(clicks, k - 1, spec)
        if not exclusion:
            signal.exclusion[...] = 0
        rgb = extract_patch(img, spec).astype(np.float32) / 255.0
        x = np.concatenate([rgb.transpose(2, 0, 1),
                            signal.inclusion[None].astype(np.float32),
                            signal.exclusion[None].astype(np.float32)], axis=0)
        p = model.predict(x)
        mask = clean(binarize(p), signal.inclusion)
        results.append(ObjectResult(spec, mask, k))
    return results


def evaluate(model_or_path, dataset_path, *, mode="gt-centroid", sigma=0.0,
             seed=0, exclusion=True) -> MetricReport:
    """Score a model over a labeled dataset; per-image metrics averaged.

    The returned report's pq is the mean of per-image pq values (so pq is
    not exactly dq*sq after averaging)."""
    model = (model_or_path if isinstance(model_or_path, SegmentationModel)
             else load_checkpoint(model_or_path))
    manifest, pairs = load_dataset(dataset_path)
    if not pairs:
        raise InvalidInputError(f"dataset at {dataset_path} is empty")
    for entry in manifest["files"]:
        if "labels" not in entry:
            raise InvalidInputError("dataset has no labels; cannot evaluate")
    rng = np.random.default_rng(seed)
    reports = []
    for img, lab in pairs:
        h, w = lab.shape
        results = predict_objects(model, img, lab, mode=mode, sigma=sigma,
                                  rng=rng, exclusion=exclusion)
        pred = assemble(results, (w, h))
        reports.append(report(lab, pred))
    def mean(name):
        return float(np.mean([getattr(r, name) for r in reports]))
    return MetricReport(
        aji=mean("aji"), dice=mean("dice"), dq=mean("dq"), sq=mean("sq"),
        pq=mean("pq"), hausdorff_mean=mean("hausdorff_mean"),
        obj_f1=mean("obj_f1"), obj_dice=mean("obj_dice"),
        matched=int(sum(r.matched for r in reports)),
        missed=int(sum(r.missed for r in reports)),
        spurious=int(sum(r.spurious for r in reports)),
    )
