"""Instance-segmentation scoring: AJI, dice, panoptic DQ/SQ/PQ, per-object
Hausdorff, and object-level F1/dice.

Conventions for degenerate inputs (both maps empty): dice = 1, aji = 1,
panoptic = (1, 1, 1), object-level = (1, 1, 0).  When object exist but
nothing matches, the matched-pair means fall back to 0.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidInputError
from .raster import as_labels


@dataclass(frozen=True)
class MetricReport:
    aji: float
    dice: float
    dq: float
    sq: float
    pq: float
    hausdorff_mean: float
    obj_f1: float
    obj_dice: float
    matched: int
    missed: int
    spurious: int

    def to_dict(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        rows = [
            ("aji", self.aji), ("dice", self.dice), ("dq", self.dq),
            ("sq", self.sq), ("pq", self.pq),
            ("hausdorff_mean", self.hausdorff_mean),
            ("obj_f1", self.obj_f1), ("obj_dice", self.obj_dice),
            ("matched", self.matched), ("missed", self.missed),
            ("spurious", self.spurious),
        ]
        width = max(len(k) for k, _ in rows)
        lines = []
        for k, v in rows:
            val = f"{v:.6f}" if isinstance(v, float) else str(v)
            lines.append(f"{k.ljust(width)}  {val}")
        return "\n".join(lines)


def _check_same_size(a, b):
    if a.shape != b.shape:
        raise InvalidInputError(f"size mismatch: {a.shape} vs {b.shape}")


def _areas(lab: np.ndarray) -> dict:
    ids, cnt = np.unique(lab[lab > 0], return_counts=True)
    return dict(zip(ids.tolist(), cnt.tolist()))


def _intersections(gt: np.ndarray, pred: np.ndarray) -> dict:
    """{(gt_label, pred_label): overlap pixel count} over foreground pairs."""
    both = (gt > 0) & (pred > 0)
    if not both.any():
        return {}
    g = gt[both].astype(np.int64)
    p = pred[both].astype(np.int64)
    stride = int(pred.max()) + 1
    key = g * stride + p
    uniq, cnt = np.unique(key, return_counts=True)
    return {(int(k // stride), int(k % stride)): int(c)
            for k, c in zip(uniq, cnt)}


def aji(gt: np.ndarray, pred: np.ndarray) -> float:
    """Aggregated Jaccard Index.

    Ground-truth instances are visited in ascending label order; each is
    matched to the highest-IoU prediction not yet used (ties to the lowest
    prediction label).  Unmatched prediction pixels join the union at the
    end.  Both maps empty scores 1 by convention.
    """
    gt = as_labels(gt)
    pred = as_labels(pred)
    _check_same_size(gt, pred)
    g_area = _areas(gt)
    p_area = _areas(pred)
    inter = _intersections(gt, pred)

    by_gt: dict = {}
    for (gi, pj), c in inter.items():
        by_gt.setdefault(gi, []).append((pj, c))

    used = set()
    c_total = 0
    u_total = 0
    for gi in sorted(g_area):
        best = None  # (iou, pj, inter, union)
        for pj, c in by_gt.get(gi, []):
            if pj in used:
                continue
            union = g_area[gi] + p_area[pj] - c
            iou = c / union
            if best is None or iou > best[0] or (iou == best[0] and pj < best[1]):
                best = (iou, pj, c, union)
        if best is None or best[0] == 0.0:
            u_total += g_area[gi]
        else:
            _, pj, c, union = best
            c_total += c
            u_total += union
            used.add(pj)
    for pj, area in p_area.items():
        if pj not in used:
            u_total += area
    if u_total == 0:
        return 1.0
    return c_total / u_total


def dice(gt: np.ndarray, pred: np.ndarray) -> float:
    """2|A∩B| / (|A| + |B|); 1.0 when both masks are empty."""
    a = np.asarray(gt) > 0
    b = np.asarray(pred) > 0
    _check_same_size(a, b)
    sa = int(a.sum())
    sb = int(b.sum())
    if sa + sb == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / (sa + sb)


def _iou_matches(gt: np.ndarray, pred: np.ndarray):
    """Unique matching at IoU > 0.5. Returns (matches, n_gt, n_pred) where
    matches is a list of (gt_label, pred_label, iou)."""
    g_area = _areas(gt)
    p_area = _areas(pred)
    inter = _intersections(gt, pred)
    matches = []
    seen_g = set()
    seen_p = set()
    for (gi, pj), c in sorted(inter.items()):
        iou = c / (g_area[gi] + p_area[pj] - c)
        if iou > 0.5:
            # the > 0.5 threshold makes matches unique; check anyway
            if gi in seen_g or pj in seen_p:
                raise AssertionError("IoU>0.5 produced a double match")
            seen_g.add(gi)
            seen_p.add(pj)
            matches.append((gi, pj, iou))
    return matches, len(g_area), len(p_area)


def panoptic(gt: np.ndarray, pred: np.ndarray):
    """(DQ, SQ, PQ) with matching at IoU > 0.5.

    DQ = 2TP / (2TP + FP + FN); SQ = mean matched IoU (0 if none);
    PQ = DQ * SQ.  Two empty maps score (1, 1, 1).
    """
    gt = as_labels(gt)
    pred = as_labels(pred)
    _check_same_size(gt, pred)
    matches, n_gt, n_pred = _iou_matches(gt, pred)
    tp = len(matches)
    fn = n_gt - tp
    fp = n_pred - tp
    if n_gt == 0 and n_pred == 0:
        return 1.0, 1.0, 1.0
    dq = 2.0 * tp / (2.0 * tp + fp + fn)
    sq = float(np.mean([m[2] for m in matches])) if matches else 0.0
    return dq, sq, dq * sq


def _boundary(mask: np.ndarray) -> np.ndarray:
    """Foreground pixels 8-adjacent to background; the raster edge counts
    as background here (a full-frame object still has a boundary)."""
    m = (np.asarray(mask) > 0)
    pad = np.pad(m, 1, mode="constant", constant_values=False)
    interior = np.ones_like(m)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            interior &= pad[1 + dy:1 + dy + m.shape[0], 1 + dx:1 + dx + m.shape[1]]
    return m & ~interior


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two masks' boundary pixel sets."""
    am = np.asarray(a) > 0
    bm = np.asarray(b) > 0
    _check_same_size(am, bm)
    if not am.any() or not bm.any():
        raise InvalidInputError("hausdorff needs two nonempty masks")
    pa = np.argwhere(_boundary(am)).astype(np.float64)
    pb = np.argwhere(_boundary(bm)).astype(np.float64)
    # max-min in both directions, chunked to bound memory
    def directed(src, dst):
        worst = 0.0
        for i in range(0, len(src), 1024):
            chunk = src[i:i + 1024]
            d2 = ((chunk[:, None, :] - dst[None, :, :]) ** 2).sum(axis=2)
            worst = max(worst, float(d2.min(axis=1).max()))
        return worst
    return float(np.sqrt(max(directed(pa, pb), directed(pb, pa))))


def object_level(gt: np.ndarray, pred: np.ndarray):
    """(obj_f1, obj_dice, hausdorff_mean) from the IoU>0.5 matching.

    obj_dice and hausdorff_mean average over matched pairs, weighted by
    ground-truth object area.  No objects on either side gives (1, 1, 0);
    objects but no matches gives (0, 0, 0).
    """
    gt = as_labels(gt)
    pred = as_labels(pred)
    _check_same_size(gt, pred)
    matches, n_gt, n_pred = _iou_matches(gt, pred)
    if n_gt == 0 and n_pred == 0:
        return 1.0, 1.0, 0.0
    tp = len(matches)
    f1 = 2.0 * tp / (2.0 * tp + (n_pred - tp) + (n_gt - tp))
    if not matches:
        return f1, 0.0, 0.0
    g_area = _areas(gt)
    weights = np.array([g_area[gi] for gi, _, _ in matches], dtype=np.float64)
    weights /= weights.sum()
    dices = []
    hausdorffs = []
    for gi, pj, _ in matches:
        gm = gt == gi
        pm = pred == pj
        dices.append(dice(gm, pm))
        hausdorffs.append(hausdorff(gm, pm))
    obj_dice = float((weights * np.array(dices)).sum())
    hd_mean = float((weights * np.array(hausdorffs)).sum())
    return f1, obj_dice, hd_mean


def report(gt: np.ndarray, pred: np.ndarray) -> MetricReport:
    """Run the whole suite on one label-map pair."""
    gt = as_labels(gt)
    pred = as_labels(pred)
    _check_same_size(gt, pred)
    dq, sq, pq = panoptic(gt, pred)
    obj_f1, obj_dice, hd_mean = object_level(gt, pred)
    matches, n_gt, n_pred = _iou_matches(gt, pred)
    tp = len(matches)
    return MetricReport(
        aji=aji(gt, pred),
        dice=dice(gt > 0, pred > 0),
        dq=dq, sq=sq, pq=pq,
        hausdorff_mean=hd_mean,
        obj_f1=obj_f1, obj_dice=obj_dice,
        matched=tp, missed=n_gt - tp, spurious=n_pred - tp,
    )
