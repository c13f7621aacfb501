"""Binary morphology on 0/1 masks: exact distance transform, connected
components, topology-preserving thinning, marker reconstruction.

Everything here is pure numpy on uint8/int32 rasters. Foreground connectivity
is 8-way, background 4-way (the standard dual pair, used consistently by the
components, thinning and hole logic).
"""
from __future__ import annotations

import numpy as np

from .errors import InvalidInputError
from .raster import as_mask

# offsets of the 8-neighbourhood, clockwise from north
_N8 = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))
_N4 = ((-1, 0), (0, 1), (1, 0), (0, -1))


def edt(mask) -> np.ndarray:
    """Exact Euclidean distance to the nearest background pixel.

    Background pixels get 0. Distances are measured between pixel centres,
    so a foreground pixel 4-adjacent to background gets 1.0. Pixels outside
    the raster are not treated as background; if the mask has no background
    at all, every pixel gets the finite sentinel float(H + W).

    Two-phase separable scan: per-row 1-d distances, then a min over row
    offsets of dy^2 + rowdist^2. All integer until the final sqrt, so the
    result matches a brute-force nearest-background search exactly.
    """
    m = as_mask(mask)
    h, w = m.shape
    if m.size == 0:
        return np.zeros(m.shape, dtype=np.float64)
    inf = h + w  # larger than any achievable 1-d distance
    rd = np.where(m == 0, 0, inf).astype(np.int64)
    for x in range(1, w):
        np.minimum(rd[:, x], rd[:, x - 1] + 1, out=rd[:, x])
    for x in range(w - 2, -1, -1):
        np.minimum(rd[:, x], rd[:, x + 1] + 1, out=rd[:, x])
    rd2 = rd * rd
    cap = np.int64(inf) * inf
    ys = np.arange(h, dtype=np.int64)
    d2 = np.empty((h, w), dtype=np.int64)
    # chunk output rows so the (chunk, H, W) broadcast stays small
    chunk = max(1, int(4_000_000 // max(1, h * w)))
    for y0 in range(0, h, chunk):
        y1 = min(y0 + chunk, h)
        dy = ys[y0:y1, None] - ys[None, :]
        d2[y0:y1] = (dy[:, :, None] * dy[:, :, None] + rd2[None, :, :]).min(axis=1)
    out = np.sqrt(d2.astype(np.float64))
    out[d2 >= cap] = float(inf)
    return out


def connected_components(mask) -> np.ndarray:
    """Label 8-connected foreground components 1..K in raster-scan order
    of each component's first (topmost, then leftmost) pixel."""
    m = as_mask(mask)
    h, w = m.shape
    lab = np.zeros((h, w), dtype=np.int32)
    nxt = 0
    flat = m.ravel()
    labf = lab.ravel()
    for start in np.flatnonzero(flat):
        if labf[start]:
            continue
        nxt += 1
        stack = [start]
        labf[start] = nxt
        while stack:
            p = stack.pop()
            y, x = divmod(int(p), w)
            for dy, dx in _N8:
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w:
                    q = ny * w + nx
                    if flat[q] and not labf[q]:
                        labf[q] = nxt
                        stack.append(q)
    return lab


def remove_small(labels, min_area: int) -> np.ndarray:
    """Drop instances with fewer than min_area pixels, then renumber the
    survivors 1..K preserving their original label order."""
    lab = np.asarray(labels, dtype=np.int32)
    if lab.size == 0 or lab.max() == 0:
        return lab.copy()
    counts = np.bincount(lab.ravel())
    keep = np.flatnonzero(counts >= min_area)
    keep = keep[keep > 0]
    remap = np.zeros(counts.size, dtype=np.int32)
    remap[keep] = np.arange(1, keep.size + 1, dtype=np.int32)
    return remap[lab]


def reconstruct(marker, mask) -> np.ndarray:
    """Morphological reconstruction by dilation of binary `marker` under
    `mask`: the union of the 8-connected components of mask that intersect
    the marker. Marker pixels outside the mask are silently ignored."""
    mk = as_mask(marker)
    ms = as_mask(mask)
    if mk.shape != ms.shape:
        raise InvalidInputError("marker and mask shapes differ")
    lab = connected_components(ms)
    hit = np.unique(lab[(mk > 0) & (lab > 0)])
    if hit.size == 0:
        return np.zeros_like(ms)
    return np.isin(lab, hit).astype(np.uint8)


# ---------------------------------------------------------------------------
# thinning

def _build_simple_lut() -> np.ndarray:
    """256-entry table: for each 8-neighbour configuration, True when the
    centre pixel is *simple*, i.e. deleting it preserves local topology.

    A foreground pixel is simple iff its neighbourhood contains exactly one
    8-connected foreground component and exactly one 4-connected background
    component that touches a 4-neighbour of the centre.
    """
    offs = _N8
    lut = np.zeros(256, dtype=bool)
    for code in range(256):
        fg = [i for i in range(8) if code >> i & 1]
        bg = [i for i in range(8) if not (code >> i & 1)]
        if not fg:
            continue  # isolated pixel: deletion removes a component

        def adj(i, j, conn):
            dy = offs[i][0] - offs[j][0]
            dx = offs[i][1] - offs[j][1]
            if conn == 8:
                return max(abs(dy), abs(dx)) == 1
            return abs(dy) + abs(dx) == 1

        def ncomp(cells, conn):
            seen, n = set(), 0
            for c in cells:
                if c in seen:
                    continue
                n += 1
                stack = [c]
                seen.add(c)
                while stack:
                    u = stack.pop()
                    for v in cells:
                        if v not in seen and adj(u, v, conn):
                            seen.add(v)
                            stack.append(v)
            return n

        if ncomp(fg, 8) != 1:
            continue
        # background components that touch a 4-neighbour of the centre
        seen, good = set(), 0
        for c in bg:
            if c in seen:
                continue
            comp, stack = {c}, [c]
            seen.add(c)
            while stack:
                u = stack.pop()
                for v in bg:
                    if v not in seen and adj(u, v, 4):
                        seen.add(v)
                        comp.add(v)
                        stack.append(v)
            if any(offs[i] in _N4 for i in comp):
                good += 1
        lut[code] = good == 1
    return lut


_SIMPLE = _build_simple_lut()
_POP = np.array([bin(i).count("1") for i in range(256)], dtype=np.int8)


def _codes(padded: np.ndarray) -> np.ndarray:
    """Neighbour bit codes for every interior pixel of a zero-padded mask."""
    h, w = padded.shape[0] - 2, padded.shape[1] - 2
    code = np.zeros((h, w), dtype=np.int32)
    for i, (dy, dx) in enumerate(_N8):
        code += padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w].astype(np.int32) << i
    return code


def _build_thin_luts():
    """Deletion-candidate tables for the two thinning sub-iterations.

    Over the _N8 bit order (N=0, NE=1, E=2, SE=3, S=4, SW=5, W=6, NW=7) a
    pixel is a candidate when it has 2..6 foreground neighbours, exactly one
    0-to-1 transition around the ring (so the neighbourhood is a single arc,
    which keeps line interiors and crossings intact), and the directional
    product conditions hold (north/east/south for the first sub-iteration,
    north/west/south mirrored for the second). Pixels with one neighbour are
    line ends and never match.
    """
    a = np.zeros(256, dtype=bool)
    b = np.zeros(256, dtype=bool)
    for code in range(256):
        bits = [(code >> i) & 1 for i in range(8)]
        cnt = sum(bits)
        if not 2 <= cnt <= 6:
            continue
        trans = sum(1 for i in range(8) if bits[i] == 0 and bits[(i + 1) % 8] == 1)
        if trans != 1:
            continue
        n_, e_, s_, w_ = bits[0], bits[2], bits[4], bits[6]
        if n_ * e_ * s_ == 0 and e_ * s_ * w_ == 0:
            a[code] = True
        if n_ * e_ * w_ == 0 and n_ * s_ * w_ == 0:
            b[code] = True
    return a, b


_THIN_A, _THIN_B = _build_thin_luts()


def skeletonize(mask) -> np.ndarray:
    """Thin a mask to a 1-px-wide skeleton without changing its topology.

    Two-sub-iteration boundary thinning: candidates are pre-selected with
    the _THIN_A/_THIN_B tables on a snapshot of the raster (which is where
    line ends and line interiors get their protection), then deleted one at
    a time, each deletion re-verified against the live raster with a
    simple-point test: exactly one 8-connected foreground component and one
    adjacent 4-connected background component in the neighbourhood.
    Sequential verified deletion makes the component and hole counts
    provably invariant, while the snapshot-scoped candidate set keeps each
    sub-iteration to a single boundary layer so the remnant stays centred.
    Runs to an idempotent fixed point.
    """
    m = as_mask(mask)
    h, w = m.shape
    if m.size == 0 or not m.any():
        return m.copy()
    pad = np.zeros((h + 2, w + 2), dtype=np.uint8)
    pad[1:-1, 1:-1] = m
    inner = pad[1:-1, 1:-1]
    while True:
        deleted = 0
        for lut in (_THIN_A, _THIN_B):
            code = _codes(pad)
            cand = (inner == 1) & lut[code]
            ys, xs = np.nonzero(cand)
            for y, x in zip(ys.tolist(), xs.tolist()):
                c = 0
                for i, (oy, ox) in enumerate(_N8):
                    c |= int(pad[y + 1 + oy, x + 1 + ox]) << i
                if _SIMPLE[c]:
                    pad[y + 1, x + 1] = 0
                    deleted += 1
        if not deleted:
            break
    return inner.copy()


def holes(mask) -> int:
    """Number of holes: 4-connected background components not touching the
    raster border."""
    m = as_mask(mask)
    h, w = m.shape
    bg = (m == 0)
    lab = np.zeros((h, w), dtype=np.int32)
    nxt = 0
    flat = bg.ravel()
    labf = lab.ravel()
    for start in np.flatnonzero(flat):
        if labf[start]:
            continue
        nxt += 1
        stack = [start]
        labf[start] = nxt
        while stack:
            p = stack.pop()
            y, x = divmod(int(p), w)
            for dy, dx in _N4:
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w:
                    q = ny * w + nx
                    if flat[q] and not labf[q]:
                        labf[q] = nxt
                        stack.append(q)
    border = set()
    if h and w:
        border |= set(np.unique(lab[0]).tolist())
        border |= set(np.unique(lab[-1]).tolist())
        border |= set(np.unique(lab[:, 0]).tolist())
        border |= set(np.unique(lab[:, -1]).tolist())
    border.discard(0)
    return nxt - len(border)


def centroid(labels, instance_id: int) -> tuple[int, int]:
    """Integer centroid (x, y) of one instance, snapped into the instance.

    The coordinate mean is rounded half-up per axis; if that pixel does not
    belong to the instance (crescents, rings) the result snaps to the member
    pixel with the greatest distance from the instance boundary, breaking
    ties in raster order.
    """
    lab = np.asarray(labels)
    ys, xs = np.nonzero(lab == instance_id)
    if ys.size == 0:
        raise InvalidInputError(f"instance {instance_id} not present")
    cy = int(np.floor(ys.mean() + 0.5))
    cx = int(np.floor(xs.mean() + 0.5))
    if lab[cy, cx] == instance_id:
        return (cx, cy)
    inst = (lab == instance_id).astype(np.uint8)
    d = edt(inst)
    best = np.argmax(d.ravel()[ys * lab.shape[1] + xs])
    return (int(xs[best]), int(ys[best]))


def sample_interior_point(mask, margin: float, rng) -> tuple[int, int]:
    """Uniform random (x, y) among foreground pixels at least `margin` away
    from background. Falls back to the deepest pixel when no pixel satisfies
    the margin. Empty mask raises."""
    m = as_mask(mask)
    if not m.any():
        raise InvalidInputError("cannot sample from an empty mask")
    d = edt(m)
    ys, xs = np.nonzero((m > 0) & (d >= margin))
    if ys.size == 0:
        flat = np.where(m.ravel() > 0, d.ravel(), -1.0)
        p = int(np.argmax(flat))
        return (p % m.shape[1], p // m.shape[1])
    k = int(rng.integers(ys.size))
    return (int(xs[k]), int(ys[k]))
