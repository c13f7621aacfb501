import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from clickseg import morph
from clickseg.errors import InvalidInputError


# ---------------------------------------------------------------- oracles

def edt_brute(mask):
    """O(n^2) all-pairs nearest-background scan, kept deliberately naive."""
    m = np.asarray(mask)
    h, w = m.shape
    bg = np.argwhere(m == 0)
    out = np.zeros((h, w), dtype=np.float64)
    if bg.size == 0:
        out[:] = float(h + w)
        return out
    for y in range(h):
        for x in range(w):
            if m[y, x]:
                d2 = ((bg[:, 0] - y) ** 2 + (bg[:, 1] - x) ** 2).min()
                out[y, x] = np.sqrt(float(d2))
    return out


def reconstruct_fixpoint(marker, mask):
    """Geodesic dilation until stable: the textbook definition."""
    cur = (np.asarray(marker) > 0) & (np.asarray(mask) > 0)
    mask = np.asarray(mask) > 0
    while True:
        grown = cur.copy()
        grown[1:, :] |= cur[:-1, :]
        grown[:-1, :] |= cur[1:, :]
        grown[:, 1:] |= cur[:, :-1]
        grown[:, :-1] |= cur[:, 1:]
        grown[1:, 1:] |= cur[:-1, :-1]
        grown[1:, :-1] |= cur[:-1, 1:]
        grown[:-1, 1:] |= cur[1:, :-1]
        grown[:-1, :-1] |= cur[1:, 1:]
        grown &= mask
        if (grown == cur).all():
            return grown.astype(np.uint8)
        cur = grown


def components_unionfind(mask):
    """Partition of foreground pixels into 8-connected sets via union-find."""
    m = np.asarray(mask)
    h, w = m.shape
    parent = {}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra

    for y in range(h):
        for x in range(w):
            if m[y, x]:
                parent[(y, x)] = (y, x)
    for y in range(h):
        for x in range(w):
            if not m[y, x]:
                continue
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    ny, nx = y + dy, x + dx
                    if (ny, nx) in parent and (dy or dx):
                        union((y, x), (ny, nx))
    groups = {}
    for p in parent:
        groups.setdefault(find(p), set()).add(p)
    return sorted(frozenset(g) for g in groups.values())


def count_holes_oracle(mask):
    m = np.asarray(mask)
    h, w = m.shape
    seen = np.zeros((h, w), dtype=bool)
    n = 0
    for y in range(h):
        for x in range(w):
            if m[y, x] or seen[y, x]:
                continue
            stack = [(y, x)]
            seen[y, x] = True
            border = False
            while stack:
                cy, cx = stack.pop()
                if cy in (0, h - 1) or cx in (0, w - 1):
                    border = True
                for dy, dx in ((-1, 0), (1, 0), (0, 1), (0, -1)):
                    ny, nx = cy + dy, cx + dx
                    if 0 <= ny < h and 0 <= nx < w and not m[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        stack.append((ny, nx))
            if not border:
                n += 1
    return n


def disk(r, pad=2):
    n = 2 * r + 1 + 2 * pad
    yy, xx = np.mgrid[:n, :n]
    c = r + pad
    return (((yy - c) ** 2 + (xx - c) ** 2) <= r * r).astype(np.uint8)


small_masks = hnp.arrays(np.uint8, hnp.array_shapes(min_dims=2, max_dims=2,
                                                    min_side=1, max_side=14),
                         elements=st.integers(0, 1))


# ---------------------------------------------------------------- edt

def test_edt_square_3x3_in_5x5():
    m = np.zeros((5, 5), np.uint8)
    m[1:4, 1:4] = 1
    d = morph.edt(m)
    assert d[2, 2] == 2.0
    for y, x in ((1, 1), (1, 2), (1, 3), (2, 1), (2, 3), (3, 1), (3, 2), (3, 3)):
        assert d[y, x] == 1.0
    assert (d[m == 0] == 0).all()


def test_edt_all_zero():
    assert (morph.edt(np.zeros((4, 7), np.uint8)) == 0).all()


def test_edt_no_background_sentinel():
    d = morph.edt(np.ones((3, 4), np.uint8))
    assert (d == 7.0).all()


def test_edt_matches_brute_force_random():
    rng = np.random.default_rng(7)
    for p in (0.2, 0.5, 0.8):
        for _ in range(5):
            m = (rng.random((16, 16)) < p).astype(np.uint8)
            got = morph.edt(m)
            want = edt_brute(m)
            assert (got == want).all()


@settings(max_examples=60, deadline=None)
@given(small_masks)
def test_edt_matches_brute_force_property(m):
    assert (morph.edt(m) == edt_brute(m)).all()


def test_edt_non_square():
    rng = np.random.default_rng(3)
    m = (rng.random((9, 23)) < 0.5).astype(np.uint8)
    assert (morph.edt(m) == edt_brute(m)).all()


# ---------------------------------------------------------------- components

def test_components_match_unionfind():
    rng = np.random.default_rng(11)
    for _ in range(8):
        m = (rng.random((20, 20)) < 0.4).astype(np.uint8)
        lab = morph.connected_components(m)
        got = sorted(frozenset(map(tuple, np.argwhere(lab == k)))
                     for k in range(1, lab.max() + 1))
        assert got == components_unionfind(m)


def test_components_label_order_is_raster_order():
    m = np.zeros((5, 9), np.uint8)
    m[4, 0] = 1          # bottom-left, scanned last
    m[0, 5] = 1          # top row, scanned first
    m[2, 2] = 1
    lab = morph.connected_components(m)
    assert lab[0, 5] == 1 and lab[2, 2] == 2 and lab[4, 0] == 3


def test_components_empty():
    assert morph.connected_components(np.zeros((3, 3), np.uint8)).max() == 0


# ---------------------------------------------------------------- reconstruct

def test_reconstruct_matches_fixpoint_random():
    rng = np.random.default_rng(5)
    for _ in range(10):
        mask = (rng.random((18, 18)) < 0.45).astype(np.uint8)
        marker = ((rng.random((18, 18)) < 0.08) & (mask > 0)).astype(np.uint8)
        got = morph.reconstruct(marker, mask)
        assert (got == reconstruct_fixpoint(marker, mask)).all()


@settings(max_examples=40, deadline=None)
@given(small_masks, st.integers(0, 2 ** 32 - 1))
def test_reconstruct_matches_fixpoint_property(mask, seed):
    rng = np.random.default_rng(seed)
    marker = ((rng.random(mask.shape) < 0.15)).astype(np.uint8)
    assert (morph.reconstruct(marker, mask) == reconstruct_fixpoint(marker, mask)).all()


def test_reconstruct_marker_outside_mask_is_clipped():
    mask = np.zeros((6, 6), np.uint8)
    mask[1:3, 1:3] = 1
    marker = np.zeros((6, 6), np.uint8)
    marker[5, 5] = 1  # misses the mask entirely
    assert morph.reconstruct(marker, mask).sum() == 0


def test_reconstruct_keeps_only_touched_components():
    mask = np.zeros((8, 8), np.uint8)
    mask[1:3, 1:3] = 1
    mask[5:7, 5:7] = 1
    marker = np.zeros((8, 8), np.uint8)
    marker[1, 1] = 1
    out = morph.reconstruct(marker, mask)
    assert out[1:3, 1:3].all() and not out[5:7, 5:7].any()


def test_reconstruct_idempotent():
    rng = np.random.default_rng(2)
    mask = (rng.random((15, 15)) < 0.5).astype(np.uint8)
    marker = ((rng.random((15, 15)) < 0.1) & (mask > 0)).astype(np.uint8)
    once = morph.reconstruct(marker, mask)
    assert (morph.reconstruct(once, mask) == once).all()


# ---------------------------------------------------------------- thinning

def blob(seed, shape=(24, 24)):
    """Random smooth-ish blob: union of a few disks."""
    rng = np.random.default_rng(seed)
    m = np.zeros(shape, np.uint8)
    yy, xx = np.mgrid[:shape[0], :shape[1]]
    for _ in range(rng.integers(1, 5)):
        cy, cx = rng.integers(4, shape[0] - 4), rng.integers(4, shape[1] - 4)
        r = rng.integers(2, 6)
        m |= (((yy - cy) ** 2 + (xx - cx) ** 2) <= r * r).astype(np.uint8)
    return m


def ncomp(mask):
    return int(morph.connected_components(mask).max())


@pytest.mark.parametrize("seed", range(12))
def test_skeleton_preserves_topology(seed):
    m = blob(seed)
    sk = morph.skeletonize(m)
    assert (sk <= m).all()
    assert ncomp(sk) == ncomp(m)
    assert count_holes_oracle(sk) == count_holes_oracle(m)


@pytest.mark.parametrize("seed", range(12))
def test_skeleton_idempotent(seed):
    sk = morph.skeletonize(blob(seed))
    assert (morph.skeletonize(sk) == sk).all()


def test_skeleton_of_thin_line_is_itself():
    m = np.zeros((9, 9), np.uint8)
    m[4, 1:8] = 1
    assert (morph.skeletonize(m) == m).all()


def test_skeleton_single_pixel():
    m = np.zeros((5, 5), np.uint8)
    m[2, 2] = 1
    assert (morph.skeletonize(m) == m).all()


def test_skeleton_of_ring_is_a_loop():
    r = disk(8) - disk(4, pad=6)
    r = (r > 0).astype(np.uint8)
    assert count_holes_oracle(r) == 1
    sk = morph.skeletonize(r)
    assert count_holes_oracle(sk) == 1
    assert ncomp(sk) == 1
    # a loop has no endpoints: every pixel has >= 2 neighbours
    pad = np.pad(sk, 1)
    ys, xs = np.nonzero(sk)
    for y, x in zip(ys, xs):
        assert pad[y:y + 3, x:x + 3].sum() - 1 >= 2


@pytest.mark.parametrize("shape", ["disk", "rect", "ring"])
def test_skeleton_thinness_no_2x2_block(shape):
    if shape == "disk":
        m = disk(7)
    elif shape == "rect":
        m = np.zeros((20, 30), np.uint8)
        m[4:16, 5:25] = 1
    else:
        m = ((disk(9) - disk(4, pad=7)) > 0).astype(np.uint8)
    sk = morph.skeletonize(m)
    two_by_two = sk[:-1, :-1] & sk[1:, :-1] & sk[:-1, 1:] & sk[1:, 1:]
    assert not two_by_two.any()


def test_skeleton_disk_collapses_to_centre():
    m = disk(8)
    sk = morph.skeletonize(m)
    assert (sk <= m).all() and sk.any()
    ys, xs = np.nonzero(sk)
    assert ys.max() - ys.min() + 1 <= 5
    assert xs.max() - xs.min() + 1 <= 5


# ---------------------------------------------------------------- small ops

def test_remove_small_renumbers_in_order():
    lab = np.zeros((6, 12), np.int32)
    lab[0, 0:2] = 1      # area 2
    lab[2, 0:5] = 2      # area 5
    lab[4, 0:4] = 3      # area 4
    out = morph.remove_small(lab, 4)
    assert set(np.unique(out)) == {0, 1, 2}
    assert (out[2, 0:5] == 1).all() and (out[4, 0:4] == 2).all()


def test_remove_small_all_gone():
    lab = np.zeros((4, 4), np.int32)
    lab[0, 0] = 1
    assert morph.remove_small(lab, 2).max() == 0


def test_centroid_square():
    lab = np.zeros((7, 7), np.int32)
    lab[2:5, 2:5] = 4
    assert morph.centroid(lab, 4) == (3, 3)


def test_centroid_snaps_into_crescent():
    # C-shape whose coordinate mean falls in the gap
    lab = np.zeros((9, 9), np.int32)
    lab[2:7, 2:4] = 1
    lab[2, 4:7] = 1
    lab[6, 4:7] = 1
    cx, cy = morph.centroid(lab, 1)
    assert lab[cy, cx] == 1


def test_centroid_missing_instance():
    with pytest.raises(InvalidInputError):
        morph.centroid(np.zeros((3, 3), np.int32), 5)


def test_interior_point_margin_selects_centre():
    m = np.zeros((5, 5), np.uint8)
    m[1:4, 1:4] = 1
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert morph.sample_interior_point(m, 2, rng) == (2, 2)


def test_interior_point_fallback_deepest():
    m = np.zeros((4, 9), np.uint8)
    m[1:3, 1:8] = 1  # max edt is 1, margin 3 unreachable
    rng = np.random.default_rng(0)
    x, y = morph.sample_interior_point(m, 3, rng)
    assert m[y, x] == 1


def test_interior_point_empty_raises():
    with pytest.raises(InvalidInputError):
        morph.sample_interior_point(np.zeros((3, 3), np.uint8), 0, np.random.default_rng(0))


def test_interior_point_uniform_chisquare():
    from scipy import stats
    m = np.zeros((6, 6), np.uint8)
    m[1:5, 1:5] = 1  # 16 eligible pixels at margin 0
    rng = np.random.default_rng(42)
    counts = {}
    n = 3200
    for _ in range(n):
        p = morph.sample_interior_point(m, 0, rng)
        counts[p] = counts.get(p, 0) + 1
    assert len(counts) == 16
    _, pval = stats.chisquare(list(counts.values()))
    assert pval > 1e-3


def test_holes_counts():
    solid = disk(5)
    ring = ((disk(7) - disk(3, pad=6)) > 0).astype(np.uint8)
    assert morph.holes(solid) == 0
    assert morph.holes(ring) == 1
    two = np.zeros((21, 42), np.uint8)
    two[1:20, 1:20] = ring
    two[1:20, 22:41] = ring
    assert morph.holes(two) == 2
