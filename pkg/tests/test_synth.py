import numpy as np
import pytest

from clickseg.errors import InvalidConfigError
from clickseg.morph import connected_components, holes, skeletonize
from clickseg.synth import (
    SynthConfig,
    augment,
    ellipse_field,
    feathered_alpha,
    gen_cells,
    gen_dataset,
    gen_glands,
    gen_nuclei,
    generate,
    hflip,
    load_dataset,
    paste,
    save_dataset,
    vflip,
)


def labels_valid(lab):
    ids = sorted(int(v) for v in np.unique(lab) if v > 0)
    return ids == list(range(1, len(ids) + 1))


# -- config --------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(InvalidConfigError):
        SynthConfig(kind="tissue")
    with pytest.raises(InvalidConfigError):
        SynthConfig(count_range=(5, 3))
    with pytest.raises(InvalidConfigError):
        SynthConfig(size_range=(22, 10))
    with pytest.raises(InvalidConfigError):
        SynthConfig(canvas=(32, 32), size_range=(10, 30))
    with pytest.raises(InvalidConfigError):
        SynthConfig(touching_prob=1.5)
    with pytest.raises(InvalidConfigError):
        SynthConfig(kind="gland", canvas=(64, 64), size_range=(8, 12))


def test_config_round_trip():
    cfg = SynthConfig(kind="cell", seed=9, touching_prob=0.5)
    assert SynthConfig.from_dict(cfg.to_dict()) == cfg


# -- nuclei ---------------------------------------------------------------------

def test_nuclei_count_range_one():
    img, lab = gen_nuclei(SynthConfig(count_range=(1, 1), seed=3))
    assert lab.max() == 1
    assert img.shape == (64, 64, 3) and img.dtype == np.uint8


def test_nuclei_seed_reproducible():
    cfg = SynthConfig(seed=11, touching_prob=0.3)
    a_img, a_lab = gen_nuclei(cfg)
    b_img, b_lab = gen_nuclei(cfg)
    assert np.array_equal(a_img, b_img)
    assert np.array_equal(a_lab, b_lab)


def test_nuclei_labels_partition():
    for seed in range(5):
        _, lab = gen_nuclei(SynthConfig(seed=seed, count_range=(4, 8)))
        assert labels_valid(lab)
        # instances disjoint by construction of a single label raster; check
        # each is one connected piece
        for lid in range(1, lab.max() + 1):
            comp = connected_components((lab == lid).astype(np.uint8))
            assert comp.max() == 1


def test_nuclei_touching_prob_one_adjacent():
    hits = 0
    for seed in range(8):
        cfg = SynthConfig(count_range=(2, 2), touching_prob=1.0, seed=seed,
                          canvas=(96, 96))
        _, lab = gen_nuclei(cfg)
        if lab.max() < 2:
            continue
        hits += 1
        a = lab == 1
        b = lab == 2
        assert not (a & b).any()
        # 8-adjacency: dilate a by one and intersect b
        pad = np.pad(a, 1)
        dil = np.zeros_like(a)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                dil |= pad[1 + dy:1 + dy + a.shape[0], 1 + dx:1 + dx + a.shape[1]]
        assert (dil & b).any()
    assert hits >= 6  # placement must succeed nearly always


def test_nuclei_nontouching_leaves_gaps():
    for seed in range(5):
        _, lab = gen_nuclei(SynthConfig(seed=seed, touching_prob=0.0,
                                        count_range=(4, 7)))
        n = lab.max()
        merged = connected_components((lab > 0).astype(np.uint8)).max()
        assert merged == n  # 1-px gaps keep instances separate


# -- cells -----------------------------------------------------------------------

def test_cells_reproducible_and_valid():
    cfg = SynthConfig(kind="cell", seed=21, count_range=(2, 4))
    a_img, a_lab = gen_cells(cfg)
    b_img, b_lab = gen_cells(cfg)
    assert np.array_equal(a_img, b_img) and np.array_equal(a_lab, b_lab)
    assert labels_valid(a_lab)


def test_cells_label_equals_geometric_footprint():
    # labels come from geometry: every labeled pixel satisfies field <= 1
    # for some pasted ellipse; spot-check by regenerating and ensuring each
    # instance is a filled convex-ish blob (no feather halo in the labels)
    _, lab = gen_cells(SynthConfig(kind="cell", seed=5, count_range=(3, 3)))
    for lid in range(1, lab.max() + 1):
        m = (lab == lid).astype(np.uint8)
        assert m.sum() >= 8
        assert holes(m) == 0  # solid footprint, no feather ring artifacts


def test_feathered_seam_smoother_than_hard_paste():
    field = ellipse_field((48, 48), (24, 24), (14, 10), 0.4)
    base = np.full((48, 48, 3), 230.0)
    hard = base.copy()
    soft = base.copy()
    paste(hard, feathered_alpha(field, 10, 0.0), (80, 60, 120))
    paste(soft, feathered_alpha(field, 10, 2.5), (80, 60, 120))
    seam = (field > 0.55) & (field < 1.45)
    def seam_energy(img):
        gy, gx = np.gradient(img.mean(axis=2))
        return float(np.hypot(gy, gx)[seam].mean())
    assert seam_energy(soft) < seam_energy(hard)


# -- glands ----------------------------------------------------------------------

def test_glands_have_holes():
    for seed in range(5):
        cfg = SynthConfig(kind="gland", canvas=(96, 96), size_range=(18, 30),
                          count_range=(1, 2), seed=seed)
        _, lab = gen_glands(cfg)
        assert lab.max() >= 1
        for lid in range(1, lab.max() + 1):
            assert holes((lab == lid).astype(np.uint8)) >= 1


def test_glands_no_lumen_solid():
    cfg = SynthConfig(kind="gland", canvas=(96, 96), size_range=(18, 30),
                      count_range=(1, 2), seed=1, lumen=False)
    _, lab = gen_glands(cfg)
    assert lab.max() >= 1
    for lid in range(1, lab.max() + 1):
        assert holes((lab == lid).astype(np.uint8)) == 0


def test_gland_extent_within_size_range():
    cfg = SynthConfig(kind="gland", canvas=(128, 128), size_range=(20, 34),
                      count_range=(2, 3), seed=7)
    _, lab = gen_glands(cfg)
    assert lab.max() >= 1
    for lid in range(1, lab.max() + 1):
        ys, xs = np.nonzero(lab == lid)
        extent = max(ys.max() - ys.min() + 1, xs.max() - xs.min() + 1)
        assert extent <= 34 + 1
        assert extent >= 20 * 0.6


def test_gland_skeleton_is_loop():
    cfg = SynthConfig(kind="gland", canvas=(96, 96), size_range=(20, 30),
                      count_range=(1, 1), seed=13)
    _, lab = gen_glands(cfg)
    m = (lab == 1).astype(np.uint8)
    sk = skeletonize(m)
    assert connected_components(sk).max() == 1
    assert holes(sk) == 1


def test_gland_reproducible():
    cfg = SynthConfig(kind="gland", canvas=(96, 96), size_range=(18, 28), seed=2,
                      count_range=(1, 2))
    a = gen_glands(cfg)
    b = gen_glands(cfg)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


# -- augmentation -------------------------------------------------------------------

def test_double_hflip_identity():
    img, lab = gen_nuclei(SynthConfig(seed=1))
    i2, l2 = hflip(*hflip(img, lab))
    assert np.array_equal(i2, img) and np.array_equal(l2, lab)
    i3, l3 = vflip(*vflip(img, lab))
    assert np.array_equal(i3, img) and np.array_equal(l3, lab)


def test_augment_mask_histogram_invariant():
    img, lab = gen_nuclei(SynthConfig(seed=2, count_range=(3, 5)))
    _, lab2 = augment(img, lab, np.random.default_rng(5))
    assert np.array_equal(np.bincount(lab.ravel(), minlength=10),
                          np.bincount(lab2.ravel(), minlength=10))


def test_augment_zero_photometrics_identity_up_to_flips():
    img, lab = gen_nuclei(SynthConfig(seed=3))
    out_img, out_lab = augment(img, lab, np.random.default_rng(8),
                               noise_sigma=0, brightness=0, contrast=0)
    # replicate the flip draws with the same seed
    rng = np.random.default_rng(8)
    want_img, want_lab = img, lab
    if rng.random() < 0.5:
        want_img, want_lab = hflip(want_img, want_lab)
    if rng.random() < 0.5:
        want_img, want_lab = vflip(want_img, want_lab)
    assert np.array_equal(out_img, want_img)
    assert np.array_equal(out_lab, want_lab)


def test_augment_flips_move_image_and_labels_together():
    img, lab = gen_nuclei(SynthConfig(seed=4, count_range=(2, 4)))
    out_img, out_lab = augment(img, lab, np.random.default_rng(1),
                               noise_sigma=0, brightness=0, contrast=0)
    # whatever flips happened, dark pixels must still sit under the labels
    inside = out_img[out_lab > 0].mean(axis=0)
    outside = out_img[out_lab == 0].mean(axis=0)
    assert inside.mean() < outside.mean()


# -- datasets ------------------------------------------------------------------------

def test_dataset_round_trip(tmp_path):
    cfg = SynthConfig(seed=6, count_range=(2, 4))
    items = gen_dataset(cfg, 4)
    assert len(items) == 4
    save_dataset(tmp_path / "ds", cfg, items)
    manifest, pairs = load_dataset(tmp_path / "ds")
    assert manifest["count"] == 4
    assert manifest["config"]["seed"] == 6
    assert len(manifest["files"]) == 4
    for (img, lab, _seed), (img2, lab2) in zip(items, pairs):
        assert np.array_equal(img, img2)
        assert np.array_equal(lab, lab2)


def test_dataset_seeded_bit_reproducible():
    cfg = SynthConfig(kind="cell", seed=10, count_range=(1, 3))
    a = gen_dataset(cfg, 3)
    b = gen_dataset(cfg, 3)
    for (ia, la, sa), (ib, lb, sb) in zip(a, b):
        assert sa == sb
        assert np.array_equal(ia, ib) and np.array_equal(la, lb)
    # different master seed diverges
    c = gen_dataset(SynthConfig(kind="cell", seed=11, count_range=(1, 3)), 3)
    assert any(not np.array_equal(a[i][0], c[i][0]) for i in range(3))


def test_generate_dispatch():
    for kind in ("nucleus", "cell", "gland"):
        cfg = SynthConfig(kind=kind, canvas=(96, 96), size_range=(16, 26),
                          count_range=(1, 2), seed=0)
        img, lab = generate(cfg)
        assert img.shape == (96, 96, 3)
        assert lab.shape == (96, 96)
