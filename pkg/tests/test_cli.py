import json

import numpy as np
import pytest
from click.testing import CliRunner

from clickseg.cli import main
from clickseg.network import NetworkConfig, SegmentationModel, save_checkpoint
from clickseg.raster import load_labels_png, save_image, save_labels_png
from clickseg.synth import SynthConfig, gen_nuclei, load_dataset


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "ds"
    r = CliRunner().invoke(main, [
        "synth", "--kind", "nucleus", "--count", "6", "--out", str(out),
        "--canvas", "48", "--min-size", "10", "--max-size", "14",
        "--min-count", "2", "--max-count", "3", "--seed", "7"])
    assert r.exit_code == 0, r.output
    return out


def test_synth_layout(dataset_dir):
    assert (dataset_dir / "manifest.json").exists()
    manifest, pairs = load_dataset(dataset_dir)
    assert manifest["count"] == 6
    assert len(pairs) == 6
    img, lab = pairs[0]
    assert img.shape == (48, 48, 3)
    assert lab.shape == (48, 48)


def test_segment_writes_labelmap(runner, tmp_path):
    cfg = NetworkConfig(depth=2, base_width=4, ms_block_levels=(0,),
                        ms_dilations=(1, 2), patch_size=16, kind="nucleus")
    ckpt = tmp_path / "m.ckpt"
    save_checkpoint(SegmentationModel(cfg, np.random.default_rng(0)), ckpt)

    img, _ = gen_nuclei(SynthConfig(kind="nucleus", canvas=(48, 48),
                                    count_range=(2, 3), size_range=(10, 14),
                                    seed=13))
    image_path = tmp_path / "img.png"
    save_image(image_path, img)
    guides_path = tmp_path / "guides.json"
    guides_path.write_text(json.dumps([
        {"type": "click", "point": [24, 24]},
        {"type": "click", "point": [10, 10]},
    ]))
    out = tmp_path / "lab.png"
    r = runner.invoke(main, ["segment", "--image", str(image_path),
                             "--guides", str(guides_path),
                             "--checkpoint", str(ckpt), "--out", str(out)])
    assert r.exit_code == 0, r.output
    lab = load_labels_png(out)
    assert lab.shape == (48, 48)
    assert set(np.unique(lab)) <= {0, 1, 2}


def test_segment_inline_guides(runner, tmp_path):
    cfg = NetworkConfig(depth=2, base_width=4, ms_block_levels=(0,),
                        ms_dilations=(1, 2), patch_size=16, kind="nucleus")
    ckpt = tmp_path / "m.ckpt"
    save_checkpoint(SegmentationModel(cfg, np.random.default_rng(0)), ckpt)
    img, _ = gen_nuclei(SynthConfig(kind="nucleus", canvas=(48, 48),
                                    count_range=(2, 3), size_range=(10, 14),
                                    seed=13))
    image_path = tmp_path / "img.png"
    save_image(image_path, img)
    out = tmp_path / "lab.png"
    r = runner.invoke(main, ["segment", "--image", str(image_path),
                             "--guides", '{"type": "click", "point": [24, 24]}',
                             "--checkpoint", str(ckpt), "--out", str(out)])
    assert r.exit_code == 0, r.output
    assert out.exists()


def test_train_then_eval(runner, dataset_dir, tmp_path):
    config = tmp_path / "train.toml"
    ckpt = tmp_path / "trained.ckpt"
    config.write_text(f"""
[network]
depth = 2
base_width = 4
ms_block_levels = [0]
ms_dilations = [1, 2]
patch_size = 16
kind = "nucleus"

[train]
epochs = 1
batch_size = 4
steps_per_epoch = 2
patch_size = 16
seed = 1
checkpoint = "{ckpt}"
log = "{tmp_path / 'log.csv'}"
""")
    r = runner.invoke(main, ["train", "--config", str(config),
                             "--data", str(dataset_dir)])
    assert r.exit_code == 0, r.output
    assert ckpt.exists()
    assert (tmp_path / "log.csv").exists()

    r = runner.invoke(main, ["eval", "--checkpoint", str(ckpt),
                             "--data", str(dataset_dir),
                             "--guide", "gt-centroid"])
    assert r.exit_code == 0, r.output
    assert "aji" in r.output


def test_train_rejects_unknown_key(runner, dataset_dir, tmp_path):
    config = tmp_path / "bad.toml"
    config.write_text("[network]\nwidgets = 3\n")
    r = runner.invoke(main, ["train", "--config", str(config),
                             "--data", str(dataset_dir)])
    assert r.exit_code != 0
    assert "widgets" in r.output


def test_metrics_command(runner, tmp_path):
    gt = np.zeros((20, 20), dtype=np.int32)
    gt[2:8, 2:8] = 1
    gt[12:18, 12:18] = 2
    pred = np.zeros_like(gt)
    pred[3:8, 2:8] = 1
    pred[12:18, 13:18] = 2
    gt_path = tmp_path / "gt.png"
    pred_path = tmp_path / "pred.png"
    save_labels_png(gt_path, gt)
    save_labels_png(pred_path, pred)
    r = runner.invoke(main, ["metrics", "--gt", str(gt_path),
                             "--pred", str(pred_path)])
    assert r.exit_code == 0, r.output
    tail = r.output[r.output.index("{"):]
    doc = json.loads(tail)
    assert 0.0 < doc["aji"] <= 1.0
    assert 0.0 < doc["dice"] <= 1.0
