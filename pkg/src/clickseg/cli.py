"""Command line front door: serve, segment, synth, train, eval, metrics."""

from __future__ import annotations

import dataclasses
import json
import sys
import tempfile
from pathlib import Path

import click as clickpkg
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # 3.10
    import tomli as tomllib

from . import metrics as metrics_mod
from . import synth, training
from .network import NetworkConfig, load_checkpoint
from .raster import load_labels_png, save_labels_png
from .service.registry import ModelRegistry
from .service.sessions import SessionStore


@clickpkg.group()
def main():
    """Interactive microscopy segmentation workbench."""


@main.command()
@clickpkg.option("--models", required=True, type=clickpkg.Path(exists=True, file_okay=False))
@clickpkg.option("--state", default="sessions", show_default=True,
                 help="Directory for session event logs.")
@clickpkg.option("--host", default="127.0.0.1", show_default=True)
@clickpkg.option("--port", default=8321, show_default=True, type=int)
def serve(models, state, host, port):
    """Run the annotation HTTP service."""
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(models, state), host=host, port=port)


def _read_guides(spec: str) -> list:
    path = Path(spec)
    text = path.read_text() if path.exists() else spec
    guides = json.loads(text)
    if isinstance(guides, dict):
        guides = [guides]
    return guides


@main.command()
@clickpkg.option("--image", required=True, type=clickpkg.Path(exists=True, dir_okay=False))
@clickpkg.option("--guides", required=True,
                 help="JSON list of guides, inline or a path to a file.")
@clickpkg.option("--checkpoint", required=True, type=clickpkg.Path(exists=True, dir_okay=False))
@clickpkg.option("--out", required=True, type=clickpkg.Path(dir_okay=False))
def segment(image, guides, checkpoint, out):
    """Segment one image headlessly and write a 16-bit label map PNG.

    Drives the same session machinery as the HTTP service, so outputs are
    byte-identical to annotating over the API.
    """
    model = load_checkpoint(checkpoint)
    with tempfile.TemporaryDirectory() as tmp:
        registry = ModelRegistry(Path(tmp) / "models")
        registry.add("model", model)
        store = SessionStore(registry, Path(tmp) / "state")
        sid = store.create("model")["session_id"]
        store.set_image(sid, Path(image).read_bytes())
        for guide in _read_guides(guides):
            payload = store.annotate(sid, guide)
            clickpkg.echo(f"object {payload['object_id']}: "
                          f"{'empty' if payload['empty'] else 'ok'}")
        save_labels_png(out, store.export_labelmap(sid))
    clickpkg.echo(f"wrote {out}")


@main.command("synth")
@clickpkg.option("--kind", default="nucleus", show_default=True,
                 type=clickpkg.Choice(["nucleus", "cell", "gland"]))
@clickpkg.option("--count", default=50, show_default=True, type=int)
@clickpkg.option("--out", required=True, type=clickpkg.Path(file_okay=False))
@clickpkg.option("--canvas", default=64, show_default=True, type=int)
@clickpkg.option("--min-size", default=10, show_default=True, type=int)
@clickpkg.option("--max-size", default=22, show_default=True, type=int)
@clickpkg.option("--min-count", default=3, show_default=True, type=int)
@clickpkg.option("--max-count", default=7, show_default=True, type=int)
@clickpkg.option("--touching", default=0.0, show_default=True, type=float)
@clickpkg.option("--noise", default=5.0, show_default=True, type=float)
@clickpkg.option("--seed", default=0, show_default=True, type=int)
def synth_cmd(kind, count, out, canvas, min_size, max_size, min_count,
              max_count, touching, noise, seed):
    """Generate a synthetic dataset on disk."""
    cfg = synth.SynthConfig(kind=kind, canvas=(canvas, canvas),
                            count_range=(min_count, max_count),
                            size_range=(min_size, max_size),
                            touching_prob=touching, noise=noise, seed=seed)
    items = synth.gen_dataset(cfg, count)
    synth.save_dataset(out, cfg, items)
    clickpkg.echo(f"wrote {count} images to {out}")


def _train_config(doc: dict) -> training.TrainConfig:
    net_doc = doc.get("network", {})
    known = {f.name for f in dataclasses.fields(NetworkConfig)}
    bad = set(net_doc) - known
    if bad:
        raise clickpkg.ClickException(f"unknown network keys: {sorted(bad)}")
    for key in ("ms_block_levels", "ms_dilations"):
        if key in net_doc:
            net_doc[key] = tuple(net_doc[key])
    net = NetworkConfig(**net_doc)
    train_doc = dict(doc.get("train", {}))
    known = {f.name for f in dataclasses.fields(training.TrainConfig)}
    bad = set(train_doc) - known - {"network"}
    if bad:
        raise clickpkg.ClickException(f"unknown train keys: {sorted(bad)}")
    return training.TrainConfig(network=net, **train_doc)


@main.command()
@clickpkg.option("--config", "config_path", required=True,
                 type=clickpkg.Path(exists=True, dir_okay=False),
                 help="TOML file with [train] and [network] tables.")
@clickpkg.option("--data", required=True, type=clickpkg.Path(exists=True, file_okay=False))
def train(config_path, data):
    """Train a model on a generated dataset."""
    doc = tomllib.loads(Path(config_path).read_text())
    cfg = _train_config(doc)
    model, rows = training.train(data, cfg)
    if rows:
        clickpkg.echo(f"final loss {rows[-1][1]:.4f}")
    clickpkg.echo(f"saved checkpoint to {cfg.checkpoint} "
                  f"({model.param_count()} parameters)")


@main.command("eval")
@clickpkg.option("--checkpoint", required=True, type=clickpkg.Path(exists=True, dir_okay=False))
@clickpkg.option("--data", required=True, type=clickpkg.Path(exists=True, file_okay=False))
@clickpkg.option("--guide", default="gt-centroid", show_default=True,
                 type=clickpkg.Choice(list(training.GUIDE_MODES)))
@clickpkg.option("--sigma", default=0.0, show_default=True, type=float)
@clickpkg.option("--no-exclusion", is_flag=True, default=False,
                 help="Zero the exclusion channel during inference.")
@clickpkg.option("--seed", default=0, show_default=True, type=int)
def eval_cmd(checkpoint, data, guide, sigma, no_exclusion, seed):
    """Evaluate a checkpoint on a dataset with simulated guides."""
    rep = training.evaluate(checkpoint, data, mode=guide, sigma=sigma,
                            seed=seed, exclusion=not no_exclusion)
    clickpkg.echo(rep.table())
    clickpkg.echo(json.dumps(dataclasses.asdict(rep), indent=2))


@main.command("metrics")
@clickpkg.option("--gt", required=True, type=clickpkg.Path(exists=True, dir_okay=False))
@clickpkg.option("--pred", required=True, type=clickpkg.Path(exists=True, dir_okay=False))
def metrics_cmd(gt, pred):
    """Score a predicted label map against ground truth."""
    g = load_labels_png(gt)
    p = load_labels_png(pred)
    rep = metrics_mod.report(g, p)
    clickpkg.echo(rep.table())
    clickpkg.echo(json.dumps(dataclasses.asdict(rep), indent=2))


if __name__ == "__main__":
    sys.exit(main())
