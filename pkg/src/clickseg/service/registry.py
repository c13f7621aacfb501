"""Checkpoint directory scanned at startup; models keyed by filename stem."""

from __future__ import annotations

from pathlib import Path

from ..errors import NotFoundError
from ..network import SegmentationModel, load_checkpoint


class ModelRegistry:
    def __init__(self, models_dir):
        self.models_dir = Path(models_dir)
        self._models: dict[str, SegmentationModel] = {}
        if self.models_dir.is_dir():
            for path in sorted(self.models_dir.glob("*.ckpt")):
                self._models[path.stem] = load_checkpoint(path)

    def add(self, model_id: str, model: SegmentationModel) -> None:
        self._models[model_id] = model

    def get(self, model_id: str) -> SegmentationModel:
        if model_id not in self._models:
            raise NotFoundError(f"unknown model {model_id!r}")
        return self._models[model_id]

    def list(self) -> list:
        out = []
        for mid, model in sorted(self._models.items()):
            cfg = model.config
            out.append({
                "id": mid,
                "kind": cfg.kind,
                "patch_size": cfg.patch_size,
                "parameters": model.param_count(),
            })
        return out
