"""Event-sourced annotation sessions.

Every mutation appends one JSON line to the session's log file; live state
is always reproducible by replaying that log (which is also how undo and
restart recovery work).  Inference is deterministic, so replayed sessions
carry byte-identical masks.
"""

from __future__ import annotations

import base64
import json
import os
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConflictError, InvalidInputError, NotFoundError
from ..network import SegmentationModel
from ..postproc import ObjectResult, assemble, binarize, clean
from ..raster import load_image, rle_encode
from ..signals import (
    click_signal,
    extract_patch,
    patch_for_click,
    patch_for_squiggle,
    place_mask,
    rasterize_squiggle,
)

GUIDE_TYPES = ("click", "squiggle")


def _validate_guide(guide: dict, image_shape) -> dict:
    if not isinstance(guide, dict) or guide.get("type") not in GUIDE_TYPES:
        raise InvalidInputError(f"guide type must be one of {GUIDE_TYPES}")
    h, w = image_shape[:2]

    def check_point(p):
        if (not isinstance(p, (list, tuple)) or len(p) != 2
                or not all(isinstance(v, (int, float)) for v in p)):
            raise InvalidInputError(f"bad point {p!r}")
        x, y = p
        if not (0 <= x < w and 0 <= y < h):
            raise InvalidInputError(f"point {p} outside image {w}x{h}")
        return [int(round(x)), int(round(y))]

    if guide["type"] == "click":
        if "point" not in guide:
            raise InvalidInputError("click guide needs a 'point'")
        return {"type": "click", "point": check_point(guide["point"])}
    pts = guide.get("points")
    if not isinstance(pts, list) or len(pts) < 2:
        raise InvalidInputError("squiggle guide needs >= 2 'points'")
    return {"type": "squiggle", "points": [check_point(p) for p in pts]}


def _rep_point(guide: dict):
    """One pixel standing in for a whole guide when it acts as exclusion."""
    if guide["type"] == "click":
        return tuple(guide["point"])
    pts = np.asarray(guide["points"], dtype=np.float64)
    return (int(round(pts[:, 0].mean())), int(round(pts[:, 1].mean())))


def segment_once(model: SegmentationModel, image: np.ndarray, guide: dict,
                 other_points) -> tuple:
    """Run the full per-object pipeline. Returns (spec, mask, inclusion)."""
    h, w = image.shape[:2]
    P = model.config.patch_size
    if guide["type"] == "click":
        pt = tuple(guide["point"])
        spec = patch_for_click((w, h), pt, P)
        sig = click_signal([pt] + [tuple(p) for p in other_points], 0, spec)
        inc, exc = sig.inclusion, sig.exclusion
    else:
        pts = [tuple(p) for p in guide["points"]]
        spec = patch_for_squiggle((w, h), [pts], target=P)
        inc = rasterize_squiggle([pts], spec)
        exc = np.zeros_like(inc)
        for p in other_points:
            qx, qy = spec.to_patch(p)
            qx = int(np.floor(qx + 0.5))
            qy = int(np.floor(qy + 0.5))
            if 0 <= qx < spec.size[0] and 0 <= qy < spec.size[1]:
                exc[qy, qx] = 1
        exc[inc > 0] = 0
    rgb = extract_patch(image, spec).astype(np.float32) / 255.0
    x = np.concatenate([rgb.transpose(2, 0, 1),
                        inc[None].astype(np.float32),
                        exc[None].astype(np.float32)], axis=0)
    p = model.predict(x)
    mask = clean(binarize(p), inc)
    return spec, mask, inc


@dataclass
class ObjectRecord:
    object_id: int
    guide: dict
    result: ObjectResult


class Session:
    def __init__(self, sid: str, model_id: str):
        self.id = sid
        self.model_id = model_id
        self.image = None
        self.objects: list[ObjectRecord] = []
        self.revision = 0
        self.next_object_id = 1
        self.seen: dict[str, dict] = {}
        self.lock = threading.RLock()

    def find(self, object_id: int) -> ObjectRecord:
        for rec in self.objects:
            if rec.object_id == object_id:
                return rec
        raise NotFoundError(f"no object {object_id} in session {self.id}")


class SessionStore:
    """Owns all sessions, their locks, and their event logs."""

    def __init__(self, registry, state_dir):
        self.registry = registry
        self.state_dir = Path(state_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, Session] = {}
        self._create_seen: dict[str, str] = {}
        self._lock = threading.Lock()
        for path in sorted(self.state_dir.glob("*.jsonl")):
            self._load_log(path)

    # -- log plumbing -----------------------------------------------------

    def _log_path(self, sid: str) -> Path:
        return self.state_dir / f"{sid}.jsonl"

    def _append(self, sid: str, event: dict) -> None:
        with open(self._log_path(sid), "a") as f:
            f.write(json.dumps(event) + "\n")

    def _load_log(self, path: Path) -> None:
        lines = [json.loads(ln) for ln in path.read_text().splitlines() if ln]
        if not lines or lines[0].get("op") != "create":
            return
        session = self._replay(lines)
        self._sessions[session.id] = session
        rid = lines[0].get("request_id")
        if rid:
            self._create_seen[rid] = session.id

    def _replay(self, events) -> Session:
        head = events[0]
        session = Session(head["session"], head["model"])
        for ev in events[1:]:
            payload = self._apply(session, ev)
            rid = ev.get("request_id")
            if rid:
                session.seen[rid] = payload
        return session

    def _apply(self, session: Session, ev: dict) -> dict:
        op = ev["op"]
        if op == "image":
            return self._apply_image(session, base64.b64decode(ev["png"]))
        if op == "annotate":
            return self._apply_annotate(session, ev["guide"])
        if op == "revise":
            return self._apply_revise(session, ev["object_id"], ev["guide"])
        if op == "delete":
            return self._apply_delete(session, ev["object_id"])
        raise InvalidInputError(f"unknown event {op!r}")

    # -- state transitions (shared by live calls and replay) ----------------

    def _apply_image(self, session: Session, png: bytes) -> dict:
        if session.objects:
            raise ConflictError("cannot replace the image once objects exist")
        session.image = load_image(png)
        session.revision += 1
        h, w = session.image.shape[:2]
        return {"session_id": session.id, "revision": session.revision,
                "image_size": [w, h]}

    def _object_rle(self, session: Session, rec: ObjectRecord) -> list:
        h, w = session.image.shape[:2]
        canvas = np.zeros((h, w), dtype=np.int32)
        place_mask(canvas, rec.result.mask, rec.result.patch, 1)
        return rle_encode((canvas > 0).astype(np.uint8))

    def _payload(self, session: Session, rec: ObjectRecord) -> dict:
        rle = self._object_rle(session, rec)
        return {"session_id": session.id, "object_id": rec.object_id,
                "rle": rle, "empty": not rle, "revision": session.revision}

    def _segment(self, session: Session, guide: dict, skip_oid=None):
        model = self.registry.get(session.model_id)
        others = [_rep_point(rec.guide) for rec in session.objects
                  if rec.object_id != skip_oid]
        spec, mask, _inc = segment_once(model, session.image, guide, others)
        return spec, mask

    def _apply_annotate(self, session: Session, guide: dict) -> dict:
        if session.image is None:
            raise ConflictError("upload an image before annotating")
        guide = _validate_guide(guide, session.image.shape)
        spec, mask = self._segment(session, guide)
        rec = ObjectRecord(session.next_object_id, guide,
                           ObjectResult(spec, mask, session.next_object_id))
        session.next_object_id += 1
        session.objects.append(rec)
        session.revision += 1
        return self._payload(session, rec)

    def _apply_revise(self, session: Session, object_id: int, guide: dict) -> dict:
        if session.image is None:
            raise ConflictError("session has no image")
        rec = session.find(object_id)
        guide = _validate_guide(guide, session.image.shape)
        spec, mask = self._segment(session, guide, skip_oid=object_id)
        rec.guide = guide
        rec.result = ObjectResult(spec, mask, object_id)
        session.revision += 1
        return self._payload(session, rec)

    def _apply_delete(self, session: Session, object_id: int) -> dict:
        rec = session.find(object_id)
        session.objects.remove(rec)
        session.revision += 1
        return {"session_id": session.id, "object_id": object_id,
                "deleted": True, "revision": session.revision}

    # -- public API ----------------------------------------------------------

    def create(self, model_id: str, request_id=None) -> dict:
        with self._lock:
            if request_id and request_id in self._create_seen:
                sid = self._create_seen[request_id]
                return {"session_id": sid, "revision": self._sessions[sid].revision}
            self.registry.get(model_id)  # 404 before any state is made
            sid = uuid.uuid4().hex[:12]
            session = Session(sid, model_id)
            self._sessions[sid] = session
            event = {"op": "create", "session": sid, "model": model_id}
            if request_id:
                event["request_id"] = request_id
                self._create_seen[request_id] = sid
            self._append(sid, event)
            return {"session_id": sid, "revision": 0}

    def get(self, sid: str) -> Session:
        if sid not in self._sessions:
            raise NotFoundError(f"unknown session {sid!r}")
        return self._sessions[sid]

    def list(self) -> list:
        return sorted(self._sessions)

    def _mutate(self, sid: str, event: dict, request_id=None) -> dict:
        session = self.get(sid)
        with session.lock:
            if request_id and request_id in session.seen:
                return session.seen[request_id]
            payload = self._apply(session, event)
            if request_id:
                event = dict(event, request_id=request_id)
                session.seen[request_id] = payload
            self._append(sid, event)
            return payload

    def set_image(self, sid: str, png: bytes, request_id=None) -> dict:
        event = {"op": "image", "png": base64.b64encode(png).decode("ascii")}
        return self._mutate(sid, event, request_id)

    def annotate(self, sid: str, guide: dict, request_id=None) -> dict:
        return self._mutate(sid, {"op": "annotate", "guide": guide}, request_id)

    def revise(self, sid: str, object_id: int, guide: dict, request_id=None) -> dict:
        event = {"op": "revise", "object_id": object_id, "guide": guide}
        return self._mutate(sid, event, request_id)

    def delete_object(self, sid: str, object_id: int, request_id=None) -> dict:
        event = {"op": "delete", "object_id": object_id}
        return self._mutate(sid, event, request_id)

    def undo(self, sid: str) -> dict:
        """Drop the last mutating event and rebuild the session from the log."""
        session = self.get(sid)
        with session.lock:
            path = self._log_path(sid)
            lines = [json.loads(ln) for ln in path.read_text().splitlines() if ln]
            if len(lines) <= 1:
                raise ConflictError("nothing to undo")
            lines = lines[:-1]
            tmp = path.with_suffix(".jsonl.tmp")
            tmp.write_text("".join(json.dumps(ev) + "\n" for ev in lines))
            os.replace(tmp, path)
            rebuilt = self._replay(lines)
            rebuilt.lock = session.lock  # keep waiters on the same lock
            self._sessions[sid] = rebuilt
        return self.state(sid)

    def export_labelmap(self, sid: str) -> np.ndarray:
        session = self.get(sid)
        with session.lock:
            if session.image is None:
                raise ConflictError("session has no image")
            h, w = session.image.shape[:2]
            return assemble([rec.result for rec in session.objects], (w, h))

    def state(self, sid: str) -> dict:
        session = self.get(sid)
        with session.lock:
            size = None
            objects = []
            if session.image is not None:
                h, w = session.image.shape[:2]
                size = [w, h]
                for rec in session.objects:
                    rle = self._object_rle(session, rec)
                    objects.append({"object_id": rec.object_id,
                                    "guide": rec.guide,
                                    "rle": rle, "empty": not rle})
            return {"session_id": session.id, "model_id": session.model_id,
                    "revision": session.revision, "image_size": size,
                    "objects": objects}

    def replay_equals_live(self, sid: str) -> bool:
        """Replay the persisted log and compare against live state."""
        session = self.get(sid)
        lines = [json.loads(ln)
                 for ln in self._log_path(sid).read_text().splitlines() if ln]
        twin = self._replay(lines)
        if (twin.revision != session.revision
                or len(twin.objects) != len(session.objects)):
            return False
        for a, b in zip(twin.objects, session.objects):
            if (a.object_id != b.object_id or a.guide != b.guide
                    or not np.array_equal(a.result.mask, b.result.mask)
                    or a.result.patch != b.result.patch):
                return False
        return True
