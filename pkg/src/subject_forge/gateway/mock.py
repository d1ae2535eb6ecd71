"""Deterministic stand-ins for every model service.

Fixtures come from JSON sidecars next to image files (``frame.png`` ->
``frame.json``). Anything without a sidecar gets an answer derived from a
hash of its content, so repeated runs are bit-identical.

Recognised sidecar keys::

    aesthetic        float
    objects          list[str]                 object-extraction answer
    detections       [{label, box, conf}]      box is normalised [x_c, y_c, w, h]
    human_verdict    dict                      human-filter answer
    object_verdict   dict                      object-filter answer
    artifact         dict                      artifact-check answer
    scores           {"PA": 8, "IF": 7, ...}   benchmark ratings for this image
"""
from __future__ import annotations

import hashlib
import json
import threading
from collections import deque
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import MalformedResponse, MissingMetadata
from ..geometry import BinaryMask, PixelRect
from ..imaging import MID_GRAY, ImageRef, image_digest, image_size, load_image
from ..prompts import (
    ARTIFACT_KEYS,
    HUMAN_ACCEPT,
    OBJECT_ACCEPT,
    TEMPLATES,
)
from ..records import Detection
from .base import EMBED_DIM, BackendConfig, ModelGateway, floor_for

_WORDS = (
    "the subject stands near a bright window while soft light falls across the scene "
    "a calm figure turns toward the camera with a relaxed posture and a warm smile "
    "textured fabric and clear colours frame the composition in a natural setting"
).split()


@lru_cache(maxsize=4096)
def _sidecar_cached(path: str, mtime: float) -> dict | None:
    p = Path(path)
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        return None


def load_sidecar(ref: ImageRef) -> dict | None:
    if not isinstance(ref, (str, Path)):
        return None
    side = Path(ref).with_suffix(".json")
    try:
        mtime = side.stat().st_mtime
    except FileNotFoundError:
        return None
    return _sidecar_cached(str(side), mtime)


def _rng_for(*parts) -> np.random.Generator:
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(p if isinstance(p, bytes) else str(p).encode())
        h.update(b"\x1f")
    return np.random.default_rng(int.from_bytes(h.digest(), "little"))


def inscribed_ellipse(rect: PixelRect, width: int, height: int) -> BinaryMask:
    """Filled ellipse inscribed in ``rect`` on a ``width x height`` canvas."""
    bm = np.zeros((height, width), dtype=bool)
    ys = np.arange(rect.y1, rect.y2) + 0.5
    xs = np.arange(rect.x1, rect.x2) + 0.5
    cy, cx = (rect.y1 + rect.y2) / 2, (rect.x1 + rect.x2) / 2
    ry, rx = rect.height / 2, rect.width / 2
    inside = ((ys[:, None] - cy) / ry) ** 2 + ((xs[None, :] - cx) / rx) ** 2 <= 1.0
    bm[rect.slices] = inside
    return BinaryMask(bm)


class MockGateway(ModelGateway):
    def __init__(self, config: BackendConfig | None = None, judge_script: dict[str, list[str]] | None = None):
        self.config = config or BackendConfig()
        self._script = {k: deque(v) for k, v in (judge_script or {}).items()}
        self._lock = threading.Lock()
        self.calls: dict[str, int] = {}

    def _count(self, name: str) -> None:
        with self._lock:
            self.calls[name] = self.calls.get(name, 0) + 1

    def detect(self, image, categories, conf_floors):
        self._count("detect")
        if not categories:
            raise ValueError("detect needs at least one category")
        side = load_sidecar(image) or {}
        wanted = set(categories)
        out = []
        for d in side.get("detections", []):
            det = Detection.from_dict(d)
            if det.label in wanted and det.conf >= floor_for(det.label, conf_floors):
                out.append(det)
        return out

    def segment(self, image, rects: Sequence[PixelRect]):
        self._count("segment")
        W, H = image_size(image)
        return [inscribed_ellipse(r, W, H) for r in rects]

    def embed(self, image):
        self._count("embed")
        v = _rng_for(b"embed", image_digest(image)).standard_normal(EMBED_DIM)
        return v / np.linalg.norm(v)

    def paint(self, job):
        self._count("paint")
        img = load_image(job.image)
        hole = job.mask.bitmap
        if hole.shape != img.shape[:2]:
            raise ValueError(f"mask {hole.shape} does not match image {img.shape[:2]}")
        out = img.copy()
        keep = ~hole
        if keep.any():
            fill = np.floor(img[keep].astype(np.float64).mean(axis=0) + 0.5).astype(np.uint8)
        else:
            fill = np.full(3, MID_GRAY, dtype=np.uint8)
        out[hole] = fill
        return out

    def aesthetic(self, image):
        self._count("aesthetic")
        side = load_sidecar(image)
        if side is None or "aesthetic" not in side:
            raise MissingMetadata(f"no aesthetic fixture for {image}")
        return float(side["aesthetic"])

    # judge --------------------------------------------------------------

    def _judge_raw(self, prompt, images, template):
        self._count("judge")
        with self._lock:
            queue = self._script.get(template)
            if queue:
                return queue.popleft() if len(queue) > 1 else queue[0]
        spec = TEMPLATES[template]
        sides = [load_sidecar(im) or {} for im in images]
        first = sides[0]
        digest = b"".join(image_digest(im) for im in images)
        if template == "object_extraction":
            if "objects" in first:
                names = first["objects"]
            else:
                names = list(dict.fromkeys(d["label"] for d in first.get("detections", [])))[:3]
            return json.dumps({"objects": names})
        if template in ("human_filter", "object_filter"):
            key = "human_verdict" if template == "human_filter" else "object_verdict"
            if key in first:
                return json.dumps(first[key])
            accept = dict(HUMAN_ACCEPT if template == "human_filter" else OBJECT_ACCEPT)
            rng = _rng_for(template, digest)
            if rng.random() < self.config.vlm_reject_rate:
                k = list(accept)[int(rng.integers(len(accept)))]
                accept[k] = not accept[k]
            return json.dumps(accept)
        if template == "artifact_check":
            if "artifact" in first:
                return json.dumps(first["artifact"])
            verdict = dict.fromkeys(ARTIFACT_KEYS, False)
            rng = _rng_for(template, digest)
            if rng.random() < self.config.artifact_fail_rate:
                verdict[ARTIFACT_KEYS[int(rng.integers(len(ARTIFACT_KEYS)))]] = True
            return json.dumps(verdict)
        if spec.kind == "score":
            dim = spec.keys[0]
            for side in sides:
                if dim in side.get("scores", {}):
                    return str(side["scores"][dim])
            return f"{round(float(_rng_for(template, digest).uniform(2.0, 10.0)), 1)}"
        if spec.kind == "text":
            lo, hi = spec.sentences
            rng = _rng_for(template, digest)
            n = int(rng.integers(lo, hi + 1))
            sentences = []
            for _ in range(n):
                words = rng.choice(_WORDS, size=int(rng.integers(6, 12)))
                s = " ".join(words)
                sentences.append(s[0].upper() + s[1:] + ".")
            return " ".join(sentences)
        raise MalformedResponse(f"mock judge has no answer for template {template}")
