"""HTTP client for live model services.

Every service is a JSON-over-POST endpoint; images travel as base64 PNG.

============  ==============================================================  ======================================
service       request body                                                    response body
============  ==============================================================  ======================================
detect        ``{image, categories: [str], conf_floors: {label: float}}``     ``{detections: [{label, box, conf}]}``
segment       ``{image, rects: [[x1, y1, x2, y2]]}``                          ``{masks: [b64 PNG]}``
embed         ``{image}``                                                     ``{embedding: [float]}``
judge         ``{prompt, images: [b64 PNG], template}``                       ``{text}``
paint         ``{image, mask, seed, branch, prompt}``                         ``{image}``
aesthetic     ``{image}``                                                     ``{score}``
============  ==============================================================  ======================================
"""
from __future__ import annotations

import logging
import threading
import time
from typing import Sequence

import numpy as np
import requests
from requests.adapters import HTTPAdapter

from ..errors import BackendUnavailable, ConfigError, MalformedResponse
from ..geometry import BinaryMask, PixelRect
from ..imaging import from_b64png, image_size, load_image, to_b64png
from ..records import Detection
from .base import EMBED_DIM, SERVICES, BackendConfig, ModelGateway, floor_for

log = logging.getLogger(__name__)

# live segmenters may spill slightly past the prompt box; anything further is a contract breach
SEGMENT_SPILL_PX = 2


class HttpGateway(ModelGateway):
    def __init__(self, config: BackendConfig):
        missing = [s for s in SERVICES if s not in config.endpoints]
        if missing:
            raise ConfigError(f"live mode needs endpoints for {missing}")
        self.config = config
        self._local = threading.local()
        self._slots = threading.BoundedSemaphore(config.max_in_flight)

    def _session(self) -> requests.Session:
        s = getattr(self._local, "session", None)
        if s is None:
            s = requests.Session()
            s.mount("http://", HTTPAdapter(pool_maxsize=self.config.max_in_flight))
            s.mount("https://", HTTPAdapter(pool_maxsize=self.config.max_in_flight))
            if self.config.auth_token:
                s.headers["Authorization"] = f"Bearer {self.config.auth_token}"
            self._local.session = s
        return s

    def _post(self, service: str, body: dict) -> dict:
        url = self.config.endpoints[service]
        cfg = self.config
        last: Exception | None = None
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                delay = cfg.backoff_base * 2 ** (attempt - 1)
                log.warning("%s retry %d/%d in %.2fs after %s", service, attempt, cfg.max_retries, delay, last)
                time.sleep(delay)
            try:
                with self._slots:
                    resp = self._session().post(url, json=body, timeout=cfg.timeout)
            except (requests.ConnectionError, requests.Timeout) as err:
                last = err
                continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last = BackendUnavailable(f"{service} answered HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise MalformedResponse(f"{service} rejected request: HTTP {resp.status_code} {resp.text[:200]}")
            try:
                payload = resp.json()
            except ValueError:
                raise MalformedResponse(f"{service} returned non-JSON body") from None
            if not isinstance(payload, dict):
                raise MalformedResponse(f"{service} returned {type(payload).__name__}, expected object")
            return payload
        raise BackendUnavailable(f"{service} at {url} unavailable after {cfg.max_retries} retries: {last}")

    @staticmethod
    def _field(payload: dict, key: str, service: str):
        if key not in payload:
            raise MalformedResponse(f"{service} response lacks {key!r}")
        return payload[key]

    def detect(self, image, categories, conf_floors):
        if not categories:
            raise ValueError("detect needs at least one category")
        payload = self._post("detect", {
            "image": to_b64png(image), "categories": list(categories), "conf_floors": dict(conf_floors),
        })
        out = []
        try:
            for d in self._field(payload, "detections", "detect"):
                det = Detection.from_dict({**d, "label": str(d["label"]).strip().lower()})
                if det.conf >= floor_for(det.label, conf_floors):
                    out.append(det)
        except (KeyError, TypeError, ValueError) as err:
            raise MalformedResponse(f"detect: bad detection entry ({err})") from None
        return out

    def segment(self, image, rects: Sequence[PixelRect]):
        if not rects:
            return []
        W, H = image_size(image)
        payload = self._post("segment", {
            "image": to_b64png(image), "rects": [[r.x1, r.y1, r.x2, r.y2] for r in rects],
        })
        raw = self._field(payload, "masks", "segment")
        if not isinstance(raw, list) or len(raw) != len(rects):
            raise MalformedResponse(f"segment returned {len(raw) if isinstance(raw, list) else raw!r} masks for {len(rects)} rects")
        masks = []
        for r, b64 in zip(rects, raw):
            bm = from_b64png(b64)[:, :, 0] > 127
            if bm.shape != (H, W):
                raise MalformedResponse(f"segment mask shape {bm.shape} != image {(H, W)}")
            inside = np.zeros_like(bm)
            inside[r.slices] = True
            grown = np.zeros_like(bm)
            grown[max(r.y1 - SEGMENT_SPILL_PX, 0):r.y2 + SEGMENT_SPILL_PX,
                  max(r.x1 - SEGMENT_SPILL_PX, 0):r.x2 + SEGMENT_SPILL_PX] = True
            if (bm & ~grown).any():
                log.warning("segment mask spills more than %d px outside %s", SEGMENT_SPILL_PX, r)
            masks.append(BinaryMask(bm & inside))
        return masks

    def embed(self, image):
        payload = self._post("embed", {"image": to_b64png(image)})
        v = np.asarray(self._field(payload, "embedding", "embed"), dtype=np.float64)
        if v.shape != (EMBED_DIM,) or not np.all(np.isfinite(v)):
            raise MalformedResponse(f"embed returned shape {v.shape}, expected ({EMBED_DIM},)")
        n = np.linalg.norm(v)
        if n == 0:
            raise MalformedResponse("embed returned a zero vector")
        return v / n

    def _judge_raw(self, prompt, images, template):
        payload = self._post("judge", {
            "prompt": prompt, "images": [to_b64png(im) for im in images], "template": template,
        })
        text = self._field(payload, "text", "judge")
        if not isinstance(text, str):
            raise MalformedResponse("judge text must be a string")
        return text

    def paint(self, job):
        img = load_image(job.image)
        if job.mask.bitmap.shape != img.shape[:2]:
            raise ValueError(f"mask {job.mask.bitmap.shape} does not match image {img.shape[:2]}")
        hole = np.where(job.mask.bitmap, 255, 0).astype(np.uint8)
        payload = self._post("paint", {
            "image": to_b64png(img),
            "mask": to_b64png(hole),
            "seed": int(job.seed), "branch": job.branch, "prompt": job.prompt or "",
        })
        out = from_b64png(self._field(payload, "image", "paint"))
        if out.shape != img.shape:
            raise MalformedResponse(f"paint returned {out.shape}, expected {img.shape}")
        return out

    def aesthetic(self, image):
        payload = self._post("aesthetic", {"image": to_b64png(image)})
        try:
            score = float(self._field(payload, "score", "aesthetic"))
        except (TypeError, ValueError):
            raise MalformedResponse("aesthetic score is not a number") from None
        if not np.isfinite(score):
            raise MalformedResponse("aesthetic score is not finite")
        return score
