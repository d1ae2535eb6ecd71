from __future__ import annotations

import abc
import json
import logging
import os
import re
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Any, Sequence

import numpy as np

from ..errors import ConfigError, MalformedResponse, ScoreOutOfRange
from ..geometry import BinaryMask, PixelRect
from ..imaging import ImageRef
from ..prompts import TEMPLATES
from ..records import Detection

if TYPE_CHECKING:
    from ..synthesis import SynthesisJob

log = logging.getLogger(__name__)

SERVICES = ("detect", "segment", "embed", "judge", "paint", "aesthetic")
EMBED_DIM = 384


@dataclass
class BackendConfig:
    mode: str = "mock"
    endpoints: dict[str, str] = field(default_factory=dict)
    timeout: float = 30.0
    max_retries: int = 3
    backoff_base: float = 0.5
    auth_token: str | None = None
    max_in_flight: int = 8
    # mock-only knobs
    artifact_fail_rate: float = 0.25
    vlm_reject_rate: float = 0.1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in ("mock", "live"):
            raise ConfigError(f"backend mode must be 'mock' or 'live', got {self.mode!r}")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.timeout <= 0:
            raise ConfigError("timeout must be positive")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")
        unknown = set(self.endpoints) - set(SERVICES)
        if unknown:
            raise ConfigError(f"unknown backend services: {sorted(unknown)}")
        for rate in (self.artifact_fail_rate, self.vlm_reject_rate):
            if not 0.0 <= rate <= 1.0:
                raise ConfigError("mock failure rates must lie in [0, 1]")

    def with_env(self, environ=None) -> "BackendConfig":
        """Copy with ``DETECT_URL``-style environment variables overriding endpoints."""
        environ = os.environ if environ is None else environ
        eps = dict(self.endpoints)
        for svc in SERVICES:
            url = environ.get(f"{svc.upper()}_URL")
            if url:
                eps[svc] = url
        token = environ.get("BACKEND_AUTH_TOKEN", self.auth_token)
        return BackendConfig(**{**asdict(self), "endpoints": eps, "auth_token": token})


@dataclass(frozen=True)
class JudgeVerdict:
    raw: str
    template: str
    parsed: Any

    def failed_keys(self, expected: dict[str, bool]) -> list[str]:
        return [k for k, v in expected.items() if self.parsed[k] != v]


_FENCE = re.compile(r"^```(?:json)?\s*(.*?)\s*```$", re.S)
_NUMBER = re.compile(r"(?<![\w.])-?\d+(?:\.\d+)?(?!\w)")


def _json_object(raw: str) -> dict:
    text = raw.strip()
    m = _FENCE.match(text)
    if m:
        text = m.group(1)
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as err:
        raise MalformedResponse(f"not JSON: {err}") from None
    if not isinstance(obj, dict):
        raise MalformedResponse(f"expected a JSON object, got {type(obj).__name__}")
    return obj


def extract_score(raw: str) -> float:
    """First standalone number in the text, which must lie in [0, 10]."""
    m = _NUMBER.search(raw)
    if m is None:
        raise MalformedResponse(f"no numeric rating in {raw[:80]!r}")
    value = float(m.group(0))
    if not 0.0 <= value <= 10.0:
        raise ScoreOutOfRange(f"rating {value} outside [0, 10]")
    return value


def parse_verdict(raw: str, template: str) -> JudgeVerdict:
    spec = TEMPLATES[template]
    if spec.kind == "bool_keys":
        obj = _json_object(raw)
        missing = [k for k in spec.keys if k not in obj]
        extra = [k for k in obj if k not in spec.keys]
        if missing or extra:
            raise MalformedResponse(f"{template}: missing keys {missing}, unexpected keys {extra}")
        bad = [k for k, v in obj.items() if not isinstance(v, bool)]
        if bad:
            raise MalformedResponse(f"{template}: non-boolean values for {bad}")
        return JudgeVerdict(raw, template, {k: obj[k] for k in spec.keys})
    if spec.kind == "objects":
        obj = _json_object(raw)
        if set(obj) != {"objects"}:
            raise MalformedResponse(f"{template}: expected exactly the key 'objects', got {sorted(obj)}")
        names = obj["objects"]
        if not isinstance(names, list) or not all(isinstance(n, str) and n.strip() for n in names):
            raise MalformedResponse(f"{template}: 'objects' must be a list of non-empty strings")
        if len(names) > 3:
            raise MalformedResponse(f"{template}: {len(names)} objects listed, at most 3 allowed")
        return JudgeVerdict(raw, template, {"objects": list(names)})
    if spec.kind == "score":
        return JudgeVerdict(raw, template, {spec.keys[0]: extract_score(raw)})
    text = raw.strip()
    if not text:
        raise MalformedResponse(f"{template}: empty text response")
    return JudgeVerdict(raw, template, {"text": text})


class ModelGateway(abc.ABC):
    """Contract for the six model services the pipeline depends on.

    Implementations must be safe to call from many worker threads at once.
    """

    @abc.abstractmethod
    def detect(self, image: ImageRef, categories: Sequence[str], conf_floors: dict[str, float]) -> list[Detection]:
        ...

    @abc.abstractmethod
    def segment(self, image: ImageRef, rects: Sequence[PixelRect]) -> list[BinaryMask]:
        ...

    @abc.abstractmethod
    def embed(self, image: ImageRef) -> np.ndarray:
        ...

    @abc.abstractmethod
    def _judge_raw(self, prompt: str, images: Sequence[ImageRef], template: str) -> str:
        ...

    @abc.abstractmethod
    def paint(self, job: "SynthesisJob") -> np.ndarray:
        ...

    @abc.abstractmethod
    def aesthetic(self, image: ImageRef) -> float:
        ...

    def judge(self, prompt: str, images: Sequence[ImageRef], template: str) -> JudgeVerdict:
        """Ask the judge; a malformed answer earns exactly one re-ask."""
        if not prompt:
            raise ValueError("judge prompt must be non-empty")
        if not images:
            raise ValueError("judge needs at least one image")
        if template not in TEMPLATES:
            raise KeyError(f"unknown template {template!r}")
        try:
            return parse_verdict(self._judge_raw(prompt, images, template), template)
        except MalformedResponse as err:
            log.warning("malformed %s response (%s); re-asking once", template, err)
        return parse_verdict(self._judge_raw(prompt, images, template), template)


def floor_for(label: str, conf_floors: dict[str, float]) -> float:
    return conf_floors.get(label, conf_floors.get("*", 0.0))
