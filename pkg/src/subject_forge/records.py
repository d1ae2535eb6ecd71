"""Manifest data model: one :class:`ClipRecord` per JSONL line."""
from __future__ import annotations

import copy
import json
import logging
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Iterator

from .geometry import Canvas, NormBox, PixelRect, box_to_pixels

log = logging.getLogger(__name__)

STATUSES = ("raw", "curated", "mined", "paired", "synthesized", "verified", "captioned")
DISCARDED = "discarded"
TERMINAL = ("captioned", DISCARDED)


@dataclass(frozen=True)
class Detection:
    label: str
    box: NormBox
    conf: float

    def __post_init__(self):
        if not self.label or self.label != self.label.lower():
            raise ValueError(f"detection label must be non-empty lower-case, got {self.label!r}")
        if not 0.0 <= self.conf <= 1.0:
            raise ValueError(f"confidence {self.conf} outside [0, 1]")

    @property
    def area(self) -> float:
        return self.box.area

    def rect(self, canvas: Canvas) -> PixelRect:
        return box_to_pixels(self.box, canvas)

    def to_dict(self) -> dict:
        return {"label": self.label, "box": self.box.as_list(), "conf": self.conf}

    @classmethod
    def from_dict(cls, d: dict) -> "Detection":
        return cls(str(d["label"]), NormBox(*map(float, d["box"])), float(d["conf"]))


@dataclass
class ClipRecord:
    clip_id: str
    source: str = ""
    frames: list[str] = field(default_factory=list)
    frame_sizes: list[list[int]] = field(default_factory=list)
    aesthetic: float | None = None
    sampled: list[int] = field(default_factory=list)
    frame_labels: dict[str, list[str]] = field(default_factory=dict)
    consensus: list[str] = field(default_factory=list)
    clip_kind: str | None = None
    detections: dict[str, list[dict]] = field(default_factory=dict)
    masks: dict[str, list[str]] = field(default_factory=dict)
    pair: list[int] | None = None
    pair_distance: float | None = None
    branch: str | None = None
    job: dict | None = None
    sample: dict | None = None
    verify_attempts: int = 0
    caption_short: str | None = None
    caption_long: str | None = None
    caption_styles: dict | None = None
    status: str = "raw"
    discard_reason: str | None = None
    seed: int = 0
    extra: dict = field(default_factory=dict)

    # not serialised; directory that relative paths resolve against
    base_dir: Path | None = field(default=None, repr=False, compare=False)

    _SERIALISED = None  # filled below

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    def canvas(self, idx: int) -> Canvas:
        W, H = self.frame_sizes[idx] if len(self.frame_sizes) > 1 else self.frame_sizes[0]
        return Canvas(int(W), int(H))

    def frame_path(self, idx: int) -> Path:
        return self.resolve(self.frames[idx])

    def resolve(self, p: str) -> Path:
        path = Path(p)
        if not path.is_absolute() and self.base_dir is not None:
            path = self.base_dir / path
        return path

    def frame_detections(self, idx: int) -> list[Detection]:
        return [Detection.from_dict(d) for d in self.detections.get(str(idx), [])]

    def advance(self, status: str) -> None:
        if self.status == DISCARDED:
            raise ValueError(f"{self.clip_id}: cannot advance a discarded record")
        if STATUSES.index(status) <= STATUSES.index(self.status):
            raise ValueError(f"{self.clip_id}: status can only move forward ({self.status} -> {status})")
        self.status = status

    def discard(self, reason: str) -> None:
        if not reason:
            raise ValueError("discard reason must be non-empty")
        self.status = DISCARDED
        self.discard_reason = reason

    @property
    def is_discarded(self) -> bool:
        return self.status == DISCARDED

    def copy(self) -> "ClipRecord":
        return copy.deepcopy(self)

    def to_dict(self, out_dir: Path | None = None) -> dict:
        d = {}
        for name in self._SERIALISED:
            d[name] = copy.deepcopy(getattr(self, name))
        _map_paths(d, lambda p: _relativise(self.resolve(p), out_dir) if out_dir is not None else p)
        for k, v in self.extra.items():
            if k not in d:
                d[k] = v
        return d

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "ClipRecord":
        if not isinstance(d, dict) or not d.get("clip_id"):
            raise ValueError("record has no clip_id")
        known = {k: copy.deepcopy(v) for k, v in d.items() if k in cls._SERIALISED}
        extra = {k: v for k, v in d.items() if k not in cls._SERIALISED}
        rec = cls(**known, extra=extra, base_dir=base_dir)
        rec.clip_id = str(rec.clip_id)
        if rec.status not in STATUSES and rec.status != DISCARDED:
            raise ValueError(f"unknown status {rec.status!r}")
        return rec


ClipRecord._SERIALISED = tuple(
    f.name for f in fields(ClipRecord) if f.name not in ("extra", "base_dir")
)


def _relativise(path: Path, out_dir: Path) -> str:
    try:
        return os.path.relpath(os.path.abspath(path), os.path.abspath(out_dir))
    except ValueError:  # different drive
        return str(path)


def _map_paths(d: dict, fn) -> None:
    """Apply ``fn`` to every file-path field of a serialised record in place."""
    d["frames"] = [fn(p) for p in d.get("frames") or []]
    if d.get("masks"):
        d["masks"] = {k: [fn(p) for p in v] for k, v in d["masks"].items()}
    for key in ("job", "sample"):
        blob = d.get(key)
        if not blob:
            continue
        for k, v in list(blob.items()):
            if k.endswith("_path") and isinstance(v, str):
                blob[k] = fn(v)
            elif k.endswith("_paths") and isinstance(v, list):
                blob[k] = [fn(p) for p in v]


def parse_error_record(lineno: int, raw: str, err: Exception) -> ClipRecord:
    rec = ClipRecord(clip_id=f"__line{lineno:08d}", extra={"raw": raw})
    rec.discard(f"parse_error: {err}"[:200])
    return rec


def iter_manifest(path: str | Path) -> Iterator[ClipRecord]:
    """Stream records from a JSONL manifest; malformed lines become discarded records."""
    path = Path(path)
    base = path.parent.resolve()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = ClipRecord.from_dict(json.loads(line), base_dir=base)
            except (ValueError, TypeError, KeyError) as err:
                log.warning("manifest %s line %d unparseable: %s", path, lineno, err)
                rec = parse_error_record(lineno, line.rstrip("\n"), err)
            yield rec


def read_manifest(path: str | Path) -> list[ClipRecord]:
    return list(iter_manifest(path))


def dumps_record(rec: ClipRecord, out_dir: Path | None = None) -> str:
    return json.dumps(rec.to_dict(out_dir), ensure_ascii=False, separators=(",", ":"))


def write_manifest(path: str | Path, records: Iterable[ClipRecord]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out_dir = path.parent.resolve()
    tmp = path.with_name(path.name + ".tmp")
    n = 0
    with open(tmp, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(dumps_record(rec, out_dir) + "\n")
            n += 1
    os.replace(tmp, path)
    return n


def as_record(obj: Any, base_dir: Path | None = None) -> ClipRecord:
    if isinstance(obj, ClipRecord):
        return obj
    if isinstance(obj, dict):
        return ClipRecord.from_dict(obj, base_dir=base_dir)
    raise TypeError(f"expected ClipRecord or dict, got {type(obj).__name__}")
