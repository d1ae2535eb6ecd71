"""Cross-frame subject mining: category consensus, grounding, rule filters, VLM gate."""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Iterable, Sequence

from .errors import DegenerateBox
from .gateway import ModelGateway
from .geometry import Canvas, border_tags, box_to_pixels, iou
from .imaging import ImageRef, load_image
from .prompts import HUMAN_ACCEPT, OBJECT_ACCEPT, render
from .records import Detection
from .stage import RecordStage

PERSON = "person"
HUMAN_CANVAS = Canvas(1280, 720)


@lru_cache(maxsize=None)
def _data_lines(name: str) -> tuple[str, ...]:
    text = resources.files("subject_forge.data").joinpath(name).read_text(encoding="utf-8")
    return tuple(line.strip() for line in text.splitlines() if line.strip())


def default_blacklist() -> tuple[str, ...]:
    return _data_lines("blacklist.txt")


def default_vocabulary() -> frozenset[str]:
    return frozenset(_data_lines("vocabulary.txt")) | frozenset(default_blacklist())


def normalize_label(name: str, vocabulary: Iterable[str] | None = None) -> str:
    """Lower-case, trim, and strip a plural suffix when the singular is a known noun."""
    vocab = default_vocabulary() if vocabulary is None else frozenset(vocabulary)
    label = re.sub(r"\s+", " ", name.strip().lower())
    if label in vocab:
        return label
    for suffix, repl in (("ies", "y"), ("es", ""), ("s", "")):
        if label.endswith(suffix) and label[: -len(suffix)] + repl in vocab:
            return label[: -len(suffix)] + repl
    return label


def blacklist_set(entries: Iterable[str] | None = None) -> frozenset[str]:
    """Entries plus their singular forms, so "armchairs" also bans "armchair"."""
    entries = default_blacklist() if entries is None else tuple(entries)
    singular = {e[:-1] for e in entries if e.endswith("s") and not e.endswith("ss")}
    return frozenset(entries) | frozenset(singular)


@dataclass(frozen=True)
class FilterVerdict:
    accepted: bool
    failed_rule: str | None = None
    detections: tuple[Detection, ...] = ()

    def __post_init__(self):
        if self.accepted != (self.failed_rule is None):
            raise ValueError("accepted verdicts carry no failed rule and vice versa")

    @classmethod
    def ok(cls, detections: Sequence[Detection] = ()) -> "FilterVerdict":
        return cls(True, None, tuple(detections))

    @classmethod
    def reject(cls, rule: str) -> "FilterVerdict":
        return cls(False, rule)


# rule parameter sets ------------------------------------------------------


@dataclass(frozen=True)
class SingleRules:
    area_min: float = 0.2
    area_max: float = 0.8
    conf_min: float = 0.85
    through_area: float = 0.7
    border_tol: float = 15


BORDER_CONF_ROWS = (
    ("bottom_and_side", 0.87),
    ("top_bottom_side", 0.88),
    ("top_bottom", 0.87),
)


def border_row_triggered(row: str, tags: frozenset[str]) -> bool:
    if row == "bottom_and_side":
        return "bottom" in tags and ("left" in tags or "right" in tags)
    if row == "top_bottom_side":
        return {"top", "bottom", "left"} <= tags or {"top", "bottom", "right"} <= tags
    if row == "top_bottom":
        return {"top", "bottom"} <= tags
    raise KeyError(row)


@dataclass(frozen=True)
class ThreeRules:
    iou_max: float = 0.2
    sum_area_min: float = 0.2
    conf_min: float = 0.8
    border_rows: tuple[tuple[str, float], ...] = BORDER_CONF_ROWS
    # "all": every triggered row must be met; "first_match": only the first triggered row binds
    border_precedence: str = "all"
    border_tol: float = 15


@dataclass(frozen=True)
class MixedRules:
    area_min: float = 0.01
    area_max: float = 0.60
    conf_min: float = 0.5
    person_conf_min: float = 0.8
    person_min: int = 1
    person_max: int = 3
    total_min: int = 1
    total_max: int = 5
    singleton_area_min: float = 0.20
    singleton_area_max: float = 0.60
    blacklist: frozenset[str] = field(default_factory=blacklist_set)


# filters ------------------------------------------------------------------


def filter_single_person(dets: Sequence[Detection], canvas: Canvas, rules: SingleRules = SingleRules()) -> FilterVerdict:
    if len(dets) != 1:
        return FilterVerdict.reject("count")
    d = dets[0]
    A = d.area
    if A < rules.area_min or A > rules.area_max:
        return FilterVerdict.reject("area")
    if d.conf < rules.conf_min:
        return FilterVerdict.reject("conf")
    try:
        tags = border_tags(box_to_pixels(d.box, canvas), canvas, rules.border_tol)
    except DegenerateBox:
        return FilterVerdict.reject("degenerate_box")
    if "top" in tags and "bottom" in tags and A > rules.through_area:
        return FilterVerdict.reject("through_frame")
    return FilterVerdict.ok(dets)


def required_border_conf(tags: frozenset[str], rules: ThreeRules) -> float | None:
    """Minimum confidence the border table demands of a box, or None if no row triggers."""
    hits = [conf for row, conf in rules.border_rows if border_row_triggered(row, tags)]
    if not hits:
        return None
    if rules.border_precedence == "first_match":
        return hits[0]
    return max(hits)


def filter_three_person(dets: Sequence[Detection], canvas: Canvas, rules: ThreeRules = ThreeRules()) -> FilterVerdict:
    if len(dets) != 3:
        return FilterVerdict.reject("count")
    try:
        rects = [box_to_pixels(d.box, canvas) for d in dets]
    except DegenerateBox:
        return FilterVerdict.reject("degenerate_box")
    for i in range(3):
        for j in range(i + 1, 3):
            if iou(rects[i], rects[j]) > rules.iou_max:
                return FilterVerdict.reject("iou")
    if sum(d.area for d in dets) < rules.sum_area_min:
        return FilterVerdict.reject("sum_area")
    for d, r in zip(dets, rects):
        if d.conf < rules.conf_min:
            return FilterVerdict.reject("conf")
        tags = border_tags(r, canvas, rules.border_tol)
        if "top" in tags and "bottom" not in tags:
            return FilterVerdict.reject("top_without_bottom")
        need = required_border_conf(tags, rules)
        if need is not None and d.conf < need:
            return FilterVerdict.reject("border_conf")
    return FilterVerdict.ok(dets)


def filter_mixed(dets: Sequence[Detection], canvas: Canvas | None = None, rules: MixedRules = MixedRules()) -> FilterVerdict:
    """Per-frame cleaning for mixed-object clips; accepted verdicts carry the surviving boxes."""
    kept = [d for d in dets if rules.area_min <= d.area <= rules.area_max]
    kept = [d for d in kept if d.label not in rules.blacklist]
    kept = [d for d in kept if d.conf >= rules.conf_min]
    kept = [d for d in kept if not (d.label == PERSON and d.conf < rules.person_conf_min)]
    n_person = sum(d.label == PERSON for d in kept)
    if n_person < rules.person_min or n_person > rules.person_max:
        return FilterVerdict.reject("person_count")
    best: dict[str, int] = {}
    for i, d in enumerate(kept):
        j = best.get(d.label)
        if j is None or d.area > kept[j].area:  # ties keep the earlier box
            best[d.label] = i
    kept = [kept[i] for i in sorted(best.values())]
    if len(kept) < rules.total_min or len(kept) > rules.total_max:
        return FilterVerdict.reject("object_count")
    if len(kept) == 1 and not (rules.singleton_area_min <= kept[0].area <= rules.singleton_area_max):
        return FilterVerdict.reject("singleton_area")
    return FilterVerdict.ok(kept)


# VLM-backed steps ----------------------------------------------------------


def extract_subjects(gateway: ModelGateway, frame_image: ImageRef, vocabulary: Iterable[str] | None = None) -> list[str]:
    verdict = gateway.judge(render("object_extraction"), [frame_image], "object_extraction")
    labels = [normalize_label(n, vocabulary) for n in verdict.parsed["objects"]]
    return list(dict.fromkeys(labels))


def consensus(per_frame_labels: Sequence[Iterable[str]], mode: str = "majority") -> frozenset[str]:
    """Labels agreed on across frames; an empty result means the clip is dropped.

    ``majority`` keeps labels seen in more than half of the ``k`` frames
    (``k // 2 + 1``), ``intersection`` keeps labels seen in all of them.
    """
    sets = [frozenset(s) for s in per_frame_labels]
    if len(sets) < 2:
        raise ValueError("consensus needs at least two frames")
    if mode == "intersection":
        return frozenset.intersection(*sets)
    if mode != "majority":
        raise ValueError(f"unknown consensus mode {mode!r}")
    need = len(sets) // 2 + 1
    counts = Counter(label for s in sets for label in s)
    return frozenset(label for label, c in counts.items() if c >= need)


def ground(gateway: ModelGateway, frame: ImageRef, categories: Iterable[str],
           floors: dict[str, float] | None = None, area_floor: float = 0.05) -> list[Detection]:
    floors = {PERSON: 0.8, "*": 0.5} if floors is None else floors
    dets = gateway.detect(frame, sorted(categories), floors)
    return [d for d in dets if d.area >= area_floor]


def vlm_gate(gateway: ModelGateway, crop_image: ImageRef, kind: str, label: str = PERSON) -> FilterVerdict:
    if kind == "human":
        verdict = gateway.judge(render("human_filter"), [crop_image], "human_filter")
        expected = HUMAN_ACCEPT
    elif kind == "object":
        verdict = gateway.judge(render("object_filter", label=label), [crop_image], "object_filter")
        expected = OBJECT_ACCEPT
    else:
        raise ValueError(f"kind must be 'human' or 'object', got {kind!r}")
    failed = verdict.failed_keys(expected)
    return FilterVerdict.reject(failed[0]) if failed else FilterVerdict.ok()


# stage ----------------------------------------------------------------------


class SubjectMiner(RecordStage):
    """Stage (ii), mining half: consensus, grounding, rule filters, VLM gate.

    Frames survive only if every kept detection passes the VLM gate.
    """

    stage_name = "mine"
    consumes = "curated"
    produces = "mined"

    def __init__(self, gateway: ModelGateway | None = None, consensus_mode="majority", area_floor=0.05,
                 det_floor_object=0.5, det_floor_person=0.8, single_rules: SingleRules = SingleRules(),
                 three_rules: ThreeRules = ThreeRules(), mixed_rules: MixedRules = MixedRules(),
                 human_canvas_policy="resize", vlm_gate_enabled=True, n_jobs=1):
        self.gateway = gateway
        self.consensus_mode = consensus_mode
        self.area_floor = area_floor
        self.det_floor_object = det_floor_object
        self.det_floor_person = det_floor_person
        self.single_rules = single_rules
        self.three_rules = three_rules
        self.mixed_rules = mixed_rules
        self.human_canvas_policy = human_canvas_policy
        self.vlm_gate_enabled = vlm_gate_enabled
        self.n_jobs = n_jobs

    def route(self, dets: list[Detection], canvas: Canvas, human_clip: bool) -> FilterVerdict:
        if not human_clip:
            return filter_mixed(dets, canvas, self.mixed_rules)
        if canvas != HUMAN_CANVAS:
            if self.human_canvas_policy == "skip":
                return FilterVerdict.reject("canvas")
            canvas = HUMAN_CANVAS  # boxes are normalised, so resizing only changes the pixel grid
        if len(dets) == 1:
            return filter_single_person(dets, canvas, self.single_rules)
        if len(dets) == 3:
            return filter_three_person(dets, canvas, self.three_rules)
        if len(dets) == 2:
            return filter_mixed(dets, canvas, self.mixed_rules)
        return FilterVerdict.reject("count")

    def process(self, rec):
        gw = self.gateway
        labels = {i: extract_subjects(gw, rec.frame_path(i)) for i in rec.sampled}
        rec.frame_labels = {str(i): v for i, v in labels.items()}
        agreed = consensus(list(labels.values()), self.consensus_mode)
        if not agreed:
            rec.discard("no_consensus")
            return
        rec.consensus = sorted(agreed)
        human_clip = agreed == {PERSON}
        rec.clip_kind = "human" if human_clip else "mixed"
        floors = {PERSON: self.det_floor_person, "*": self.det_floor_object}
        rec.detections = {}
        rejected = {}
        for i in rec.sampled:
            if not agreed & set(labels[i]):
                rejected[str(i)] = "off_consensus"
                continue
            path = rec.frame_path(i)
            canvas = rec.canvas(i)
            dets = ground(gw, path, agreed, floors, self.area_floor)
            verdict = self.route(dets, canvas, human_clip)
            if not verdict.accepted:
                rejected[str(i)] = verdict.failed_rule
                continue
            if self.vlm_gate_enabled:
                failed = self._vlm_check(path, canvas, verdict.detections)
                if failed:
                    rejected[str(i)] = f"vlm:{failed}"
                    continue
            rec.detections[str(i)] = [d.to_dict() for d in verdict.detections]
        if rejected:
            rec.extra = {**rec.extra, "frame_rejections": rejected}
        if not rec.detections:
            rec.discard("no_valid_frames")

    def _vlm_check(self, path, canvas: Canvas, dets) -> str | None:
        img = load_image(path)
        for d in dets:
            r = box_to_pixels(d.box, canvas)
            crop = img[r.slices]
            v = vlm_gate(self.gateway, crop, "human" if d.label == PERSON else "object", d.label)
            if not v.accepted:
                return v.failed_rule
        return None
