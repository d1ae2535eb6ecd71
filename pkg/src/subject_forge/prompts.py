"""Prompt templates shipped as package data, and the response schema each one demands."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

HUMAN_FILTER_KEYS = ("Occlusion", "Back", "Motion-blur", "Full-face", "Single-person")
OBJECT_FILTER_KEYS = ("category-match", "completeness", "clarity", "Occlusion", "Motion-blur")
ARTIFACT_KEYS = ("Geometry-error", "Texture-artifact", "Lighting-violation", "Background-conflict")

# verdicts that let a crop through the quality gate
HUMAN_ACCEPT = {"Occlusion": False, "Back": False, "Motion-blur": False, "Full-face": True, "Single-person": True}
OBJECT_ACCEPT = {"category-match": True, "completeness": True, "clarity": True, "Occlusion": False, "Motion-blur": False}


@dataclass(frozen=True)
class TemplateSpec:
    id: str
    filename: str
    kind: str  # "bool_keys" | "objects" | "score" | "text"
    keys: tuple[str, ...] = ()
    sentences: tuple[int, int] | None = None


def _caption_specs():
    for task, long_range in (("manipulation", (3, 4)), ("generation", (5, 6))):
        for length in ("short", "long"):
            for style in ("generation", "editing"):
                tid = f"caption_{task}_{length}_{style}"
                rng = (1, 2) if length == "short" else long_range
                yield TemplateSpec(tid, tid + ".txt", "text", sentences=rng)


TEMPLATES: dict[str, TemplateSpec] = {
    t.id: t
    for t in [
        TemplateSpec("object_extraction", "object_extraction.txt", "objects", ("objects",)),
        TemplateSpec("human_filter", "human_filter.txt", "bool_keys", HUMAN_FILTER_KEYS),
        TemplateSpec("object_filter", "object_filter.txt", "bool_keys", OBJECT_FILTER_KEYS),
        TemplateSpec("artifact_check", "artifact_check.txt", "bool_keys", ARTIFACT_KEYS),
        TemplateSpec("score_pa", "score_pa.txt", "score", ("PA",)),
        TemplateSpec("score_if", "score_if.txt", "score", ("IF",)),
        TemplateSpec("score_mf", "score_mf.txt", "score", ("MF",)),
        TemplateSpec("score_bc", "score_bc.txt", "score", ("BC",)),
        *_caption_specs(),
    ]
}


@lru_cache(maxsize=None)
def template_text(template_id: str) -> str:
    spec = TEMPLATES[template_id]
    return resources.files("subject_forge.data.prompts").joinpath(spec.filename).read_text(encoding="utf-8")


# The stored PA figure carries the subject-replacement rubric; this line points the judge at what PA measures.
PA_FOCUS = ("Rating focus for this score: compliance of the output image with the attributes, object counts "
            "and spatial relations stated in the instruction.")

# appended after the stored text when rendering, so the template files stay byte-exact
ADDENDA = {"score_pa": PA_FOCUS}


def render(template_id: str, **slots: str) -> str:
    """Fill ``<name>`` placeholders; unknown slots are an error."""
    text = template_text(template_id)
    for name, value in slots.items():
        token = f"<{name}>"
        if token not in text:
            raise KeyError(f"template {template_id} has no slot {token}")
        text = text.replace(token, value)
    if template_id in ADDENDA:
        text = f"{text.rstrip()}\n{ADDENDA[template_id]}\n"
    return text


def caption_template_id(task: str, style: str, length: str) -> str:
    tid = f"caption_{task}_{length}_{style}"
    if tid not in TEMPLATES:
        raise KeyError(f"no caption template for task={task} style={style} length={length}")
    return tid
