"""Stage (iv): artifact verification with re-synthesis, then short and long captions."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import MalformedResponse
from .gateway import ModelGateway
from .imaging import ImageRef, load_image, save_png
from .prompts import ARTIFACT_KEYS, TEMPLATES, caption_template_id, template_text
from .records import ClipRecord
from .stage import RecordStage, log_event
from .synthesis import ReferenceSynthesizer, SynthesisJob
from .utils.seeding import rng_for

log = logging.getLogger(__name__)

MAX_ATTEMPTS = 3
STYLES = ("generation", "editing")
# a break needs terminal punctuation, whitespace, then something that can open a sentence
_SENTENCE_END = re.compile(r"(?<=[.!?])\s+(?=[\"'(A-Z0-9])")


@dataclass(frozen=True)
class VerifyResult:
    passed: bool
    reasons: tuple[str, ...] = ()


def verify(gateway: ModelGateway, image: ImageRef) -> VerifyResult:
    """Pass iff the judge marks every artifact category false."""
    verdict = gateway.judge(template_text("artifact_check"), [image], "artifact_check")
    failed = tuple(k for k in ARTIFACT_KEYS if verdict.parsed[k])
    return VerifyResult(not failed, failed)


@dataclass
class RetryOutcome:
    job: SynthesisJob | None
    painted: np.ndarray | None
    attempts: int
    seeds: list[int]
    failures: list[tuple[str, ...]]

    @property
    def passed(self) -> bool:
        return self.job is not None


def retry_loop(gateway: ModelGateway, job_for_attempt: Callable[[int], SynthesisJob],
               max_attempts: int = MAX_ATTEMPTS, on_attempt: Callable | None = None) -> RetryOutcome:
    """Paint then verify; a failure rebuilds the job for the next attempt (fresh seed), up to the cap."""
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    seeds, failures = [], []
    for attempt in range(1, max_attempts + 1):
        job = job_for_attempt(attempt)
        painted = gateway.paint(job)
        seeds.append(job.seed)
        result = verify(gateway, painted)
        if on_attempt is not None:
            on_attempt(job, painted, result)
        if result.passed:
            return RetryOutcome(job, painted, attempt, seeds, failures)
        failures.append(result.reasons)
    return RetryOutcome(None, None, max_attempts, seeds, failures)


def count_sentences(text: str) -> int:
    parts = [p for p in _SENTENCE_END.split(text.strip()) if p.strip()]
    return len(parts)


@dataclass(frozen=True)
class CaptionSpec:
    length: str
    style: str
    task: str
    text: str

    def __post_init__(self):
        if self.length not in ("short", "long"):
            raise ValueError(f"bad caption length {self.length!r}")
        if self.style not in STYLES:
            raise ValueError(f"bad caption style {self.style!r}")
        if self.task not in ("generation", "manipulation"):
            raise ValueError(f"bad caption task {self.task!r}")

    @property
    def template_id(self) -> str:
        return caption_template_id(self.task, self.style, self.length)

    @property
    def sentence_range(self) -> tuple[int, int]:
        return TEMPLATES[self.template_id].sentences

    def sentences_ok(self) -> bool:
        lo, hi = self.sentence_range
        return lo <= count_sentences(self.text) <= hi


def caption_prompt(task: str, style: str, length: str, labels) -> str:
    text = template_text(caption_template_id(task, style, length))
    if labels:
        text = f"{text}\nTarget objects: {', '.join(labels)}"
    return text


def caption(gateway: ModelGateway, task: str, inputs, output, labels, rng,
            strict_sentences: bool = True) -> tuple[CaptionSpec, CaptionSpec]:
    """One short and one long caption; each picks its style independently and uniformly.

    Images go to the judge as inputs first, then the output. With
    ``strict_sentences`` a sentence count outside the template's range
    raises; otherwise it is only logged.
    """
    out = []
    for length in ("short", "long"):
        style = STYLES[int(rng.integers(len(STYLES)))]
        tid = caption_template_id(task, style, length)
        verdict = gateway.judge(caption_prompt(task, style, length, labels), [*inputs, output], tid)
        spec = CaptionSpec(length, style, task, verdict.parsed["text"])
        if not spec.sentences_ok():
            msg = f"{tid}: {count_sentences(spec.text)} sentences, expected {spec.sentence_range}"
            if strict_sentences:
                raise MalformedResponse(msg)
            log.warning(msg)
        out.append(spec)
    return out[0], out[1]


# stages ---------------------------------------------------------------------


class SampleVerifier(RecordStage):
    """Paint, verify, and re-synthesize on failure; writes the finished sample's image paths."""

    stage_name = "verify"
    consumes = "synthesized"
    produces = "verified"

    def __init__(self, gateway: ModelGateway | None = None, synthesizer: ReferenceSynthesizer | None = None,
                 max_attempts=MAX_ATTEMPTS, n_jobs=1):
        self.gateway = gateway
        self.synthesizer = synthesizer
        self.max_attempts = max_attempts
        self.n_jobs = n_jobs

    def _synth(self) -> ReferenceSynthesizer:
        return self.synthesizer if self.synthesizer is not None else ReferenceSynthesizer(self.gateway)

    def process(self, rec: ClipRecord) -> None:
        synth = self._synth()

        def job_for_attempt(attempt: int) -> SynthesisJob:
            if attempt == 1 and rec.job.get("sidecar_path"):
                return SynthesisJob.load(rec.resolve(rec.job["sidecar_path"]))
            job = synth.build_job(rec, attempt)
            synth.persist(rec, job)
            return job

        def note(job, painted, result):
            log_event(rec, self.stage_name, "pass" if result.passed else "fail",
                      ",".join(result.reasons) or None, attempt=job.attempt, seed=job.seed)

        outcome = retry_loop(self.gateway, job_for_attempt, self.max_attempts, note)
        rec.verify_attempts = outcome.attempts
        if not outcome.passed:
            rec.extra = {**rec.extra, "verify_failures": [list(f) for f in outcome.failures]}
            rec.discard("verify_failed")
            return
        rec.sample = self._write_sample(rec, outcome.job, outcome.painted, synth)

    def _write_sample(self, rec, job: SynthesisJob, painted: np.ndarray, synth: ReferenceSynthesizer) -> dict:
        out_dir = Path(synth.artifacts_dir).resolve() / "samples"
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = f"{rec.clip_id}_{job.attempt}"
        painted_path = out_dir / f"{stem}.painted.png"
        save_png(painted_path, painted)
        inputs = [str(painted_path)]
        target = rec.frame_path(job.meta["target_frame"])
        labels = list(job.meta["labels"])
        if job.branch == "inpaint":
            frame = load_image(target)
            for k, (x1, y1, x2, y2) in enumerate(job.meta["rects"]):
                ref_path = out_dir / f"{stem}.ref{k}.png"
                save_png(ref_path, np.ascontiguousarray(frame[y1:y2, x1:x2]))
                inputs.append(str(ref_path))
        return {
            "task": "generation" if job.branch == "outpaint" else "manipulation",
            "input_paths": inputs,
            "target_path": str(target),
            "labels": labels,
            "n_subjects": len(labels),
            "attempt": job.attempt,
            "seed": job.seed,
        }


class Captioner(RecordStage):
    stage_name = "caption"
    consumes = "verified"
    produces = "captioned"

    def __init__(self, gateway: ModelGateway | None = None, strict_sentences=True, global_seed=0, n_jobs=1):
        self.gateway = gateway
        self.strict_sentences = strict_sentences
        self.global_seed = global_seed
        self.n_jobs = n_jobs

    def process(self, rec: ClipRecord) -> None:
        s = rec.sample
        rng = rng_for(rec.clip_id, "caption", 1, self.global_seed)
        inputs = [rec.resolve(p) for p in s["input_paths"]]
        short, long_ = caption(self.gateway, s["task"], inputs, rec.resolve(s["target_path"]), s.get("labels", []),
                               rng, self.strict_sentences)
        rec.caption_short = short.text
        rec.caption_long = long_.text
        rec.caption_styles = {"short": short.style, "long": long_.style}
