import json

import numpy as np
import pytest

from conftest import det
from subject_forge.errors import MalformedResponse
from subject_forge.gateway import BackendConfig, MockGateway
from subject_forge.geometry import BinaryMask
from subject_forge.prompts import ARTIFACT_KEYS, TEMPLATES
from subject_forge.records import ClipRecord
from subject_forge.synthesis import ReferenceSynthesizer, SynthesisJob
from subject_forge.verify_caption import (
    Captioner, CaptionSpec, SampleVerifier, caption, count_sentences, retry_loop, verify,
)

PASS = json.dumps(dict.fromkeys(ARTIFACT_KEYS, False))
FAIL = json.dumps({**dict.fromkeys(ARTIFACT_KEYS, False), ARTIFACT_KEYS[0]: True})
IMG = np.zeros((8, 8, 3), np.uint8)


def jobs_by_attempt(attempt):
    return SynthesisJob(IMG, BinaryMask.full(8, 8), "outpaint", seed=100 + attempt, attempt=attempt)


def test_verify_pass_fail_malformed():
    assert verify(MockGateway(judge_script={"artifact_check": [PASS]}), IMG).passed
    r = verify(MockGateway(judge_script={"artifact_check": [FAIL]}), IMG)
    assert not r.passed and r.reasons == (ARTIFACT_KEYS[0],)
    with pytest.raises(MalformedResponse):
        verify(MockGateway(judge_script={"artifact_check": ["not json"]}), IMG)


def test_retry_first_pass_single_paint():
    gw = MockGateway(judge_script={"artifact_check": [PASS]})
    out = retry_loop(gw, jobs_by_attempt)
    assert out.passed and out.attempts == 1 and gw.calls["paint"] == 1


def test_retry_fail_fail_pass():
    gw = MockGateway(judge_script={"artifact_check": [FAIL, FAIL, PASS]})
    out = retry_loop(gw, jobs_by_attempt)
    assert out.passed and out.attempts == 3 and gw.calls["paint"] == 3
    assert len(set(out.seeds)) == 3 and len(out.failures) == 2


def test_retry_exhausted():
    gw = MockGateway(judge_script={"artifact_check": [FAIL]})
    out = retry_loop(gw, jobs_by_attempt, max_attempts=3)
    assert not out.passed and out.attempts == 3 and gw.calls["paint"] == 3
    with pytest.raises(ValueError):
        retry_loop(gw, jobs_by_attempt, max_attempts=0)


@pytest.mark.parametrize("text,n", [("One.", 1), ("One. Two! Three?", 3), ("  ", 0), ("No stop", 1),
                                    ("A.B. then more.", 1), ("First.  Second.\nThird.", 3)])
def test_count_sentences(text, n):
    assert count_sentences(text) == n


def test_caption_fields_validated():
    with pytest.raises(ValueError):
        CaptionSpec("medium", "generation", "generation", "x")
    with pytest.raises(ValueError):
        CaptionSpec("short", "poetry", "generation", "x")
    spec = CaptionSpec("long", "editing", "manipulation", "A. B. C.")
    assert spec.template_id in TEMPLATES and spec.sentence_range[0] >= 1


def test_caption_deterministic_and_in_range(frame_factory):
    frame = frame_factory("cap", [det("dog", 0.5, 0.5, 0.3, 0.3)])
    a = caption(MockGateway(), "generation", [frame], frame, ["dog"], np.random.default_rng(2))
    b = caption(MockGateway(), "generation", [frame], frame, ["dog"], np.random.default_rng(2))
    assert a == b
    for spec in a:
        assert spec.sentences_ok()
    assert a[0].length == "short" and a[1].length == "long"


def test_caption_strict_rejects_wrong_count(frame_factory):
    frame = frame_factory("cap2", [])
    script = {tid: ["One. Two. Three. Four. Five. Six. Seven. Eight. Nine. Ten. Eleven. Twelve."]
              for tid in TEMPLATES if tid.startswith("caption_") and "_short_" in tid}
    with pytest.raises(MalformedResponse):
        caption(MockGateway(judge_script=script), "generation", [frame], frame, [], np.random.default_rng(0))
    short, _ = caption(MockGateway(judge_script=script), "generation", [frame], frame, [],
                       np.random.default_rng(0), strict_sentences=False)
    assert not short.sentences_ok()


def paired_record(frame_factory, name):
    ds = [det("person", 0.3, 0.5, 0.3, 0.7, 0.95)]
    frames = [frame_factory(f"{name}{i}", ds) for i in range(2)]
    return ClipRecord(name, frames=frames, frame_sizes=[[1280, 720]], status="paired", pair=[0, 1],
                      detections={"0": [d.to_dict() for d in ds], "1": [d.to_dict() for d in ds]})


def run_stages(gw, rec, art):
    synth = ReferenceSynthesizer(gw, artifacts_dir=art, global_seed=0)
    (rec,) = synth.transform([rec])
    (rec,) = SampleVerifier(gw, synth).transform([rec])
    return rec


def test_verifier_retries_then_samples(frame_factory, tmp_path):
    gw = MockGateway(judge_script={"artifact_check": [FAIL, PASS]})
    rec = run_stages(gw, paired_record(frame_factory, "v"), tmp_path / "art")
    assert rec.status == "verified" and rec.verify_attempts == 2
    assert rec.sample["attempt"] == 2 and rec.sample["task"] == "generation"
    assert all(p for p in rec.sample["input_paths"]) and (tmp_path / "art" / "jobs" / "v_2.job.json").exists()
    (cap,) = Captioner(gw).transform([rec])
    assert cap.status == "captioned" and cap.caption_short and cap.caption_long
    assert set(cap.caption_styles) == {"short", "long"}


def test_verifier_discards_after_cap(frame_factory, tmp_path):
    gw = MockGateway(judge_script={"artifact_check": [FAIL]})
    rec = run_stages(gw, paired_record(frame_factory, "w"), tmp_path / "art")
    assert rec.is_discarded and rec.discard_reason == "verify_failed"
    assert rec.verify_attempts == 3 and len(rec.extra["verify_failures"]) == 3
    assert gw.calls["paint"] == 3


def test_mock_fail_rate_zero_always_passes(frame_factory, tmp_path):
    gw = MockGateway(BackendConfig(artifact_fail_rate=0.0))
    rec = run_stages(gw, paired_record(frame_factory, "z"), tmp_path / "art")
    assert rec.status == "verified" and rec.verify_attempts == 1
