import pytest
from hypothesis import assume, given, strategies as st

from subject_forge.curation import Curator, quality_gate, sample_frames
from subject_forge.errors import MissingMetadata, TooFewFrames
from subject_forge.gateway import MockGateway
from subject_forge.records import ClipRecord


def rec(h=720, aesthetic=6.0, n=10):
    return ClipRecord("c", frames=[f"f{i}.png" for i in range(n)], frame_sizes=[[1280, h]], aesthetic=aesthetic)


@pytest.mark.parametrize("h,a,expected", [
    (720, 5.8, (True, None)),
    (719, 9.0, (False, "low_resolution")),
    (1080, 5.79, (False, "low_aesthetic")),
])
def test_quality_gate_boundaries(h, a, expected):
    assert quality_gate(rec(h, a)) == expected


def test_quality_gate_needs_metadata():
    with pytest.raises(MissingMetadata):
        quality_gate(rec(aesthetic=None))


@pytest.mark.parametrize("F,expected", [(100, [25, 41, 58, 74]), (8, [2, 3, 4, 5])])
def test_sample_frames_examples(F, expected):
    assert sample_frames(F) == expected


def test_sample_frames_too_short():
    with pytest.raises(TooFewFrames):
        sample_frames(4)
    with pytest.raises(TooFewFrames):
        sample_frames(3)


@given(st.integers(8, 10**6), st.integers(1, 6))
def test_sample_frames_in_window_and_distinct(F, n):
    lo, hi = F // 4, -(-3 * F // 4)
    assume(hi - lo >= n)
    idx = sample_frames(F, n)
    assert len(idx) == n == len(set(idx))
    assert all(lo <= i < hi for i in idx)
    assert idx == sorted(idx)


def test_curator_stage(frame_factory):
    frames = [frame_factory(f"c{i}", [], aesthetic=6.5) for i in range(8)]
    (out,) = Curator(MockGateway()).transform([ClipRecord("c", frames=frames)])
    assert out.status == "curated" and out.sampled == [2, 3, 4, 5]
    assert out.frame_sizes[0] == [1280, 720] and out.aesthetic == 6.5


def test_curator_discards_and_passes_through(frame_factory):
    frames = [frame_factory(f"d{i}", [], aesthetic=5.0) for i in range(8)]
    done = ClipRecord("done", frames=frames, status="mined")
    out = Curator(MockGateway()).transform([ClipRecord("c", frames=frames), done])
    assert out[0].discard_reason == "low_aesthetic"
    assert out[1] is done


def test_curator_missing_fixture_is_a_discard_not_a_crash(frame_factory):
    frames = [frame_factory(f"e{i}", []) for i in range(8)]
    (out,) = Curator(MockGateway()).transform([ClipRecord("c", frames=frames)])
    assert out.discard_reason == "error:MissingMetadata"


def test_gate_is_permutation_invariant():
    recs = [rec(h, a) for h, a in [(720, 6), (700, 7), (1080, 5)]]
    fwd = [quality_gate(r) for r in recs]
    assert [quality_gate(r) for r in reversed(recs)] == fwd[::-1]
