import json

import pytest
from hypothesis import given, settings, strategies as st

from subject_forge.records import ClipRecord, dumps_record, iter_manifest, read_manifest, write_manifest


def test_status_only_moves_forward():
    r = ClipRecord("c1")
    r.advance("curated")
    with pytest.raises(ValueError):
        r.advance("raw")
    r.discard("low_aesthetic")
    assert r.is_discarded and r.discard_reason == "low_aesthetic"
    with pytest.raises(ValueError):
        r.advance("mined")
    with pytest.raises(ValueError):
        ClipRecord("c2").discard("")


def test_unknown_fields_survive_roundtrip(tmp_path):
    line = {"clip_id": "x", "frames": ["f/a.png"], "status": "raw", "vendor_tag": {"k": [1, 2]}}
    p = tmp_path / "m.jsonl"
    p.write_text(json.dumps(line) + "\n")
    rec = read_manifest(p)[0]
    assert rec.extra == {"vendor_tag": {"k": [1, 2]}}
    out = json.loads(dumps_record(rec, tmp_path))
    assert out["vendor_tag"] == {"k": [1, 2]}
    assert out["frames"] == ["f/a.png"]


def test_paths_resolve_against_manifest_dir_and_relativise_on_write(tmp_path):
    src = tmp_path / "in"
    src.mkdir()
    (src / "m.jsonl").write_text(json.dumps({"clip_id": "x", "frames": ["a.png"]}) + "\n")
    rec = read_manifest(src / "m.jsonl")[0]
    assert rec.frame_path(0) == src.resolve() / "a.png"
    write_manifest(tmp_path / "out" / "m.jsonl", [rec])
    d = json.loads((tmp_path / "out" / "m.jsonl").read_text())
    assert d["frames"] == ["../in/a.png"]


def test_malformed_lines_become_parse_error_discards(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text('{"clip_id": "ok"}\nnot json\n{"no_id": 1}\n{"clip_id": "s", "status": "weird"}\n\n')
    recs = list(iter_manifest(p))
    assert [r.is_discarded for r in recs] == [False, True, True, True]
    assert all(r.discard_reason.startswith("parse_error") for r in recs[1:])
    assert len({r.clip_id for r in recs}) == 4


@settings(max_examples=60)
@given(st.lists(st.text(max_size=40), min_size=1, max_size=8))
def test_fuzzed_manifest_never_raises(tmp_path_factory, lines):
    p = tmp_path_factory.mktemp("fz") / "m.jsonl"
    p.write_text("\n".join(l.replace("\n", " ") for l in lines) + "\n", encoding="utf-8")
    recs = read_manifest(p)
    for r in recs:
        assert r.status == "raw" or r.discard_reason.startswith("parse_error")


def test_job_and_sample_paths_are_mapped(tmp_path):
    rec = ClipRecord("x", job={"base_path": str(tmp_path / "j" / "b.png"), "attempt": 1},
                     sample={"input_paths": [str(tmp_path / "s" / "p.png")], "task": "generation"})
    d = rec.to_dict(tmp_path)
    assert d["job"]["base_path"] == "j/b.png"
    assert d["sample"]["input_paths"] == ["s/p.png"]
    assert d["job"]["attempt"] == 1
