import base64
import io
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest
from PIL import Image

from subject_forge.errors import BackendUnavailable, ConfigError, MalformedResponse, MissingMetadata, ScoreOutOfRange
from subject_forge.gateway import BackendConfig, HttpGateway, MockGateway, extract_score, make_gateway, parse_verdict
from subject_forge.geometry import BinaryMask, PixelRect
from subject_forge.imaging import png_bytes
from subject_forge.synthesis import SynthesisJob

from conftest import det

ART_OK = json.dumps({"Geometry-error": False, "Texture-artifact": False, "Lighting-violation": False,
                     "Background-conflict": False})


@pytest.mark.parametrize("raw,value", [("7", 7.0), ("Score: 8.5/10", 8.5), ("0", 0.0), ("10", 10.0),
                                       ("rating 3 of 10", 3.0)])
def test_extract_score(raw, value):
    assert extract_score(raw) == value


def test_extract_score_bounds_and_garbage():
    with pytest.raises(ScoreOutOfRange):
        extract_score("11")
    with pytest.raises(ScoreOutOfRange):
        extract_score("-1")
    with pytest.raises(MalformedResponse):
        extract_score("excellent")


def test_parse_bool_verdict_is_strict():
    v = parse_verdict(ART_OK, "artifact_check")
    assert v.parsed["Texture-artifact"] is False
    three = {"Geometry-error": False, "Texture-artifact": False, "Lighting-violation": False}
    with pytest.raises(MalformedResponse):
        parse_verdict(json.dumps(three), "artifact_check")
    with pytest.raises(MalformedResponse):
        parse_verdict(ART_OK.replace("false", '"no"', 1), "artifact_check")
    fenced = "```json\n" + ART_OK + "\n```"
    assert parse_verdict(fenced, "artifact_check").parsed == v.parsed


def test_parse_objects_caps_at_three():
    assert parse_verdict('{"objects": ["dog", "cat"]}', "object_extraction").parsed == {"objects": ["dog", "cat"]}
    with pytest.raises(MalformedResponse):
        parse_verdict('{"objects": ["a", "b", "c", "d"]}', "object_extraction")


def test_judge_reasks_once_then_gives_up():
    gw = MockGateway(judge_script={"artifact_check": ["garbage", ART_OK]})
    img = np.zeros((4, 4, 3), np.uint8)
    assert gw.judge("p", [img], "artifact_check").parsed["Geometry-error"] is False
    assert gw.calls["judge"] == 2
    gw = MockGateway(judge_script={"artifact_check": ["garbage", "still garbage"]})
    with pytest.raises(MalformedResponse):
        gw.judge("p", [img], "artifact_check")
    assert gw.calls["judge"] == 2


def test_mock_detect_reads_sidecar_and_applies_floors(frame_factory):
    path = frame_factory("f", [det("person", 0.5, 0.5, 0.3, 0.6, 0.75), det("dog", 0.2, 0.2, 0.1, 0.1, 0.6)])
    gw = MockGateway()
    got = gw.detect(path, ["person", "dog"], {"person": 0.8, "*": 0.5})
    assert [d.label for d in got] == ["dog"]
    assert gw.detect(path, ["cat"], {"*": 0.0}) == []


def test_mock_embed_is_unit_and_deterministic(frame_factory):
    path = frame_factory("e", [])
    a, b = MockGateway().embed(path), MockGateway().embed(path)
    assert a.shape == (384,) and np.isclose(np.linalg.norm(a), 1.0) and np.array_equal(a, b)


def test_mock_aesthetic_requires_fixture(frame_factory):
    assert MockGateway().aesthetic(frame_factory("a", [], aesthetic=6.1)) == 6.1
    with pytest.raises(MissingMetadata):
        MockGateway().aesthetic(frame_factory("b", []))


def test_mock_segment_stays_in_box():
    img = np.zeros((50, 80, 3), np.uint8)
    r = PixelRect(10, 5, 40, 30)
    (m,) = MockGateway().segment(img, [r])
    assert m.area > 0 and m.bbox() is not None
    bb = m.bbox()
    assert bb.x1 >= r.x1 and bb.x2 <= r.x2 and bb.y1 >= r.y1 and bb.y2 <= r.y2


def test_mock_paint_touches_only_hole():
    img = np.random.default_rng(0).integers(0, 255, (20, 30, 3), dtype=np.uint8)
    hole = np.zeros((20, 30), bool)
    hole[5:10, 5:10] = True
    out = MockGateway().paint(SynthesisJob(img, BinaryMask(hole), "inpaint", seed=1))
    assert np.array_equal(out[~hole], img[~hole])


def test_backend_config_validation_and_env():
    with pytest.raises(ConfigError):
        BackendConfig(mode="remote")
    with pytest.raises(ConfigError):
        BackendConfig(endpoints={"paint2": "x"})
    cfg = BackendConfig().with_env({"JUDGE_URL": "http://j", "BACKEND_AUTH_TOKEN": "t"})
    assert cfg.endpoints == {"judge": "http://j"} and cfg.auth_token == "t"
    assert isinstance(make_gateway(BackendConfig()), MockGateway)
    with pytest.raises(ConfigError):
        make_gateway(BackendConfig(mode="live"))


# live client against a local server ----------------------------------------


def _b64(img):
    return base64.b64encode(png_bytes(img)).decode()


class _Handler(BaseHTTPRequestHandler):
    fail_first = {}
    seen = []

    def log_message(self, *a):
        pass

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        svc = self.path.strip("/")
        type(self).seen.append((svc, self.headers.get("Authorization")))
        left = self.fail_first.get(svc, 0)
        if left:
            self.fail_first[svc] = left - 1
            self.send_response(503)
            self.end_headers()
            return
        if svc == "detect":
            out = {"detections": [{"label": "Person", "box": [0.5, 0.5, 0.2, 0.4], "conf": 0.95},
                                  {"label": "dog", "box": [0.2, 0.2, 0.1, 0.1], "conf": 0.3}]}
        elif svc == "embed":
            out = {"embedding": [2.0] + [0.0] * 383}
        elif svc == "judge":
            out = {"text": "8"}
        elif svc == "segment":
            img = np.asarray(Image.open(io.BytesIO(base64.b64decode(body["image"]))))
            out = {"masks": [_b64(np.full(img.shape[:2], 255, np.uint8)) for _ in body["rects"]]}
        elif svc == "paint":
            mask = np.asarray(Image.open(io.BytesIO(base64.b64decode(body["mask"]))))
            assert mask.ndim == 2
            img = np.asarray(Image.open(io.BytesIO(base64.b64decode(body["image"])))).copy()
            img[mask == 255] = 9
            out = {"image": _b64(img)}
        elif svc == "aesthetic":
            out = {"score": "oops"}
        else:
            self.send_response(404)
            self.end_headers()
            return
        data = json.dumps(out).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


@pytest.fixture
def server():
    _Handler.fail_first = {}
    _Handler.seen = []
    srv = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    t = threading.Thread(target=srv.serve_forever, daemon=True)
    t.start()
    base = f"http://127.0.0.1:{srv.server_address[1]}"
    yield base
    srv.shutdown()


def _live(base, **kw):
    eps = {s: f"{base}/{s}" for s in ("detect", "segment", "embed", "judge", "paint", "aesthetic")}
    return HttpGateway(BackendConfig(mode="live", endpoints=eps, backoff_base=0.01, auth_token="tok", **kw))


def test_live_detect_normalises_labels_and_floors(server):
    gw = _live(server)
    img = np.zeros((72, 128, 3), np.uint8)
    got = gw.detect(img, ["person", "dog"], {"person": 0.8, "*": 0.5})
    assert [d.label for d in got] == ["person"]
    assert _Handler.seen[-1] == ("detect", "Bearer tok")


def test_live_retries_on_503_then_succeeds(server):
    _Handler.fail_first = {"judge": 2}
    gw = _live(server, max_retries=3)
    assert gw.judge("rate", [np.zeros((4, 4, 3), np.uint8)], "score_bc").parsed == {"BC": 8.0}
    assert [s for s, _ in _Handler.seen].count("judge") == 3


def test_live_gives_up_after_max_retries(server):
    _Handler.fail_first = {"embed": 10}
    with pytest.raises(BackendUnavailable):
        _live(server, max_retries=2).embed(np.zeros((4, 4, 3), np.uint8))
    assert len(_Handler.seen) == 3


def test_live_embed_normalised_and_segment_clipped(server):
    gw = _live(server)
    img = np.zeros((40, 60, 3), np.uint8)
    assert np.isclose(np.linalg.norm(gw.embed(img)), 1.0)
    (m,) = gw.segment(img, [PixelRect(10, 10, 20, 30)])
    assert m.area == 10 * 20  # full-frame answer clipped to the prompt box


def test_live_paint_sends_single_channel_mask(server):
    gw = _live(server)
    img = np.full((20, 30, 3), 200, np.uint8)
    hole = np.zeros((20, 30), bool)
    hole[:5] = True
    out = gw.paint(SynthesisJob(img, BinaryMask(hole), "outpaint", seed=3))
    assert (out[hole] == 9).all() and (out[~hole] == 200).all()


def test_live_bad_payload_is_malformed(server):
    with pytest.raises(MalformedResponse):
        _live(server).aesthetic(np.zeros((4, 4, 3), np.uint8))


def test_live_requires_every_endpoint():
    with pytest.raises(ConfigError):
        HttpGateway(BackendConfig(mode="live", endpoints={"judge": "http://x"}))
