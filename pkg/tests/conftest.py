import json
import zlib
from pathlib import Path

import numpy as np
import pytest

from subject_forge.demo import make_demo_corpus
from subject_forge.gateway import MockGateway
from subject_forge.records import ClipRecord, Detection
from subject_forge.geometry import NormBox


@pytest.fixture(scope="session")
def demo_manifest(tmp_path_factory):
    return make_demo_corpus(tmp_path_factory.mktemp("demo"), n_clips=20, seed=0)


@pytest.fixture
def mock():
    return MockGateway()


def det(label, xc, yc, w, h, conf=0.9):
    return Detection(label, NormBox(xc, yc, w, h), conf)


def write_frame(path: Path, img: np.ndarray, sidecar: dict | None = None) -> str:
    from subject_forge.imaging import save_png

    path.parent.mkdir(parents=True, exist_ok=True)
    save_png(path, img)
    if sidecar is not None:
        path.with_suffix(".json").write_text(json.dumps(sidecar), encoding="utf-8")
    return str(path)


@pytest.fixture
def frame_factory(tmp_path):
    def make(name, dets, W=1280, H=720, value=None, **side):
        rng = np.random.default_rng(zlib.crc32(name.encode()))
        img = rng.integers(0, 256, size=(H, W, 3), dtype=np.uint8) if value is None else np.full((H, W, 3), value, np.uint8)
        sidecar = {"detections": [d.to_dict() for d in dets], **side}
        return write_frame(tmp_path / "frames" / f"{name}.png", img, sidecar)

    return make
