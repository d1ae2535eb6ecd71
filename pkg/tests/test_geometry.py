import numpy as np
import pytest
from hypothesis import given, strategies as st

from subject_forge.errors import DegenerateBox, DimensionMismatch
from subject_forge.geometry import (
    BinaryMask, Canvas, NormBox, PixelRect, border_tags, box_to_pixels, iou, mask_subtract, mask_union,
    read_mask_png, write_mask_png,
)

C = Canvas(1280, 720)


def test_box_to_pixels_rounds_half_up_and_clamps():
    assert box_to_pixels(NormBox(0.5, 0.5, 1.0, 1.0), C) == PixelRect(0, 0, 1280, 720)
    # 0.25*1280 = 320 exactly; 0.00039*1280 = 0.4992 rounds down
    r = box_to_pixels(NormBox(0.375, 0.5, 0.25, 0.5), C)
    assert (r.x1, r.x2, r.y1, r.y2) == (320, 640, 180, 540)


def test_box_touching_edge_clamps():
    r = box_to_pixels(NormBox(0.0, 0.0, 0.2, 0.2), C)
    assert (r.x1, r.y1) == (0, 0) and r.x2 == 128 and r.y2 == 72


def test_degenerate_box_raises():
    with pytest.raises(DegenerateBox):
        box_to_pixels(NormBox(0.5, 0.5, 0.0001, 0.5), C)
    with pytest.raises(DegenerateBox):
        PixelRect(3, 3, 3, 9)


def test_normbox_validates():
    with pytest.raises(ValueError):
        NormBox(1.2, 0.5, 0.1, 0.1)
    with pytest.raises(ValueError):
        NormBox(0.5, 0.5, 0.0, 0.1)


@pytest.mark.parametrize("rect,tol,expected", [
    (PixelRect(15, 100, 200, 300), 15, {"left"}),
    (PixelRect(16, 100, 200, 300), 15, set()),
    (PixelRect(100, 0, 200, 705), 15, {"top", "bottom"}),
    (PixelRect(100, 0, 200, 704), 15, {"top"}),
    (PixelRect(0, 0, 1280, 720), 0, {"top", "bottom", "left", "right"}),
])
def test_border_tags(rect, tol, expected):
    assert border_tags(rect, C, tol) == frozenset(expected)


def test_iou_known_values():
    a = PixelRect(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, PixelRect(10, 0, 20, 10)) == 0.0
    assert iou(a, PixelRect(5, 0, 15, 10)) == pytest.approx(50 / 150)


rects = st.tuples(st.integers(0, 50), st.integers(0, 50), st.integers(1, 50), st.integers(1, 50)).map(
    lambda t: PixelRect(t[0], t[1], t[0] + t[2], t[1] + t[3]))


@given(rects, rects)
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == iou(b, a)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 1), st.floats(0.01, 1))
def test_box_to_pixels_stays_inside(xc, yc, w, h):
    try:
        r = box_to_pixels(NormBox(xc, yc, w, h), C)
    except DegenerateBox:
        return
    assert r.within(C)


def test_mask_area_cached_and_equality():
    bm = np.zeros((4, 5), bool)
    bm[1:3, 1:4] = True
    m = BinaryMask(bm)
    assert m.area == 6
    assert m == BinaryMask(bm.copy())
    assert m != BinaryMask(np.zeros((4, 5), bool))
    assert m.bbox() == PixelRect(1, 1, 4, 3)
    assert BinaryMask.empty(5, 4).bbox() is None


def test_mask_ops_check_dims():
    with pytest.raises(DimensionMismatch):
        mask_subtract(BinaryMask.empty(3, 3), BinaryMask.empty(4, 3))
    with pytest.raises(DimensionMismatch):
        BinaryMask(np.zeros((2, 2, 2)))
    u = mask_union([BinaryMask.from_rect(PixelRect(0, 0, 2, 2), Canvas(4, 4)),
                    BinaryMask.from_rect(PixelRect(1, 1, 3, 3), Canvas(4, 4))], Canvas(4, 4))
    assert u.area == 7


def test_mask_png_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    m = BinaryMask(rng.random((30, 40)) > 0.5)
    write_mask_png(tmp_path / "m.png", m)
    assert read_mask_png(tmp_path / "m.png") == m


def test_mask_png_rejects_grey_values(tmp_path):
    from PIL import Image

    Image.fromarray(np.full((4, 4), 128, np.uint8), mode="L").save(tmp_path / "bad.png")
    with pytest.raises(ValueError):
        read_mask_png(tmp_path / "bad.png")
