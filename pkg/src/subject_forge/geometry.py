"""Box and mask arithmetic shared by every stage.

Boxes arrive from detectors as normalised centre-format ``(x_c, y_c, w, h)``
and are converted once to integer pixel rectangles (exclusive max corner).
Everything downstream (border tagging, IoU, cropping) works in pixel space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DegenerateBox, DimensionMismatch

BORDERS = ("top", "bottom", "left", "right")
DEFAULT_BORDER_TOL = 15


@dataclass(frozen=True)
class Canvas:
    W: int = 1280
    H: int = 720

    def __post_init__(self):
        if self.W < 1 or self.H < 1:
            raise ValueError(f"canvas must be at least 1x1, got {self.W}x{self.H}")

    @property
    def area(self) -> int:
        return self.W * self.H

    @property
    def shape(self) -> tuple[int, int]:
        """numpy ``(rows, cols)`` order."""
        return (self.H, self.W)


@dataclass(frozen=True)
class NormBox:
    x_c: float
    y_c: float
    w: float
    h: float

    def __post_init__(self):
        if not (0.0 <= self.x_c <= 1.0 and 0.0 <= self.y_c <= 1.0):
            raise ValueError(f"box centre outside [0, 1]: {self}")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise ValueError(f"box size outside (0, 1]: {self}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "NormBox":
        return cls((x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1)

    def as_list(self) -> list[float]:
        return [self.x_c, self.y_c, self.w, self.h]


@dataclass(frozen=True)
class PixelRect:
    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise DegenerateBox(f"empty rectangle: {self}")

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y2 - self.y1

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def slices(self) -> tuple[slice, slice]:
        return (slice(self.y1, self.y2), slice(self.x1, self.x2))

    def within(self, canvas: Canvas) -> bool:
        return self.x1 >= 0 and self.y1 >= 0 and self.x2 <= canvas.W and self.y2 <= canvas.H


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def box_to_pixels(box: NormBox, canvas: Canvas) -> PixelRect:
    """Convert a normalised centre box into a clamped pixel rectangle.

    Corners are rounded half-up and clamped to the canvas. Raises
    :class:`DegenerateBox` when a side collapses to zero pixels.
    """
    W, H = canvas.W, canvas.H
    x1 = _round_half_up((box.x_c - box.w / 2) * W)
    y1 = _round_half_up((box.y_c - box.h / 2) * H)
    x2 = _round_half_up((box.x_c + box.w / 2) * W)
    y2 = _round_half_up((box.y_c + box.h / 2) * H)
    x1, x2 = min(max(x1, 0), W), min(max(x2, 0), W)
    y1, y2 = min(max(y1, 0), H), min(max(y2, 0), H)
    if x1 >= x2 or y1 >= y2:
        raise DegenerateBox(f"{box} collapses to zero size on a {W}x{H} canvas")
    return PixelRect(x1, y1, x2, y2)


def border_tags(rect: PixelRect, canvas: Canvas, tol: float = DEFAULT_BORDER_TOL) -> frozenset[str]:
    """Canvas edges the rectangle lies within ``tol`` pixels of."""
    dist = {
        "top": rect.y1,
        "bottom": canvas.H - rect.y2,
        "left": rect.x1,
        "right": canvas.W - rect.x2,
    }
    return frozenset(b for b, d in dist.items() if d <= tol)


def iou(a: PixelRect, b: PixelRect) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Canvas-sized boolean mask with a cached pixel count."""

    bitmap: np.ndarray

    def __post_init__(self):
        bm = np.asarray(self.bitmap)
        if bm.ndim != 2:
            raise DimensionMismatch(f"mask must be 2-D, got shape {bm.shape}")
        if bm.dtype != np.bool_:
            bm = bm.astype(bool)
        object.__setattr__(self, "bitmap", bm)

    @classmethod
    def empty(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def full(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.ones((height, width), dtype=bool))

    @classmethod
    def from_rect(cls, rect: PixelRect, canvas: Canvas) -> "BinaryMask":
        bm = np.zeros(canvas.shape, dtype=bool)
        bm[rect.slices] = True
        return cls(bm)

    @property
    def width(self) -> int:
        return self.bitmap.shape[1]

    @property
    def height(self) -> int:
        return self.bitmap.shape[0]

    @cached_property
    def area(self) -> int:
        return int(np.count_nonzero(self.bitmap))

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.bitmap.shape == other.bitmap.shape and bool(np.array_equal(self.bitmap, other.bitmap))

    __hash__ = None

    def bbox(self) -> PixelRect | None:
        """Tight bounding rectangle of the set pixels, or None when empty."""
        rows = np.flatnonzero(self.bitmap.any(axis=1))
        if rows.size == 0:
            return None
        cols = np.flatnonzero(self.bitmap.any(axis=0))
        return PixelRect(int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)


def _check_same_dims(a: BinaryMask, b: BinaryMask) -> None:
    if a.bitmap.shape != b.bitmap.shape:
        raise DimensionMismatch(f"mask shapes differ: {a.bitmap.shape} vs {b.bitmap.shape}")


def mask_subtract(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    _check_same_dims(a, b)
    return BinaryMask(a.bitmap & ~b.bitmap)


def mask_union(masks, canvas: Canvas) -> BinaryMask:
    out = np.zeros(canvas.shape, dtype=bool)
    for m in masks:
        if m.bitmap.shape != canvas.shape:
            raise DimensionMismatch(f"mask shape {m.bitmap.shape} does not match canvas {canvas.shape}")
        out |= m.bitmap
    return BinaryMask(out)


def mask_area_fraction(m: BinaryMask, canvas: Canvas) -> float:
    if m.bitmap.shape != canvas.shape:
        raise DimensionMismatch(f"mask shape {m.bitmap.shape} does not match canvas {canvas.shape}")
    return m.area / canvas.area


def write_mask_png(path: str | Path, mask: BinaryMask | np.ndarray) -> None:
    """Write a mask as single-channel 8-bit PNG with values {0, 255}."""
    bm = mask.bitmap if isinstance(mask, BinaryMask) else np.asarray(mask, dtype=bool)
    Image.fromarray(np.where(bm, 255, 0).astype(np.uint8), mode="L").save(path)


def read_mask_png(path: str | Path) -> BinaryMask:
    with Image.open(path) as im:
        if im.mode != "L":
            raise ValueError(f"{path}: expected single-channel 8-bit PNG, got mode {im.mode}")
        arr = np.asarray(im)
    bad = np.setdiff1d(np.unique(arr), [0, 255])
    if bad.size:
        raise ValueError(f"{path}: mask values must be 0 or 255, found {bad[:5].tolist()}")
    return BinaryMask(arr == 255)
