"""Small image I/O helpers. Images are ``HxWx3`` uint8 RGB arrays."""
from __future__ import annotations

import base64
import hashlib
import io
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

ImageRef = Union[str, Path, np.ndarray]

MID_GRAY = 127


def load_image(ref: ImageRef) -> np.ndarray:
    if isinstance(ref, np.ndarray):
        arr = ref
    else:
        with Image.open(ref) as im:
            arr = np.asarray(im.convert("RGB"))
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise ValueError(f"expected HxWx3 uint8 image, got {arr.shape} {arr.dtype}")
    return arr


def image_size(ref: ImageRef) -> tuple[int, int]:
    """``(W, H)`` without decoding pixels when given a path."""
    if isinstance(ref, np.ndarray):
        return ref.shape[1], ref.shape[0]
    with Image.open(ref) as im:
        return im.size


def save_png(path: str | Path, img: np.ndarray) -> None:
    Image.fromarray(img).save(path, format="PNG")


def png_bytes(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="PNG")
    return buf.getvalue()


def to_b64png(ref: ImageRef) -> str:
    if isinstance(ref, np.ndarray):
        data = png_bytes(ref)
    else:
        data = Path(ref).read_bytes()
    return base64.b64encode(data).decode("ascii")


def from_b64png(s: str) -> np.ndarray:
    with Image.open(io.BytesIO(base64.b64decode(s))) as im:
        return np.asarray(im.convert("RGB")).copy()


def image_digest(ref: ImageRef) -> bytes:
    """Content hash: file bytes for paths, shape plus buffer for arrays."""
    h = hashlib.blake2b(digest_size=16)
    if isinstance(ref, np.ndarray):
        h.update(repr(ref.shape).encode())
        h.update(np.ascontiguousarray(ref).tobytes())
    else:
        h.update(Path(ref).read_bytes())
    return h.digest()
