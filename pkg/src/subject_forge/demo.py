"""Synthetic clip corpus with mock sidecar fixtures, for smoke runs and tests."""
from __future__ import annotations

import json
from pathlib import Path

import cv2
import numpy as np

from .imaging import save_png
from .records import ClipRecord, write_manifest

_COLORS = {"person": (200, 80, 60), "dog": (90, 160, 60), "cat": (70, 90, 190), "bicycle": (180, 170, 40),
           "car": (40, 40, 40), "bird": (220, 220, 220), "horse": (120, 70, 30)}

_ROTATING = ("cat", "dog", "car", "bird", "horse", "bicycle", "bench", "boat")

# (kind, how many clips) in generation order
DEFAULT_MIX = (
    ("single", 6), ("three", 4), ("mixed", 6),
    ("low_res", 1), ("low_aesthetic", 1), ("short", 1), ("no_consensus", 1),
)


def _boxes_for(kind: str, rng) -> list[tuple[str, list[float], float]]:
    if kind in ("single", "low_res", "low_aesthetic", "short", "no_consensus"):
        w, h = rng.uniform(0.3, 0.4), rng.uniform(0.7, 0.8)
        return [("person", [rng.uniform(0.35, 0.65), 0.5, w, h], round(float(rng.uniform(0.88, 0.98)), 3))]
    if kind == "three":
        h = rng.uniform(0.45, 0.6)
        return [("person", [x, 0.5, 0.2, h], round(float(rng.uniform(0.85, 0.97)), 3)) for x in (0.18, 0.5, 0.82)]
    if kind == "mixed":
        pet = str(rng.choice(["dog", "cat", "bicycle", "horse"]))
        return [("person", [0.28, 0.5, 0.26, 0.7], round(float(rng.uniform(0.85, 0.97)), 3)),
                (pet, [0.72, 0.6, 0.3, 0.45], round(float(rng.uniform(0.6, 0.95)), 3))]
    raise ValueError(kind)


def _render(W: int, H: int, dets, tint, rng) -> np.ndarray:
    ramp = np.linspace(0.0, 1.0, H, dtype=np.float32)[:, None, None]
    img = (np.asarray(tint, np.float32) * (0.6 + 0.4 * ramp)).repeat(W, axis=1).astype(np.uint8)
    for label, (xc, yc, w, h), _ in dets:
        centre = (int(xc * W), int(yc * H))
        axes = (max(int(w * W / 2) - 1, 1), max(int(h * H / 2) - 1, 1))
        cv2.ellipse(img, centre, axes, 0, 0, 360, _COLORS.get(label, (150, 150, 150)), -1)
        # a little texture so frames differ and crops are not flat
        y = int(rng.integers(max(centre[1] - axes[1] // 2, 0), max(centre[1], 1)))
        cv2.line(img, (centre[0] - axes[0] // 2, y), (centre[0] + axes[0] // 2, y), (255, 255, 255), 3)
    return img


def make_demo_corpus(out_dir: str | Path, n_clips: int = 20, seed: int = 0, frames_per_clip: int = 8,
                     mix=DEFAULT_MIX) -> Path:
    """Write frames, per-frame sidecar JSON and a raw manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    frame_dir = out_dir / "frames"
    frame_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    kinds = [k for k, n in mix for _ in range(n)]
    kinds = (kinds * (n_clips // len(kinds) + 1))[:n_clips]
    records = []
    for c, kind in enumerate(kinds):
        clip_id = f"demo{c:03d}"
        W, H = (640, 360) if kind == "low_res" else (1280, 720)
        F = 3 if kind == "short" else frames_per_clip
        aesthetic = 5.0 if kind == "low_aesthetic" else round(float(rng.uniform(6.0, 7.5)), 2)
        base = _boxes_for(kind, rng)
        tint = rng.integers(60, 200, size=3)
        frames = []
        for f in range(F):
            dets = []
            for label, (xc, yc, w, h), conf in base:
                jx, jy = rng.uniform(-0.02, 0.02, size=2)
                dets.append((label, [round(xc + jx, 4), round(yc + jy, 4), w, h], conf))
            if kind == "no_consensus":
                objects = [_ROTATING[f % len(_ROTATING)]]  # no label repeats, so no consensus
            else:
                objects = list(dict.fromkeys(d[0] for d in dets))
            img = _render(W, H, dets, tint, rng)
            name = f"{clip_id}_f{f:02d}"
            save_png(frame_dir / f"{name}.png", img)
            side = {
                "aesthetic": aesthetic,
                "objects": objects,
                "detections": [{"label": l, "box": [round(v, 4) for v in b], "conf": cf} for l, b, cf in dets],
            }
            (frame_dir / f"{name}.json").write_text(json.dumps(side, sort_keys=True), encoding="utf-8")
            frames.append(str((frame_dir / f"{name}.png").resolve()))
        records.append(ClipRecord(clip_id=clip_id, source=f"demo:{kind}", frames=frames, seed=seed))
    manifest = out_dir / "clips.jsonl"
    write_manifest(manifest, records)
    return manifest
