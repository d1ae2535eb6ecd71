"""Reference-image synthesis: out-painting pairs (generation) and in-painting pairs (manipulation).

Hole masks use :class:`BinaryMask` with ``True`` meaning 255 (synthesize)
and ``False`` meaning 0 (preserve), matching the PNG written to disk.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import cv2
import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, NotEnoughInstances, OverlapTooHigh
from .gateway import ModelGateway
from .geometry import BinaryMask, Canvas, PixelRect, box_to_pixels, iou, read_mask_png, write_mask_png
from .imaging import MID_GRAY, load_image, save_png
from .records import ClipRecord, Detection
from .stage import RecordStage
from .utils.seeding import attempt_seed

SMALL_FRACTION = 0.30
TARGET_BAND = (0.30, 0.40)
DOWNSCALE_BAND = (0.6, 0.8)
PLACEMENT_SIGMA = 0.1
PLACEMENT_TRIES = 16
EROSION_DEPTH = (5, 25)
EROSION_FREQ = 15
INPAINT_OVERLAP_MAX = 0.2
INPAINT_SINGLE_TARGET_P = 0.7


@dataclass(frozen=True, eq=False)
class PlacedInstance:
    crop: np.ndarray
    mask: np.ndarray  # bool, crop-sized
    scale: float
    x0: int
    y0: int
    source_id: int
    clamped: bool = False

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.crop.shape[:2] != self.mask.shape:
            raise DimensionMismatch("crop and mask sizes differ")

    @property
    def size(self) -> tuple[int, int]:
        return self.mask.shape[1], self.mask.shape[0]

    def fits(self, canvas: Canvas) -> bool:
        w, h = self.size
        return 0 <= self.x0 <= canvas.W - w and 0 <= self.y0 <= canvas.H - h

    def canvas_mask(self, canvas: Canvas) -> BinaryMask:
        w, h = self.size
        bm = np.zeros(canvas.shape, dtype=bool)
        bm[self.y0:self.y0 + h, self.x0:self.x0 + w] = self.mask
        return BinaryMask(bm)


@dataclass(eq=False)
class SynthesisJob:
    image: np.ndarray
    mask: BinaryMask  # True = 255 = synthesize
    branch: str
    seed: int
    attempt: int = 1
    prompt: str | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.branch not in ("outpaint", "inpaint"):
            raise ValueError(f"branch must be outpaint or inpaint, got {self.branch!r}")
        if self.attempt < 1:
            raise ValueError("attempt counts from 1")
        if self.mask.bitmap.shape != self.image.shape[:2]:
            raise DimensionMismatch(f"mask {self.mask.bitmap.shape} vs image {self.image.shape[:2]}")

    def same_as(self, other: "SynthesisJob") -> bool:
        return (
            self.branch == other.branch and self.seed == other.seed and self.attempt == other.attempt
            and np.array_equal(self.image, other.image) and self.mask == other.mask and self.meta == other.meta
        )

    def save(self, out_dir: str | Path, clip_id: str) -> dict:
        """Write ``{clip_id}_{attempt}.base.png``, ``.mask.png`` and ``.job.json``; return their paths."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = f"{clip_id}_{self.attempt}"
        paths = {
            "base_path": str(out_dir / f"{stem}.base.png"),
            "mask_path": str(out_dir / f"{stem}.mask.png"),
            "sidecar_path": str(out_dir / f"{stem}.job.json"),
        }
        save_png(paths["base_path"], self.image)
        write_mask_png(paths["mask_path"], self.mask)
        sidecar = {"clip_id": clip_id, "attempt": self.attempt, "seed": self.seed, "branch": self.branch,
                   "prompt": self.prompt, "meta": self.meta,
                   "base_path": Path(paths["base_path"]).name, "mask_path": Path(paths["mask_path"]).name}
        Path(paths["sidecar_path"]).write_text(json.dumps(sidecar, sort_keys=True, indent=1), encoding="utf-8")
        return paths

    @classmethod
    def load(cls, sidecar_path: str | Path) -> "SynthesisJob":
        sidecar_path = Path(sidecar_path)
        d = json.loads(sidecar_path.read_text(encoding="utf-8"))
        base = sidecar_path.parent
        return cls(load_image(base / d["base_path"]), read_mask_png(base / d["mask_path"]), d["branch"],
                   int(d["seed"]), int(d["attempt"]), d.get("prompt"), d.get("meta") or {})


# step 1: overlap cleaning ---------------------------------------------------


def clean_overlaps(masks: Sequence[BinaryMask]) -> list[BinaryMask]:
    """Remove from every mask the pixels of all strictly smaller masks.

    Output order follows input order. Equal-area masks do not subtract from
    each other, so their overlap can survive; see :func:`resolve_overlap_ties`.
    """
    if not masks:
        return []
    shape = masks[0].bitmap.shape
    for m in masks:
        if m.bitmap.shape != shape:
            raise DimensionMismatch(f"mask shapes differ: {shape} vs {m.bitmap.shape}")
    areas = [m.area for m in masks]
    out: list[BinaryMask | None] = [None] * len(masks)
    smaller = np.zeros(shape, dtype=bool)
    for area in sorted(set(areas)):
        group = [i for i, a in enumerate(areas) if a == area]
        for i in group:
            out[i] = BinaryMask(masks[i].bitmap & ~smaller)
        for i in group:
            smaller |= masks[i].bitmap
    return out


def resolve_overlap_ties(masks: Sequence[BinaryMask]) -> tuple[list[BinaryMask], bool]:
    """Hand pixels still shared by several masks to the lowest index. Returns ``(masks, changed)``."""
    claimed = None
    out = []
    changed = False
    for m in masks:
        if claimed is None:
            claimed = np.zeros_like(m.bitmap)
        clash = m.bitmap & claimed
        if clash.any():
            changed = True
            m = BinaryMask(m.bitmap & ~claimed)
        claimed |= m.bitmap
        out.append(m)
    return out, changed


# steps 2-3: scale and placement ----------------------------------------------


def scale_factor(area_frac: float, crop_dims: tuple[int, int], canvas: Canvas, rng,
                 small=SMALL_FRACTION, target=TARGET_BAND, downscale=DOWNSCALE_BAND) -> tuple[float, bool]:
    """Scale for one instance, and whether the fit-canvas clamp bit.

    Small instances (``area_frac < small``) are grown so the foreground covers
    a uniform ``t`` in ``target`` of the canvas; larger ones shrink by a
    uniform factor in ``downscale``. Aspect ratio is always kept.
    """
    if not 0.0 < area_frac <= 1.0:
        raise ValueError(f"area fraction must lie in (0, 1], got {area_frac}")
    if area_frac < small:
        t = rng.uniform(*target)
        s = math.sqrt(t / area_frac)
    else:
        s = rng.uniform(*downscale)
    w, h = crop_dims
    cap = min(canvas.W / w, canvas.H / h)
    return (cap, True) if s > cap else (s, False)


def place(scaled_dims: tuple[int, int], canvas: Canvas, rng, sigma_frac=PLACEMENT_SIGMA,
          max_tries=PLACEMENT_TRIES) -> tuple[int, int]:
    """Top-left corner drawn from a Gaussian centred on the canvas middle, rejection-sampled to fit."""
    sw, sh = scaled_dims
    if sw > canvas.W or sh > canvas.H:
        raise ValueError(f"{sw}x{sh} does not fit a {canvas.W}x{canvas.H} canvas")
    max_x, max_y = canvas.W - sw, canvas.H - sh
    mu_x, mu_y = max_x / 2, max_y / 2
    for _ in range(max_tries):
        x0 = int(math.floor(rng.normal(mu_x, sigma_frac * canvas.W) + 0.5))
        y0 = int(math.floor(rng.normal(mu_y, sigma_frac * canvas.H) + 0.5))
        if 0 <= x0 <= max_x and 0 <= y0 <= max_y:
            return x0, y0
    return min(max(x0, 0), max_x), min(max(y0, 0), max_y)


def resize_instance(crop: np.ndarray, mask: np.ndarray, s: float, canvas: Canvas) -> tuple[np.ndarray, np.ndarray]:
    h, w = mask.shape
    sw = min(max(int(math.floor(w * s + 0.5)), 1), canvas.W)
    sh = min(max(int(math.floor(h * s + 0.5)), 1), canvas.H)
    if (sw, sh) == (w, h):
        return crop, mask
    interp = cv2.INTER_AREA if s < 1 else cv2.INTER_LINEAR
    crop = cv2.resize(crop, (sw, sh), interpolation=interp)
    mask = cv2.resize(mask.astype(np.uint8), (sw, sh), interpolation=cv2.INTER_NEAREST).astype(bool)
    return crop, mask


# step 4: hole mask and erosion ------------------------------------------------


def build_hole_mask(placements: Sequence[PlacedInstance], canvas: Canvas) -> BinaryMask:
    hole = np.ones(canvas.shape, dtype=bool)
    for p in placements:
        w, h = p.size
        hole[p.y0:p.y0 + h, p.x0:p.x0 + w] &= ~p.mask
    return BinaryMask(hole)


def compose_base(placements: Sequence[PlacedInstance], canvas: Canvas) -> np.ndarray:
    img = np.full((canvas.H, canvas.W, 3), MID_GRAY, dtype=np.uint8)
    for p in placements:
        w, h = p.size
        view = img[p.y0:p.y0 + h, p.x0:p.x0 + w]
        cv2.copyTo(np.ascontiguousarray(p.crop), p.mask.view(np.uint8), view)  # writes into the view
    return img


def _dilate4(m: np.ndarray) -> np.ndarray:
    out = m.copy()
    out[1:] |= m[:-1]
    out[:-1] |= m[1:]
    out[:, 1:] |= m[:, :-1]
    out[:, :-1] |= m[:, 1:]
    return out


def tear_border_erode(mask: BinaryMask, rng, depth_range=EROSION_DEPTH, freq=EROSION_FREQ) -> BinaryMask:
    """Cut triangular notches into the preserved region along its border with the hole.

    A notch centre falls every ``freq`` pixels of boundary arc length; each
    notch is a triangle with base ``freq`` on the boundary and apex
    ``depth ~ U(depth_range)`` pixels inward. Only preserved pixels flip to
    hole, and never further than ``depth_range[1]`` (Chebyshev) from the
    original boundary.
    """
    hole = mask.bitmap
    keep = ~hole
    if not keep.any() or not hole.any():
        return mask
    H, W = hole.shape
    # restrict work to the preserved bounding box plus the notch reach
    rows, cols = np.flatnonzero(keep.any(axis=1)), np.flatnonzero(keep.any(axis=0))
    pad = int(depth_range[1]) + 2
    y_lo, y_hi = max(rows[0] - pad, 0), min(rows[-1] + pad + 1, H)
    x_lo, x_hi = max(cols[0] - pad, 0), min(cols[-1] + pad + 1, W)
    keep_w = keep[y_lo:y_hi, x_lo:x_hi]
    hole_w = hole[y_lo:y_hi, x_lo:x_hi]
    touches_hole = keep_w & _dilate4(hole_w)

    keep_u8 = keep_w.astype(np.uint8)
    contours, _ = cv2.findContours(keep_u8, cv2.RETR_LIST, cv2.CHAIN_APPROX_NONE)
    notch = np.zeros(keep_w.shape, dtype=np.uint8)
    hw, ww = keep_w.shape
    half = freq / 2
    for cnt in contours:
        pts = cnt[:, 0, :].astype(np.float64)  # (x, y)
        n = len(pts)
        if n == 0:
            continue
        steps = np.linalg.norm(np.diff(pts, axis=0, append=pts[:1]), axis=1)
        arc = np.concatenate([[0.0], np.cumsum(steps)[:-1]])
        total = float(steps.sum()) or 1.0
        start = rng.uniform(0, freq)
        centres = np.arange(start, max(total, start + 1e-9), freq)
        for c in centres:
            i = int(np.searchsorted(arc, c, side="right") - 1) % n
            px, py = int(pts[i, 0]), int(pts[i, 1])
            if not touches_hole[py, px]:
                continue
            depth = rng.uniform(*depth_range)
            ia = int(np.searchsorted(arc, (c - half) % total, side="right") - 1) % n
            ib = int(np.searchsorted(arc, (c + half) % total, side="right") - 1) % n
            a, b = pts[ia], pts[ib]
            t = b - a
            norm = math.hypot(t[0], t[1])
            if norm < 1e-9:
                normal = _inward_guess(keep_w, px, py)
            else:
                normal = np.array([-t[1], t[0]]) / norm
                if not _points_inward(keep_w, px, py, normal):
                    normal = -normal
            apex = np.array([px, py]) + depth * normal
            tri = np.round(np.array([a, b, apex])).astype(np.int32)
            cv2.fillPoly(notch, [tri], 1)
            notch[py, px] = 1
    if not notch.any():
        return mask
    # chessboard distance to the hole <= r  <=>  a hole pixel inside the (2r+1)^2 square
    r = int(depth_range[1])
    near_hole = ndimage.maximum_filter(hole_w.view(np.uint8), size=2 * r + 1, mode="constant", cval=0)
    flip = notch.astype(bool) & keep_w & near_hole.astype(bool)
    out = hole.copy()
    out[y_lo:y_hi, x_lo:x_hi] |= flip
    return BinaryMask(out)


def _points_inward(keep: np.ndarray, px: int, py: int, normal: np.ndarray) -> bool:
    score = 0
    for d in (2.0, 4.0):
        x, y = int(round(px + d * normal[0])), int(round(py + d * normal[1]))
        if 0 <= y < keep.shape[0] and 0 <= x < keep.shape[1] and keep[y, x]:
            score += 1
        x, y = int(round(px - d * normal[0])), int(round(py - d * normal[1]))
        if 0 <= y < keep.shape[0] and 0 <= x < keep.shape[1] and keep[y, x]:
            score -= 1
    return score >= 0


def _inward_guess(keep: np.ndarray, px: int, py: int) -> np.ndarray:
    y0, y1 = max(py - 3, 0), min(py + 4, keep.shape[0])
    x0, x1 = max(px - 3, 0), min(px + 4, keep.shape[1])
    ys, xs = np.nonzero(keep[y0:y1, x0:x1])
    v = np.array([xs.mean() + x0 - px, ys.mean() + y0 - py]) if len(xs) else np.zeros(2)
    n = np.linalg.norm(v)
    return v / n if n > 1e-9 else np.array([0.0, 1.0])


# job builders ---------------------------------------------------------------


@dataclass(frozen=True)
class OutpaintParams:
    canvas: Canvas = Canvas(1280, 720)
    small_fraction: float = SMALL_FRACTION
    target_band: tuple[float, float] = TARGET_BAND
    downscale_band: tuple[float, float] = DOWNSCALE_BAND
    sigma_frac: float = PLACEMENT_SIGMA
    placement_tries: int = PLACEMENT_TRIES
    erode: bool = True
    erosion_depth: tuple[float, float] = EROSION_DEPTH
    erosion_freq: float = EROSION_FREQ


def make_outpaint_job(image: np.ndarray, dets: Sequence[Detection], masks: Sequence[BinaryMask], rng,
                      seed: int, attempt: int = 1, params: OutpaintParams = OutpaintParams()) -> SynthesisJob:
    """Steps 1-4 for one source frame: clean, scale, place, build and erode the hole mask."""
    if len(dets) != len(masks):
        raise ValueError(f"{len(dets)} detections but {len(masks)} masks")
    src = Canvas(image.shape[1], image.shape[0])
    canvas = params.canvas
    cleaned = clean_overlaps(masks)
    cleaned, tie = resolve_overlap_ties(cleaned)
    order = sorted((i for i, m in enumerate(cleaned) if m.area > 0), key=lambda i: (-cleaned[i].area, i))
    if not order:
        raise NotEnoughInstances("no instance has foreground pixels left")
    placements = []
    for i in order:
        r = box_to_pixels(dets[i].box, src)
        m = cleaned[i].bitmap[r.slices]
        if not m.any():
            continue
        crop = image[r.slices]
        area_frac = min(int(m.sum()) / canvas.area, 1.0)
        s, clamped = scale_factor(area_frac, (r.width, r.height), canvas, rng,
                                  params.small_fraction, params.target_band, params.downscale_band)
        crop_s, m_s = resize_instance(crop, m, s, canvas)
        x0, y0 = place((m_s.shape[1], m_s.shape[0]), canvas, rng, params.sigma_frac, params.placement_tries)
        placements.append(PlacedInstance(crop_s, m_s, s, x0, y0, i, clamped))
    if not placements:
        raise NotEnoughInstances("no instance has foreground pixels inside its box")
    hole = build_hole_mask(placements, canvas)
    placed_fraction = 1.0 - hole.area / canvas.area
    if params.erode:
        hole = tear_border_erode(hole, rng, params.erosion_depth, params.erosion_freq)
    meta = {
        "instances": [p.source_id for p in placements],
        "labels": [dets[p.source_id].label for p in placements],
        "scales": [round(p.scale, 6) for p in placements],
        "clamped": [p.clamped for p in placements],
        "offsets": [[p.x0, p.y0] for p in placements],
        "placed_fraction": round(placed_fraction, 6),
        "preserved_fraction": round(1.0 - hole.area / canvas.area, 6),
        "overlap_tie": tie,
    }
    return SynthesisJob(compose_base(placements, canvas), hole, "outpaint", seed, attempt, meta=meta)


def inpaint_eligible(dets: Sequence[Detection], canvas: Canvas, overlap_max=INPAINT_OVERLAP_MAX) -> bool:
    if len(dets) < 2:
        return False
    rects = [box_to_pixels(d.box, canvas) for d in dets]
    return all(iou(rects[i], rects[j]) <= overlap_max for i in range(len(rects)) for j in range(i + 1, len(rects)))


def make_inpaint_job(image: np.ndarray, dets: Sequence[Detection], rng, seed: int, attempt: int = 1,
                     overlap_max=INPAINT_OVERLAP_MAX, single_target_p=INPAINT_SINGLE_TARGET_P) -> SynthesisJob:
    """Erase one or more target boxes from a multi-object frame."""
    canvas = Canvas(image.shape[1], image.shape[0])
    if len(dets) < 2:
        raise NotEnoughInstances(f"in-painting needs at least two instances, got {len(dets)}")
    if not inpaint_eligible(dets, canvas, overlap_max):
        raise OverlapTooHigh(f"some instance pair overlaps above IoU {overlap_max}")
    k = 1 if rng.random() < single_target_p else 2
    k = min(k, len(dets) - 1)
    targets = sorted(int(t) for t in rng.choice(len(dets), size=k, replace=False))
    hole = np.zeros(canvas.shape, dtype=bool)
    rects: list[PixelRect] = []
    for t in targets:
        r = box_to_pixels(dets[t].box, canvas)
        rects.append(r)
        hole[r.slices] = True
    meta = {
        "instances": targets,
        "labels": [dets[t].label for t in targets],
        "rects": [[r.x1, r.y1, r.x2, r.y2] for r in rects],
        "hole_fraction": round(float(hole.mean()), 6),
    }
    return SynthesisJob(image.copy(), BinaryMask(hole), "inpaint", seed, attempt, meta=meta)


def make_outpaint_record(rec: ClipRecord, pair: Sequence[int], masks: Sequence[BinaryMask], rng,
                         attempt: int = 1, global_seed: int = 0, params: OutpaintParams = OutpaintParams()) -> SynthesisJob:
    src, tgt = pair
    job = make_outpaint_job(load_image(rec.frame_path(src)), rec.frame_detections(src), masks, rng,
                            attempt_seed(rec.clip_id, "synth", attempt, global_seed), attempt, params)
    job.meta.update(source_frame=int(src), target_frame=int(tgt))
    return job


def make_inpaint_record(rec: ClipRecord, rng, frame: int | None = None, attempt: int = 1, global_seed: int = 0,
                        overlap_max=INPAINT_OVERLAP_MAX, single_target_p=INPAINT_SINGLE_TARGET_P) -> SynthesisJob:
    frame = rec.pair[1] if frame is None else frame
    job = make_inpaint_job(load_image(rec.frame_path(frame)), rec.frame_detections(frame), rng,
                           attempt_seed(rec.clip_id, "synth", attempt, global_seed), attempt,
                           overlap_max, single_target_p)
    job.meta.update(source_frame=int(frame), target_frame=int(frame))
    return job


# stage ----------------------------------------------------------------------


class ReferenceSynthesizer(RecordStage):
    """Stage (iii): choose a branch, segment if needed, build and persist attempt 1."""

    stage_name = "synth"
    consumes = "paired"
    produces = "synthesized"

    def __init__(self, gateway: ModelGateway | None = None, artifacts_dir="artifacts",
                 params: OutpaintParams = OutpaintParams(), generation_fraction=2 / 3,
                 inpaint_overlap_max=INPAINT_OVERLAP_MAX, single_target_p=INPAINT_SINGLE_TARGET_P,
                 global_seed=0, n_jobs=1):
        self.gateway = gateway
        self.artifacts_dir = artifacts_dir
        self.params = params
        self.generation_fraction = generation_fraction
        self.inpaint_overlap_max = inpaint_overlap_max
        self.single_target_p = single_target_p
        self.global_seed = global_seed
        self.n_jobs = n_jobs

    def choose_branch(self, rec: ClipRecord) -> str:
        tgt = rec.pair[1]
        eligible = inpaint_eligible(rec.frame_detections(tgt), rec.canvas(tgt), self.inpaint_overlap_max)
        draw = np.random.default_rng(attempt_seed(rec.clip_id, "branch", 1, self.global_seed)).random()
        return "inpaint" if eligible and draw >= self.generation_fraction else "outpaint"

    def instance_masks(self, rec: ClipRecord, frame: int) -> list[BinaryMask]:
        key = str(frame)
        if key in rec.masks:
            return [read_mask_png(rec.resolve(p)) for p in rec.masks[key]]
        canvas = rec.canvas(frame)
        rects = [box_to_pixels(d.box, canvas) for d in rec.frame_detections(frame)]
        masks = self.gateway.segment(rec.frame_path(frame), rects)
        out_dir = Path(self.artifacts_dir).resolve() / "masks"
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for k, m in enumerate(masks):
            p = out_dir / f"{rec.clip_id}_f{frame}_i{k}.png"
            write_mask_png(p, m)
            paths.append(str(p))
        rec.masks[key] = paths
        return masks

    def build_job(self, rec: ClipRecord, attempt: int) -> SynthesisJob:
        rng = np.random.default_rng(attempt_seed(rec.clip_id, "synth", attempt, self.global_seed))
        if rec.branch == "inpaint":
            return make_inpaint_record(rec, rng, attempt=attempt, global_seed=self.global_seed,
                                       overlap_max=self.inpaint_overlap_max, single_target_p=self.single_target_p)
        masks = self.instance_masks(rec, rec.pair[0])
        return make_outpaint_record(rec, rec.pair, masks, rng, attempt, self.global_seed, self.params)

    def persist(self, rec: ClipRecord, job: SynthesisJob) -> None:
        paths = job.save(Path(self.artifacts_dir).resolve() / "jobs", rec.clip_id)
        rec.job = {**paths, "attempt": job.attempt, "seed": job.seed, "branch": job.branch, "meta": job.meta}

    def process(self, rec):
        rec.branch = self.choose_branch(rec)
        try:
            job = self.build_job(rec, 1)
        except NotEnoughInstances as err:
            rec.discard("overlap_too_high" if isinstance(err, OverlapTooHigh) else "no_instances")
            return
        self.persist(rec, job)
