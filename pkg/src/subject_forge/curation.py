"""Clip quality gating and mid-clip frame sampling."""
from __future__ import annotations

from .errors import MissingMetadata, TooFewFrames
from .gateway import ModelGateway
from .imaging import image_size
from .records import ClipRecord
from .stage import RecordStage

MIN_HEIGHT = 720
AESTHETIC_MIN = 5.8
FRAMES_PER_CLIP = 4


def quality_gate(rec: ClipRecord, min_height: int = MIN_HEIGHT, aesthetic_min: float = AESTHETIC_MIN) -> tuple[bool, str | None]:
    """``(True, None)`` to keep, ``(False, reason)`` to discard.

    Both thresholds are inclusive: only clips strictly below them are dropped.
    """
    if rec.aesthetic is None:
        raise MissingMetadata(f"{rec.clip_id}: aesthetic score missing")
    if not rec.frame_sizes:
        raise MissingMetadata(f"{rec.clip_id}: frame dimensions missing")
    if min(int(h) for _, h in rec.frame_sizes) < min_height:
        return False, "low_resolution"
    if float(rec.aesthetic) < aesthetic_min:
        return False, "low_aesthetic"
    return True, None


def sample_frames(rec: ClipRecord | int, n: int = FRAMES_PER_CLIP) -> list[int]:
    """``n`` evenly spaced frame indices from the central half of the clip.

    The window is ``[floor(F/4), ceil(3F/4))``; positions are rounded half-up
    in exact integer arithmetic.
    """
    F = rec if isinstance(rec, int) else rec.num_frames
    if n < 1:
        raise ValueError("n must be >= 1")
    lo, hi = F // 4, -(-3 * F // 4)
    if F < n or hi - lo < n:
        raise TooFewFrames(f"{F} frames leave a window of {max(hi - lo, 0)} for {n} samples")
    span = hi - 1 - lo
    if n == 1:
        return [lo + (span + 1) // 2]
    return [lo + (2 * i * span + (n - 1)) // (2 * (n - 1)) for i in range(n)]


class Curator(RecordStage):
    """Stage (i): resolution/aesthetic gate, then pick the frames to mine."""

    stage_name = "curate"
    consumes = "raw"
    produces = "curated"

    def __init__(self, gateway: ModelGateway | None = None, min_height=MIN_HEIGHT,
                 aesthetic_min=AESTHETIC_MIN, frames_per_clip=FRAMES_PER_CLIP, n_jobs=1):
        self.gateway = gateway
        self.min_height = min_height
        self.aesthetic_min = aesthetic_min
        self.frames_per_clip = frames_per_clip
        self.n_jobs = n_jobs

    def process(self, rec: ClipRecord) -> None:
        if not rec.frames:
            raise MissingMetadata(f"{rec.clip_id}: no frames")
        if not rec.frame_sizes:
            rec.frame_sizes = [list(image_size(rec.frame_path(i))) for i in range(rec.num_frames)]
        if rec.aesthetic is None and self.gateway is not None:
            rec.aesthetic = float(self.gateway.aesthetic(rec.frame_path(rec.num_frames // 2)))
        keep, reason = quality_gate(rec, self.min_height, self.aesthetic_min)
        if not keep:
            rec.discard(reason)
            return
        try:
            rec.sampled = sample_frames(rec, self.frames_per_clip)
        except TooFewFrames:
            rec.discard("too_few_frames")
