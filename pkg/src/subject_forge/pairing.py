"""Diversity-aware choice of the (input-source, target) frame pair."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gateway import ModelGateway
from .stage import RecordStage
from .utils.validation import check_unit_vectors


@dataclass(frozen=True)
class FramePairChoice:
    index_a: int
    index_b: int
    cosine_distance: float

    def __post_init__(self):
        if not self.index_a < self.index_b:
            raise ValueError("index_a must precede index_b")


def select_pair(frames, embeddings, tol: float = 1e-4) -> FramePairChoice | None:
    """Most dissimilar pair under ``1 - <e_i, e_j>``; None when fewer than two frames.

    Returned indices are positions in ``frames``. Ties go to the
    lexicographically smallest ``(a, b)``.
    """
    n = len(frames)
    if n < 2:
        return None
    E = check_unit_vectors(embeddings, tol)
    if E.shape[0] != n:
        raise ValueError(f"{n} frames but {E.shape[0]} embeddings")
    best = None
    for a in range(n):
        for b in range(a + 1, n):
            dist = 1.0 - float(np.dot(E[a], E[b]))
            if best is None or dist > best[2]:
                best = (a, b, dist)
    a, b, dist = best
    return FramePairChoice(a, b, min(max(dist, 0.0), 2.0))


class PairSelector(RecordStage):
    stage_name = "pair"
    consumes = "mined"
    produces = "paired"

    def __init__(self, gateway: ModelGateway | None = None, n_jobs=1):
        self.gateway = gateway
        self.n_jobs = n_jobs

    def process(self, rec):
        frames = sorted(int(i) for i in rec.detections)
        if len(frames) < 2:
            rec.discard("fewer_than_two_frames")
            return
        E = np.stack([self.gateway.embed(rec.frame_path(i)) for i in frames])
        choice = select_pair(frames, E)
        rec.pair = [frames[choice.index_a], frames[choice.index_b]]
        rec.pair_distance = round(choice.cosine_distance, 12)
