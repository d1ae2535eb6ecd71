"""Input checks shared by the stage estimators."""
from __future__ import annotations

from pathlib import Path
from typing import Iterable

import numpy as np

from ..errors import NormViolation
from ..records import ClipRecord, as_record


def check_records(X: Iterable, base_dir: Path | None = None) -> list[ClipRecord]:
    """Accept records or plain dicts; always return a fresh list of :class:`ClipRecord`."""
    if isinstance(X, (ClipRecord, dict)):
        raise TypeError("expected a sequence of records, got a single record")
    return [as_record(x, base_dir) for x in X]


def check_unit_vectors(E, tol: float = 1e-4) -> np.ndarray:
    E = np.asarray(E, dtype=np.float64)
    if E.ndim != 2:
        raise ValueError(f"embeddings must be a 2-D array, got shape {E.shape}")
    norms = np.linalg.norm(E, axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > tol)
    if bad.size:
        raise NormViolation(f"embedding {int(bad[0])} has norm {norms[bad[0]]:.6f}")
    return E


def check_fraction(name: str, value: float) -> float:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value
