"""Stable seed derivation. Python's ``hash`` is salted per process, so blake2b is used instead."""
from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    h = hashlib.blake2b(digest_size=8, person=b"subjforge")
    for p in parts:
        h.update(str(p).encode("utf-8"))
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "little") >> 1  # keep it a positive int64


def attempt_seed(record_id: str, stage: str, attempt: int, global_seed: int = 0) -> int:
    return derive_seed(global_seed, record_id, stage, attempt)


def rng_for(record_id: str, stage: str, attempt: int = 1, global_seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(attempt_seed(record_id, stage, attempt, global_seed))
