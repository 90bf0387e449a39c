"""Small shared helpers."""

from __future__ import annotations

import hashlib
import math


def round_half_away(x: float) -> int:
    """Round to the nearest integer with halves going away from zero."""
    if x >= 0:
        return math.floor(x + 0.5)
    return math.ceil(x - 0.5)


def stage_seed(global_seed: int, label: str) -> int:
    """Derive a per-stage seed from the global seed via a labeled hash.

    Stages can rerun independently without perturbing each other's streams.
    """
    digest = hashlib.sha256(f"{global_seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")
