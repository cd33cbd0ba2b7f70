"""Small shared helpers: deterministic hashing and count allocation."""

from __future__ import annotations

import hashlib
import json

import numpy as np


def canonical_json(obj) -> str:
    """JSON text with sorted keys and no whitespace, stable across runs."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def stable_digest(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def digest_to_entropy(digest: str) -> int:
    """Fold a hex digest into a 128-bit integer usable as seed entropy."""
    return int(digest[:32], 16)


def allocate_counts(weights, total: int) -> np.ndarray:
    """Split ``total`` items proportionally to ``weights``.

    Uses largest-remainder rounding so the counts sum to ``total``
    exactly; ties go to the lower index.
    """
    weights = np.asarray(weights, dtype=float)
    if total < 0:
        raise ValueError("total must be non-negative")
    if np.any(weights < 0):
        raise ValueError("weights must be non-negative")
    wsum = weights.sum()
    if wsum <= 0:
        raise ValueError("weights must not all be zero")
    quota = weights * (total / wsum)
    counts = np.floor(quota).astype(int)
    short = total - counts.sum()
    if short > 0:
        remainder = quota - counts
        for idx in np.lexsort((np.arange(len(weights)), -remainder))[:short]:
            counts[idx] += 1
    return counts
