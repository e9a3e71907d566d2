"""Small numeric helpers shared across modules."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["csum", "segment_sums", "segment_min", "ragged_arange", "float_gcd"]

_CHUNK = 4096


def csum(a) -> float:
    """Compensated sum of a 1-d array.

    Exact fsum for short arrays; for long ones, pairwise sums over fixed
    4096-element chunks combined exactly with fsum.  Error stays within a
    few ulps of the true sum at any length, at numpy throughput.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    n = a.size
    if n <= _CHUNK:
        return math.fsum(a)
    head = (n // _CHUNK) * _CHUNK
    parts = np.sum(a[:head].reshape(-1, _CHUNK), axis=1)
    return math.fsum(parts) + math.fsum(a[head:])


def segment_sums(values, seg_ids, n_segments) -> np.ndarray:
    """Per-segment sums of ``values`` grouped by ``seg_ids``.

    Accumulation order within a segment follows array order, so a segment's
    result is bit-identical no matter which other segments share the batch.
    Empty segments sum to 0.
    """
    return np.bincount(seg_ids, weights=values, minlength=n_segments)


def segment_min(values, seg_ids, n_segments, empty=np.inf) -> np.ndarray:
    out = np.full(n_segments, empty, dtype=np.float64)
    np.minimum.at(out, seg_ids, values)
    return out


def ragged_arange(counts) -> np.ndarray:
    """Concatenation of arange(c) for each c in counts."""
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    return np.arange(total, dtype=np.int64) - starts


def float_gcd(values, tol=1e-9) -> float:
    """Approximate positive gcd of a set of reals; 0.0 if none below tol."""
    g = 0.0
    for v in values:
        b = abs(float(v))
        a = g
        while b > tol:
            a, b = b, math.fmod(a, b)
        g = a
    if g <= tol:
        return 0.0
    # every value must sit on the grid within tol
    for v in values:
        if abs(v / g - round(v / g)) > 1e-6:
            return 0.0
    return g
