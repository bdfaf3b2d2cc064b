"""Distances between log-discretized color histograms.

Histogram bins are stored after log discretization, so the histogram
distance is a plain L1 over stored values and tile distances are means of
per-leaf histogram distances.
"""

from __future__ import annotations

import numpy as np

__all__ = ["F_TABLE", "f_transform", "dlog_distance", "tile_distance"]


def f_transform(x: int) -> int:
    """Compress a normalized bin value in [0, 255] into the 4-bit range [0, 9].

    f(0) = 0, f(1) = 1, and f(x) = ceil(log2 x) + 1 for larger values, so
    equal order-of-magnitude bin masses compare as equal.
    """
    x = int(x)
    if not 0 <= x <= 255:
        raise ValueError(f"bin value out of range [0, 255]: {x}")
    if x <= 1:
        return x
    # (x - 1).bit_length() == ceil(log2 x) for x >= 2, without float log
    return (x - 1).bit_length() + 1


F_TABLE: np.ndarray = np.array([f_transform(x) for x in range(256)], dtype=np.uint8)


def dlog_distance(a: np.ndarray, b: np.ndarray) -> int:
    """L1 distance between two discretized histograms of equal layout.

    Inputs are flat arrays holding the border bins followed by the interior
    bins, each value already discretized into [0, 9].
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"histogram shapes differ: {a.shape} vs {b.shape}")
    return int(np.abs(a.astype(np.int16) - b.astype(np.int16)).sum())


def tile_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Mean leaf-histogram distance between two tiles of the same level.

    Each tile is given as the stack of its leaf histograms in matching
    positional order: shape (m, bins) with m = 16 for the root, 4 for a
    half-size tile and 1 for a leaf.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("tiles must be 2-d stacks of leaf histograms")
    if a.shape != b.shape:
        raise ValueError(f"tile shapes differ: {a.shape} vs {b.shape}")
    diffs = np.abs(a.astype(np.int16) - b.astype(np.int16)).sum(axis=1, dtype=np.int64)
    return float(diffs.mean())
