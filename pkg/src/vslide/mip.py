"""Mignification: power-of-two box-filter downscaling of u16 planes."""

from __future__ import annotations

import numpy as np

from .errors import DomainError


def mip_dims(height: int, width: int, level: int) -> tuple[int, int]:
    return (-(-height // level), -(-width // level))


def mignify(plane: np.ndarray, level: int) -> np.ndarray:
    """Box-filter mean over level x level blocks; edge blocks use the partial block.

    Means are rounded half away from zero.  Level 1 is the identity.
    """
    if level < 1 or level & (level - 1):
        raise DomainError(f"mip level must be a power of two, got {level}")
    plane = np.asarray(plane, dtype=np.uint16)
    if plane.ndim != 2:
        raise DomainError("mignify expects a 2-d plane")
    if level == 1:
        return plane
    h, w = plane.shape
    row_edges = np.arange(0, h, level)
    col_edges = np.arange(0, w, level)
    sums = np.add.reduceat(np.add.reduceat(plane.astype(np.uint64), row_edges, axis=0),
                           col_edges, axis=1)
    row_counts = np.minimum(row_edges + level, h) - row_edges
    col_counts = np.minimum(col_edges + level, w) - col_edges
    counts = np.outer(row_counts, col_counts)
    means = sums / counts
    return np.floor(means + 0.5).astype(np.uint16)  # values are non-negative
