"""Quantization of (avoidance, exposure-per-impression) pairs onto a D x D grid.

Both ratios live in [0, 1]; the unit square is cut into D equal-width
bins per axis and each cell indexes one row of a trainable embedding
table.  The flat cell index is ``D * epi_idx + av_idx``, so walking one
full exposure bin up moves the flat index by exactly D.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .stats import StatsSnapshot, avoidance, epi

GRID_SCHEMA_VERSION = "grid-v1"


@dataclass(frozen=True)
class EngagementIndex:
    av_idx: int
    epi_idx: int
    i_ue: int


def quantize(value: float, d: int) -> int:
    """Equal-width bin of ``value`` over [0, 1]: floor(value * D).

    Values are clamped into [0, 1] first and 1.0 maps to the last bin.
    """
    if d <= 0:
        raise ValueError("grid resolution must be positive")
    value = min(1.0, max(0.0, value))
    return min(d - 1, int(math.floor(value * d)))


def engagement_index(av: float, epi_value: float, d: int) -> EngagementIndex:
    av_idx = quantize(av, d)
    epi_idx = quantize(epi_value, d)
    return EngagementIndex(av_idx=av_idx, epi_idx=epi_idx, i_ue=d * epi_idx + av_idx)


def unflatten_index(i_ue: int, d: int) -> tuple[int, int]:
    """Inverse of the flattening: (av_idx, epi_idx) for a flat cell index."""
    if not 0 <= i_ue < d * d:
        raise IndexError(f"flat cell index {i_ue} outside [0, {d * d})")
    return i_ue % d, i_ue // d


class EngagementEmbeddingTable:
    """Trainable D^2 x dim embedding table over grid cells."""

    def __init__(self, d: int, dim: int, rng: np.random.Generator,
                 init_range: float = 0.1, dtype=None, name: str = "engagement_table"):
        self.d = d
        self.dim = dim
        data = rng.uniform(-init_range, init_range, size=(d * d, dim))
        self.table = ad.parameter(data, name=name, dtype=dtype)

    def lookup(self, i_ue: int) -> ad.Tensor:
        """Embedding row for one cell, participating in gradient updates."""
        if not 0 <= i_ue < self.d * self.d:
            raise IndexError(f"flat cell index {i_ue} outside [0, {self.d * self.d})")
        return ad.embedding_lookup(self.table, np.array([i_ue]))


def snapshot_cell(snapshot: StatsSnapshot, news_id: str, d: int) -> EngagementIndex:
    """Grid cell of one article under a snapshot's statistics."""
    return engagement_index(avoidance(snapshot, news_id), epi(snapshot, news_id), d)


def grid_cell_counts(snapshot: StatsSnapshot, d: int) -> dict[int, int]:
    """Article count per flat cell index for one snapshot."""
    counts: dict[int, int] = {}
    for news_id in snapshot.exposures:
        cell = snapshot_cell(snapshot, news_id, d)
        counts[cell.i_ue] = counts.get(cell.i_ue, 0) + 1
    return counts


def write_grid_csv(snapshot: StatsSnapshot, d: int, path):
    """Cell occupancy dump: one row per flat index (i_ue, av_idx, epi_idx, count)."""
    counts = grid_cell_counts(snapshot, d)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema: {GRID_SCHEMA_VERSION}\n")
        writer = csv.writer(fh)
        writer.writerow(["i_ue", "av_idx", "epi_idx", "article_count"])
        for i_ue in range(d * d):
            av_idx, epi_idx = unflatten_index(i_ue, d)
            writer.writerow([i_ue, av_idx, epi_idx, counts.get(i_ue, 0)])
