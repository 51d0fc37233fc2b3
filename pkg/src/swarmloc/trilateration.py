"""Baseline estimator: each mobile node from its three anchor ranges alone."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .geometry import select_in_bounds_many, trilaterate_many
from .swarm import N_ANCHORS, RangingFrame, SwarmConfig

FLAG_DEGENERATE = 1  # spheres did not intersect; in-plane point used
FLAG_AMBIGUOUS = 2  # both or neither root inside the bounds
FLAG_INVALID = 4  # an anchor range is missing; position is NaN


@dataclass
class TrilaterationResult:
    positions: np.ndarray  # (n_mobile, 3), NaN rows for invalid nodes
    flags: np.ndarray  # (n_mobile,) bitmask of FLAG_*
    elapsed: float

    @property
    def degenerate(self) -> np.ndarray:
        return (self.flags & FLAG_DEGENERATE) != 0

    @property
    def ambiguous(self) -> np.ndarray:
        return (self.flags & FLAG_AMBIGUOUS) != 0

    @property
    def invalid(self) -> np.ndarray:
        return (self.flags & FLAG_INVALID) != 0


def _anchor_ranges(frame: RangingFrame, config: SwarmConfig):
    n_mobile = config.n_mobile
    ranges = np.full((n_mobile, N_ANCHORS), np.nan)
    i, j = frame.pairs[:, 0], frame.pairs[:, 1]
    sel = frame.valid & (i < N_ANCHORS) & (j >= N_ANCHORS) & (j < config.n_nodes)
    ranges[j[sel] - N_ANCHORS, i[sel]] = frame.distances[sel]
    return ranges


def _estimate(config: SwarmConfig, ranges: np.ndarray):
    first, second, degenerate = trilaterate_many(config.anchors, ranges)
    positions, ambiguous = select_in_bounds_many(first, second, config.bounds)
    return positions, ambiguous * FLAG_AMBIGUOUS + degenerate * FLAG_DEGENERATE


def trilaterate_frame(frame: RangingFrame, config: SwarmConfig) -> TrilaterationResult:
    """Closed-form position of every mobile node from its anchor ranges.

    Mobile-mobile ranges in the frame are ignored. A node missing any anchor
    range is flagged invalid; the rest are still estimated.
    """
    t0 = time.perf_counter()
    ranges = _anchor_ranges(frame, config)
    ok = (ranges > 0).all(axis=1)  # NaN compares False
    if ok.all():
        positions, flags = _estimate(config, ranges)
    else:
        positions = np.full((config.n_mobile, 3), np.nan)
        flags = np.full(config.n_mobile, FLAG_INVALID)
        if ok.any():
            positions[ok], flags[ok] = _estimate(config, ranges[ok])
    return TrilaterationResult(positions, flags.astype(np.int64), time.perf_counter() - t0)


def trilaterate_sequence(frames: list[RangingFrame], config: SwarmConfig) -> list[TrilaterationResult]:
    """Memoryless map of :func:`trilaterate_frame` over a frame sequence."""
    return [trilaterate_frame(f, config) for f in frames]
