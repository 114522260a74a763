"""Effective index matching.

Given a compressed input stream and a compressed weight stream of equal dense
length, find every position where both are non-zero and emit the pair of
compressed-buffer indexes a PE must fetch for that multiply, in original-index
order. Two equivalent constructions exist: ranking each common set bit within
each bitmap, or gathering the common-bit mask through each mask index and
reading off its set positions. This module uses the rank construction; the
gather primitives are exposed so both routes can be checked against each other.
"""

from dataclasses import dataclass

import numpy as np

from .sparse_format import CompressedVector, popcount

__all__ = [
    "MatchStream",
    "effective_indexes",
    "effective_indexes_segmented",
    "masked_bitmap",
    "match_bitmap",
    "tile_match_streams",
]


@dataclass(frozen=True, eq=False)
class MatchStream:
    """Ordered (effective input index, effective weight index) pairs for one PE."""

    eff_input: np.ndarray
    eff_weight: np.ndarray

    def __post_init__(self):
        ei = np.asarray(self.eff_input, dtype=np.int64)
        ew = np.asarray(self.eff_weight, dtype=np.int64)
        if ei.shape != ew.shape or ei.ndim != 1:
            raise ValueError("effective index arrays must be 1-D and equal length")
        ei.setflags(write=False)
        ew.setflags(write=False)
        object.__setattr__(self, "eff_input", ei)
        object.__setattr__(self, "eff_weight", ew)

    def __len__(self) -> int:
        return len(self.eff_input)

    def __eq__(self, other):
        if not isinstance(other, MatchStream):
            return NotImplemented
        return np.array_equal(self.eff_input, other.eff_input) and np.array_equal(
            self.eff_weight, other.eff_weight
        )


def _check_same_length(bmi, bmw):
    if len(bmi) != len(bmw):
        raise ValueError(f"bitmap lengths differ: {len(bmi)} vs {len(bmw)}")


def match_bitmap(bmi, bmw) -> np.ndarray:
    """Bitwise AND of the two bitmaps: set where the multiply is non-zero."""
    bmi = np.asarray(bmi, dtype=bool)
    bmw = np.asarray(bmw, dtype=bool)
    _check_same_length(bmi, bmw)
    return bmi & bmw


def masked_bitmap(common, mid) -> np.ndarray:
    """Gather the common-bit mask through a mask index.

    Output bit j is the common bit at original index mid[j]; its set positions
    are the effective indexes for the stream mid was built from.
    """
    common = np.asarray(common, dtype=bool)
    mid = np.asarray(mid, dtype=np.int64)
    if mid.size and (mid.min() < 0 or mid.max() >= len(common)):
        raise IndexError("mask index entry out of range")
    return common[mid]


def effective_indexes(bmi, bmw) -> MatchStream:
    """Effective index pairs for one input/weight bitmap pair."""
    bmi = np.asarray(bmi, dtype=bool)
    bmw = np.asarray(bmw, dtype=bool)
    _check_same_length(bmi, bmw)
    t = np.flatnonzero(bmi & bmw)
    eff_i = np.cumsum(bmi, dtype=np.int64)[t] - 1
    eff_w = np.cumsum(bmw, dtype=np.int64)[t] - 1
    return MatchStream(eff_i, eff_w)


def effective_indexes_segmented(
    input_stream: CompressedVector, weight_stream: CompressedVector, segment_length: int
) -> MatchStream:
    """Same result as effective_indexes, evaluated over fixed-width bitmap
    windows with running compressed-base offsets added to local ranks."""
    if segment_length < 1:
        raise ValueError("segment_length must be >= 1")
    bmi, bmw = input_stream.bitmap, weight_stream.bitmap
    _check_same_length(bmi, bmw)
    parts_i, parts_w = [], []
    base_i = base_w = 0
    for lo in range(0, len(bmi), segment_length):
        wi = bmi[lo : lo + segment_length]
        ww = bmw[lo : lo + segment_length]
        local = effective_indexes(wi, ww)
        parts_i.append(local.eff_input + base_i)
        parts_w.append(local.eff_weight + base_w)
        base_i += popcount(wi)
        base_w += popcount(ww)
    if not parts_i:
        return MatchStream(np.empty(0, np.int64), np.empty(0, np.int64))
    return MatchStream(np.concatenate(parts_i), np.concatenate(parts_w))


def tile_match_streams(row_bitmaps: np.ndarray, col_bitmaps: np.ndarray):
    """Batched matching for a whole tile: every row bitmap against every column
    bitmap, PEs in row-major order.

    Returns (eff_input, eff_weight, start) where start[p]:start[p+1] slices the
    flat arrays into the stream of PE p. Equivalent to calling
    effective_indexes per pair; shared per-row/per-column rank tables make it
    one vectorized pass.
    """
    rows = np.asarray(row_bitmaps, dtype=bool)
    cols = np.asarray(col_bitmaps, dtype=bool)
    if rows.ndim != 2 or cols.ndim != 2 or rows.shape[1] != cols.shape[1]:
        raise ValueError("row/column bitmap stacks must be 2-D with equal width")
    n_rows, k = rows.shape
    n_cols = cols.shape[0]
    rank_r = np.cumsum(rows, axis=1, dtype=np.int64) - 1
    rank_c = np.cumsum(cols, axis=1, dtype=np.int64) - 1
    common = (rows[:, None, :] & cols[None, :, :]).reshape(n_rows * n_cols, k)
    pe, t = np.nonzero(common)
    start = np.zeros(n_rows * n_cols + 1, dtype=np.int64)
    np.cumsum(np.count_nonzero(common, axis=1), out=start[1:])
    eff_i = rank_r[pe // n_cols, t]
    eff_w = rank_c[pe % n_cols, t]
    return eff_i, eff_w, start
