"""Cycle-level simulator for a bitmap-compressed sparse matmul PE array.

Operands are 8-bit signed matrices compressed row-wise (inputs) and
column-wise (weights) into bitmaps plus packed values. Effective index
matching turns each row/column bitmap pair into the ordered compressed-buffer
index pairs a PE must execute; the engine then runs an output-stationary PE
array where rows share a sliding input window and columns share a weight
window, producing bit-exact products plus cycle and SRAM-traffic counters.
"""

from .analysis import SimReport, dense_baseline, mapm, sparten_baseline, utilization
from .engine import (
    Counters,
    DeadlockError,
    DimensionError,
    PEArrayState,
    SimConfig,
    TileJob,
    array_step,
    run_tile,
    simulate_matmul,
)
from .matching import (
    MatchStream,
    effective_indexes,
    effective_indexes_segmented,
    masked_bitmap,
    match_bitmap,
)
from .sparse_format import CompressedVector, compress, decompress, mask_index, rank
from .workload import gen_random, load_matrix, pw_to_gemm, store_matrix

__version__ = "0.1.0"

__all__ = [
    "CompressedVector",
    "Counters",
    "DeadlockError",
    "DimensionError",
    "MatchStream",
    "PEArrayState",
    "SimConfig",
    "SimReport",
    "TileJob",
    "array_step",
    "compress",
    "decompress",
    "dense_baseline",
    "effective_indexes",
    "effective_indexes_segmented",
    "gen_random",
    "load_matrix",
    "mapm",
    "mask_index",
    "masked_bitmap",
    "match_bitmap",
    "pw_to_gemm",
    "rank",
    "run_tile",
    "simulate_matmul",
    "sparten_baseline",
    "store_matrix",
    "utilization",
]
