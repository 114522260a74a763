import numpy as np
import pytest

from sparsim import kernels
from sparsim.engine import PEArrayState, TileJob, simulate_matmul
from sparsim.matching import MatchStream
from sparsim.sparse_format import compress
from sparsim.workload import gen_random


def bits(text: str) -> np.ndarray:
    """Bitmap from a string like '10001101', index 0 first."""
    return np.array([c == "1" for c in text], dtype=bool)


def golden_tile():
    """The worked two-PE example: 2 input rows sharing 1 weight column,
    all stored values 1. Hand-traced: 5 cycles, 9 MACs, outputs 4 and 5."""
    r0 = compress([1, 0, 0, 0, 1, 1, 0, 1])
    r1 = compress([1, 0, 1, 1, 1, 0, 0, 1])
    c0 = compress([1, 0, 1, 1, 1, 1, 0, 1])
    return TileJob([r0, r1], [c0])


def stall_instance():
    """A 2x2 mutual stall for window size 8: every PE's pending pair has one
    offset of 8. Streams matched out of shared row/column bitmaps can never
    produce this (the PE at the globally smallest original index always has
    zero offsets), so the grid is planted directly. Hand-traced under
    direct_fetch: 4 cycles, 4 MACs, 1 zero-progress event, 1 direct fetch."""
    ones9 = compress([1] * 9)
    tile = TileJob([ones9, ones9], [ones9, ones9])
    streams = [
        [MatchStream([0], [8]), MatchStream([8], [0])],
        [MatchStream([8], [0]), MatchStream([0], [8])],
    ]
    return tile, lambda: PEArrayState.from_streams(streams, tile)


@pytest.fixture(scope="session", autouse=True)
def warm_kernel():
    # Compile the tile kernel once so timed tests measure steady state.
    if kernels.HAVE_NUMBA:
        a = gen_random(8, 32, 0.5, 0)
        b = gen_random(32, 8, 0.5, 1)
        simulate_matmul(a, b, backend="numba")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
