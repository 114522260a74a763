import numpy as np
import pytest

from sparsim import kernels
from sparsim.engine import Counters, DeadlockError, SimConfig, _run_state, simulate_matmul
from sparsim.workload import gen_random

from conftest import stall_instance

needs_numba = pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba not importable")


def test_resolve_backend_explicit():
    assert kernels.resolve_backend("numpy") == "numpy"
    with pytest.raises(ValueError):
        kernels.resolve_backend("fortran")


def test_env_flag_selects_backend(monkeypatch):
    monkeypatch.setenv("SPARSIM_BACKEND", "numpy")
    assert kernels.resolve_backend(None) == "numpy"
    monkeypatch.setenv("SPARSIM_BACKEND", "nonsense")
    with pytest.raises(ValueError):
        kernels.resolve_backend(None)
    monkeypatch.delenv("SPARSIM_BACKEND")
    assert kernels.resolve_backend(None) in ("numba", "numpy")


@needs_numba
@pytest.mark.parametrize("dims,sparsity", [
    ((16, 16, 16), (0.0, 0.0)),
    ((32, 64, 48), (0.5, 0.75)),
    ((17, 33, 9), (0.7, 0.3)),
    ((64, 64, 64), (0.9, 0.9)),
    ((8, 24, 8), (1.0, 0.5)),
])
def test_backends_agree(dims, sparsity):
    m, k, n = dims
    a = gen_random(m, k, sparsity[0], sum(dims))
    b = gen_random(k, n, sparsity[1], sum(dims) + 1)
    for shared in (2, 8):
        cfg = SimConfig(shared_reg_size=shared)
        c_np, rep_np = simulate_matmul(a, b, cfg, backend="numpy")
        c_nb, rep_nb = simulate_matmul(a, b, cfg, backend="numba")
        assert np.array_equal(c_np, c_nb)
        assert rep_np.counters == rep_nb.counters
        assert rep_np.to_dict() == rep_nb.to_dict()


@needs_numba
def test_backends_agree_on_stall_instance():
    tile, build = stall_instance()
    cfg = SimConfig(array_rows=2, array_cols=2)
    results = {}
    for backend in ("numpy", "numba"):
        state = build()
        cnt = Counters()
        _run_state(state, cfg, cnt, backend, None)
        results[backend] = (cnt, state.acc.copy())
    assert results["numpy"][0] == results["numba"][0]
    assert np.array_equal(results["numpy"][1], results["numba"][1])


@needs_numba
def test_backends_agree_on_stall_abort():
    tile, build = stall_instance()
    cfg = SimConfig(array_rows=2, array_cols=2, deadlock_policy="error")
    stalled = {}
    for backend in ("numpy", "numba"):
        state = build()
        with pytest.raises(DeadlockError) as err:
            _run_state(state, cfg, Counters(), backend, None)
        stalled[backend] = sorted(err.value.stalled)
    assert stalled["numpy"] == stalled["numba"]


def _random_planted_state(rng, rows, cols, buf_len):
    """Random per-PE streams with no cross-PE consistency: strictly increasing
    effective indexes into equal-length buffers. Unlike streams matched from
    shared bitmaps these can stall, which exercises the direct-fetch path."""
    from sparsim.engine import PEArrayState, TileJob
    from sparsim.matching import MatchStream
    from sparsim.sparse_format import compress

    buf = compress(rng.integers(1, 127, buf_len).astype(np.int8))
    tile = TileJob([buf] * rows, [buf] * cols)
    streams = []
    for m in range(rows):
        row = []
        for n in range(cols):
            npairs = int(rng.integers(0, buf_len + 1))
            ei = np.sort(rng.choice(buf_len, size=npairs, replace=False))
            ew = np.sort(rng.choice(buf_len, size=npairs, replace=False))
            row.append(MatchStream(ei, ew))
        streams.append(row)
    total = sum(len(s) for row in streams for s in row)
    return tile, streams, total


@needs_numba
def test_backends_agree_on_random_planted_streams(rng):
    # stress the stall machinery with streams a real tile cannot produce
    from sparsim.engine import PEArrayState

    for trial in range(30):
        rows = int(rng.integers(1, 5))
        cols = int(rng.integers(1, 5))
        tile, streams, total = _random_planted_state(rng, rows, cols, 24)
        cfg = SimConfig(array_rows=rows, array_cols=cols,
                        shared_reg_size=int(rng.integers(1, 6)))
        results = {}
        for backend in ("numpy", "numba"):
            state = PEArrayState.from_streams(streams, tile)
            cnt = Counters()
            _run_state(state, cfg, cnt, backend, None)
            assert cnt.active_macs == total  # every planted pair executes once
            results[backend] = (cnt, state.acc.copy())
        assert results["numpy"][0] == results["numba"][0], trial
        assert np.array_equal(results["numpy"][1], results["numba"][1])
