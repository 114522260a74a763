"""Compiled per-tile cycle loop.

The cycle loop dominates runtime at realistic sizes, so it is compiled with
numba when available. Backend selection:

    SPARSIM_BACKEND=numba   require the compiled kernel (error if numba missing)
    SPARSIM_BACKEND=numpy   force the pure-numpy stepping path
    unset                   numba when importable, numpy otherwise

The numpy path lives in engine.array_step; both paths implement identical
semantics and are cross-checked in the test suite. `python -m sparsim.bench`
compares their throughput.
"""

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


__all__ = [
    "HAVE_NUMBA",
    "default_backend",
    "resolve_backend",
    "run_tile_compiled",
    "N_COUNTERS",
]

# Slots of the kernel's counter buffer.
CYCLES = 0
ACTIVE = 1
IDLE = 2
IN_BYTES = 3
W_BYTES = 4
REFILLS = 5
ZERO_PROG = 6
DIRECT = 7
ACC_RANGE = 8
N_COUNTERS = 9

_ACC24_MAX = 8388607
_ACC24_MIN = -8388608


def default_backend() -> str:
    env = os.environ.get("SPARSIM_BACKEND", "").strip().lower()
    if env == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("SPARSIM_BACKEND=numba but numba is not importable")
        return "numba"
    if env == "numpy":
        return "numpy"
    if env:
        raise ValueError(f"unknown SPARSIM_BACKEND value: {env!r}")
    return "numba" if HAVE_NUMBA else "numpy"


def resolve_backend(name=None) -> str:
    if name is None:
        return default_backend()
    if name == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not importable")
        return "numba"
    if name == "numpy":
        return "numpy"
    raise ValueError(f"unknown backend: {name!r}")


@njit(cache=True)
def _tile_loop(
    stream_ei,
    stream_ew,
    pe_start,
    row_vals,
    row_start,
    col_vals,
    col_start,
    n_rows,
    n_cols,
    win,
    allow_direct_fetch,
    cur,
    eff_i,
    eff_w,
    done,
    idle_last,
    acc,
    acc_flagged,
    base_i,
    base_w,
    cov_i,
    cov_w,
    cnt,
):  # pragma: no cover - compiled; parity with array_step is tested instead
    n_pe = n_rows * n_cols
    far = np.int64(1) << np.int64(62)
    new_bi = np.empty(n_rows, np.int64)
    new_bw = np.empty(n_cols, np.int64)
    while True:
        # Advance every PE that executed last cycle; a PE whose stream is
        # exhausted retires without consuming a cycle.
        retired = 0
        alive = 0
        for p in range(n_pe):
            if done[p]:
                continue
            if not idle_last[p]:
                if cur[p] == pe_start[p + 1]:
                    done[p] = True
                    retired += 1
                    continue
                eff_i[p] = stream_ei[cur[p]]
                eff_w[p] = stream_ew[cur[p]]
                cur[p] += 1
            alive += 1
        if alive == 0:
            return 0

        # Shared window bases: smallest effective index any live PE in the
        # row (input) or column (weight) still needs.
        for m in range(n_rows):
            new_bi[m] = far
        for n in range(n_cols):
            new_bw[n] = far
        for p in range(n_pe):
            if done[p]:
                continue
            m = p // n_cols
            n = p - m * n_cols
            if eff_i[p] < new_bi[m]:
                new_bi[m] = eff_i[p]
            if eff_w[p] < new_bw[n]:
                new_bw[n] = eff_w[p]

        # Window refills: only entries not yet covered are fetched from SRAM.
        for m in range(n_rows):
            if new_bi[m] == far:
                continue
            length = row_start[m + 1] - row_start[m]
            hi = new_bi[m] + win
            if hi > length:
                hi = length
            lo = cov_i[m]
            if new_bi[m] > lo:
                lo = new_bi[m]
            if hi > lo:
                cnt[IN_BYTES] += hi - lo
                cnt[REFILLS] += 1
            if hi > cov_i[m]:
                cov_i[m] = hi
            base_i[m] = new_bi[m]
        for n in range(n_cols):
            if new_bw[n] == far:
                continue
            length = col_start[n + 1] - col_start[n]
            hi = new_bw[n] + win
            if hi > length:
                hi = length
            lo = cov_w[n]
            if new_bw[n] > lo:
                lo = new_bw[n]
            if hi > lo:
                cnt[W_BYTES] += hi - lo
                cnt[REFILLS] += 1
            if hi > cov_w[n]:
                cov_w[n] = hi
            base_w[n] = new_bw[n]

        # Execute every PE whose operands both sit inside the shared windows.
        executed = 0
        for p in range(n_pe):
            if done[p]:
                continue
            m = p // n_cols
            n = p - m * n_cols
            off_i = eff_i[p] - base_i[m]
            off_w = eff_w[p] - base_w[n]
            if off_i < win and off_w < win:
                prod = np.int64(row_vals[row_start[m] + eff_i[p]]) * np.int64(
                    col_vals[col_start[n] + eff_w[p]]
                )
                acc[p] += prod
                if (acc[p] > _ACC24_MAX or acc[p] < _ACC24_MIN) and not acc_flagged[p]:
                    acc_flagged[p] = True
                    cnt[ACC_RANGE] += 1
                idle_last[p] = False
                executed += 1
            else:
                idle_last[p] = True

        if executed == 0 and retired == 0:
            cnt[ZERO_PROG] += 1
            if not allow_direct_fetch:
                return 1
            # Direct fetch: the stalled PE with the smallest combined offset
            # (row-major tie break) bypasses the windows for this cycle.
            best = -1
            best_cost = far
            for p in range(n_pe):
                if done[p]:
                    continue
                m = p // n_cols
                n = p - m * n_cols
                cost = (eff_i[p] - base_i[m]) + (eff_w[p] - base_w[n])
                if cost < best_cost:
                    best_cost = cost
                    best = p
            m = best // n_cols
            n = best - m * n_cols
            prod = np.int64(row_vals[row_start[m] + eff_i[best]]) * np.int64(
                col_vals[col_start[n] + eff_w[best]]
            )
            acc[best] += prod
            if (acc[best] > _ACC24_MAX or acc[best] < _ACC24_MIN) and not acc_flagged[best]:
                acc_flagged[best] = True
                cnt[ACC_RANGE] += 1
            idle_last[best] = False
            executed = 1
            cnt[DIRECT] += 1
            cnt[IN_BYTES] += 1
            cnt[W_BYTES] += 1

        cnt[ACTIVE] += executed
        cnt[IDLE] += n_pe - executed
        cnt[CYCLES] += 1


def run_tile_compiled(state, win: int, allow_direct_fetch: bool) -> int:
    """Run the compiled loop over a PEArrayState in place.

    Returns 0 on completion, 1 on a stall under the error policy (state arrays
    hold the stalled cycle for reporting). Counter deltas accumulate into
    state.kernel_counters.
    """
    if not HAVE_NUMBA:
        raise RuntimeError("numba is not importable; use the numpy backend")
    return _tile_loop(
        state.stream_eff_input,
        state.stream_eff_weight,
        state.stream_start,
        state.row_values,
        state.row_val_start,
        state.col_values,
        state.col_val_start,
        np.int64(state.rows),
        np.int64(state.cols),
        np.int64(win),
        allow_direct_fetch,
        state.cur,
        state.eff_input,
        state.eff_weight,
        state.done,
        state.idle_last,
        state.acc,
        state.acc_flagged,
        state.base_input,
        state.base_weight,
        state.covered_input,
        state.covered_weight,
        state.kernel_counters,
    )
