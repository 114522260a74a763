"""Cycle-level model of the shared-window output-stationary PE array.

Each mapped PE owns one output element and an ordered stream of effective
index pairs (its non-zero multiplies). Per cycle:

  1. every PE that executed last cycle advances to its next pair; a PE whose
     stream is exhausted retires (retirement consumes no cycle on its own if
     it empties the array),
  2. each row's shared input window and each column's shared weight window is
     re-based at the smallest effective index a live PE there still needs,
  3. newly covered packed entries are fetched from SRAM (windows slide
     monotonically, so every entry is fetched at most once),
  4. a PE whose two offsets from the window bases both fit within the window
     executes its multiply-accumulate; otherwise it idles and retries.

A cycle in which nothing executes and nothing retires is a stall; the
deadlock policy either aborts or lets one PE fetch its operands directly.
Stalls cannot arise from streams matched out of shared row/column bitmaps
(the PE holding the globally smallest original index always has zero
offsets), so the counter doubles as a consistency check on real workloads.
"""

from dataclasses import dataclass, fields, asdict

import numpy as np

from . import analysis, kernels, matching
from .sparse_format import compress

__all__ = [
    "Counters",
    "DeadlockError",
    "DimensionError",
    "PEArrayState",
    "SimConfig",
    "StepReport",
    "TileJob",
    "array_step",
    "run_tile",
    "simulate_matmul",
]

_FAR = np.int64(1) << np.int64(62)
_ACC24_MAX = 8388607
_ACC24_MIN = -8388608


class DimensionError(ValueError):
    """Operand shapes incompatible with the requested operation."""


class DeadlockError(RuntimeError):
    """No PE could execute and none retired, under deadlock_policy=error.

    stalled: list of (row, col, offset_input, offset_weight) for live PEs.
    """

    def __init__(self, stalled):
        self.stalled = list(stalled)
        pes = ", ".join(
            f"PE({m},{n}) offsets=({oi},{ow})" for m, n, oi, ow in self.stalled
        )
        super().__init__(f"array stalled with no progress: {pes}")


@dataclass
class SimConfig:
    """Array geometry and accounting knobs.

    segment_length only affects the chunked index-matching helper (results are
    segmentation-invariant); rng_seed is the default seed for workload
    generation in the CLI. The simulation itself is deterministic.
    """

    array_rows: int = 16
    array_cols: int = 16
    shared_reg_size: int = 8
    segment_length: int = 64
    output_write_bytes: int = 1
    count_bitmap_bytes: bool = False
    deadlock_policy: str = "direct_fetch"
    rng_seed: int = 0

    def __post_init__(self):
        if self.array_rows < 1 or self.array_cols < 1:
            raise ValueError("array dimensions must be >= 1")
        if self.shared_reg_size < 1:
            raise ValueError("shared_reg_size must be >= 1")
        if self.segment_length < 1:
            raise ValueError("segment_length must be >= 1")
        if self.output_write_bytes < 1:
            raise ValueError("output_write_bytes must be >= 1")
        if self.deadlock_policy not in ("direct_fetch", "error"):
            raise ValueError("deadlock_policy must be 'direct_fetch' or 'error'")


@dataclass
class Counters:
    """Cycle and SRAM-traffic accounting; adds across tiles."""

    cycles: int = 0
    active_macs: int = 0
    idle_pe_cycles: int = 0
    input_bytes_read: int = 0
    weight_bytes_read: int = 0
    output_bytes_written: int = 0
    refill_events: int = 0
    zero_progress_events: int = 0
    direct_fetch_events: int = 0
    acc_range_exceeded: int = 0

    def add(self, other: "Counters") -> "Counters":
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class TileJob:
    """One tile's operand streams: compressed input rows and weight columns
    sharing a single dense length."""

    input_rows: list
    weight_cols: list

    def __post_init__(self):
        if not self.input_rows or not self.weight_cols:
            raise ValueError("a tile needs at least one row and one column")
        lengths = {cv.length for cv in self.input_rows}
        lengths |= {cv.length for cv in self.weight_cols}
        if len(lengths) != 1:
            raise ValueError("all tile streams must share one dense length")

    @property
    def length(self) -> int:
        return self.input_rows[0].length

    @property
    def mapped_rows(self) -> int:
        return len(self.input_rows)

    @property
    def mapped_cols(self) -> int:
        return len(self.weight_cols)


@dataclass
class StepReport:
    """Outcome of one cycle: which PEs executed, whether any retired, and how
    a stall (if any) was resolved."""

    executed: np.ndarray
    retired: int
    zero_progress: bool
    direct_fetch_pe: tuple | None
    all_done: bool


class PEArrayState:
    """Mutable per-tile state: stream cursors, pending effective indexes,
    accumulators, and shared-window bases/coverage."""

    def __init__(self, rows, cols, stream_eff_input, stream_eff_weight, stream_start,
                 row_values, row_val_start, col_values, col_val_start):
        self.rows = rows
        self.cols = cols
        self.pe_count = rows * cols
        self.stream_eff_input = np.ascontiguousarray(stream_eff_input, dtype=np.int64)
        self.stream_eff_weight = np.ascontiguousarray(stream_eff_weight, dtype=np.int64)
        self.stream_start = np.ascontiguousarray(stream_start, dtype=np.int64)
        self.row_values = np.ascontiguousarray(row_values, dtype=np.int8)
        self.row_val_start = np.ascontiguousarray(row_val_start, dtype=np.int64)
        self.col_values = np.ascontiguousarray(col_values, dtype=np.int8)
        self.col_val_start = np.ascontiguousarray(col_val_start, dtype=np.int64)
        if len(self.stream_start) != self.pe_count + 1:
            raise ValueError("stream_start must have rows*cols + 1 entries")
        p = self.pe_count
        self.cur = self.stream_start[:-1].copy()
        self.eff_input = np.full(p, -1, dtype=np.int64)
        self.eff_weight = np.full(p, -1, dtype=np.int64)
        self.done = np.zeros(p, dtype=bool)
        self.idle_last = np.zeros(p, dtype=bool)
        self.acc = np.zeros(p, dtype=np.int64)
        self.acc_flagged = np.zeros(p, dtype=bool)
        self.base_input = np.full(rows, -1, dtype=np.int64)
        self.base_weight = np.full(cols, -1, dtype=np.int64)
        self.covered_input = np.zeros(rows, dtype=np.int64)
        self.covered_weight = np.zeros(cols, dtype=np.int64)
        self.kernel_counters = np.zeros(kernels.N_COUNTERS, dtype=np.int64)

    @classmethod
    def from_tile(cls, tile: TileJob) -> "PEArrayState":
        row_bm = np.stack([cv.bitmap for cv in tile.input_rows])
        col_bm = np.stack([cv.bitmap for cv in tile.weight_cols])
        eff_i, eff_w, start = matching.tile_match_streams(row_bm, col_bm)
        row_values, row_start = _concat_values(tile.input_rows)
        col_values, col_start = _concat_values(tile.weight_cols)
        return cls(tile.mapped_rows, tile.mapped_cols, eff_i, eff_w, start,
                   row_values, row_start, col_values, col_start)

    @classmethod
    def from_streams(cls, streams, tile: TileJob) -> "PEArrayState":
        """Build from an explicit [rows][cols] grid of MatchStream objects.

        Intended for tests that need stream patterns a shared-bitmap tile
        cannot produce (stall construction). Indexes must stay within the
        tile's packed buffers.
        """
        rows, cols = len(streams), len(streams[0])
        if rows != tile.mapped_rows or cols != tile.mapped_cols:
            raise ValueError("stream grid does not match tile shape")
        flat = [streams[m][n] for m in range(rows) for n in range(cols)]
        start = np.zeros(rows * cols + 1, dtype=np.int64)
        np.cumsum([len(s) for s in flat], out=start[1:])
        eff_i = (np.concatenate([s.eff_input for s in flat])
                 if start[-1] else np.empty(0, np.int64))
        eff_w = (np.concatenate([s.eff_weight for s in flat])
                 if start[-1] else np.empty(0, np.int64))
        row_values, row_start = _concat_values(tile.input_rows)
        col_values, col_start = _concat_values(tile.weight_cols)
        state = cls(rows, cols, eff_i, eff_w, start,
                    row_values, row_start, col_values, col_start)
        row_len = np.diff(state.row_val_start)
        col_len = np.diff(state.col_val_start)
        for m in range(rows):
            for n in range(cols):
                stream = streams[m][n]
                if len(stream) and (
                    stream.eff_input.max() >= row_len[m]
                    or stream.eff_weight.max() >= col_len[n]
                ):
                    raise ValueError(f"PE({m},{n}): effective index beyond buffer")
        return state

    @property
    def cursors(self) -> np.ndarray:
        """Per-PE next-pair position relative to its own stream."""
        return self.cur - self.stream_start[:-1]

    @property
    def stream_lengths(self) -> np.ndarray:
        return np.diff(self.stream_start)

    @property
    def all_done(self) -> bool:
        return bool(self.done.all())

    def merge_kernel_counters(self, counters: Counters):
        buf = self.kernel_counters
        counters.cycles += int(buf[kernels.CYCLES])
        counters.active_macs += int(buf[kernels.ACTIVE])
        counters.idle_pe_cycles += int(buf[kernels.IDLE])
        counters.input_bytes_read += int(buf[kernels.IN_BYTES])
        counters.weight_bytes_read += int(buf[kernels.W_BYTES])
        counters.refill_events += int(buf[kernels.REFILLS])
        counters.zero_progress_events += int(buf[kernels.ZERO_PROG])
        counters.direct_fetch_events += int(buf[kernels.DIRECT])
        counters.acc_range_exceeded += int(buf[kernels.ACC_RANGE])
        buf[:] = 0


def _concat_values(streams):
    start = np.zeros(len(streams) + 1, dtype=np.int64)
    np.cumsum([cv.nnz for cv in streams], out=start[1:])
    if start[-1] == 0:
        return np.empty(0, np.int8), start
    return np.concatenate([cv.values for cv in streams]), start


def _refill(new_base, live, covered, lengths, win):
    """Fetch only the newly covered window entries; returns per-stream bytes."""
    hi = np.minimum(new_base + win, lengths)
    lo = np.maximum(covered, new_base)
    newly = np.where(live, np.maximum(hi - lo, 0), 0)
    np.maximum(covered, np.where(live, hi, covered), out=covered)
    return newly


def array_step(state: PEArrayState, cfg: SimConfig, counters: Counters) -> StepReport:
    """One cycle of the array; the pure-numpy reference path."""
    s = state
    win = cfg.shared_reg_size
    rows, cols = s.rows, s.cols

    advance = ~s.done & ~s.idle_last
    at_end = advance & (s.cur == s.stream_start[1:])
    retired = int(at_end.sum())
    if retired:
        s.done |= at_end
    load = advance & ~at_end
    if load.any():
        idx = s.cur[load]
        s.eff_input[load] = s.stream_eff_input[idx]
        s.eff_weight[load] = s.stream_eff_weight[idx]
        s.cur[load] += 1

    alive = ~s.done
    if not alive.any():
        return StepReport(np.zeros((rows, cols), bool), retired, False, None, True)

    alive_grid = alive.reshape(rows, cols)
    ei = np.where(alive, s.eff_input, _FAR).reshape(rows, cols)
    ew = np.where(alive, s.eff_weight, _FAR).reshape(rows, cols)
    new_bi = ei.min(axis=1)
    new_bw = ew.min(axis=0)
    row_live = new_bi < _FAR
    col_live = new_bw < _FAR

    in_new = _refill(new_bi, row_live, s.covered_input, np.diff(s.row_val_start), win)
    w_new = _refill(new_bw, col_live, s.covered_weight, np.diff(s.col_val_start), win)
    counters.input_bytes_read += int(in_new.sum())
    counters.weight_bytes_read += int(w_new.sum())
    counters.refill_events += int((in_new > 0).sum()) + int((w_new > 0).sum())
    s.base_input = np.where(row_live, new_bi, s.base_input)
    s.base_weight = np.where(col_live, new_bw, s.base_weight)

    off_i = ei - new_bi[:, None]
    off_w = ew - new_bw[None, :]
    can = alive_grid & (off_i < win) & (off_w < win)
    executed = int(can.sum())
    zero_progress = executed == 0 and retired == 0
    direct_pe = None
    if zero_progress:
        counters.zero_progress_events += 1
        if cfg.deadlock_policy == "error":
            raise DeadlockError(
                (m, n, int(off_i[m, n]), int(off_w[m, n]))
                for m in range(rows)
                for n in range(cols)
                if alive_grid[m, n]
            )
        cost = np.where(alive_grid, off_i + off_w, _FAR)
        p = int(cost.argmin())
        can.flat[p] = True
        executed = 1
        direct_pe = (p // cols, p % cols)
        counters.direct_fetch_events += 1
        counters.input_bytes_read += 1
        counters.weight_bytes_read += 1

    flat_can = can.reshape(-1)
    if executed:
        pes = np.flatnonzero(flat_can)
        m = pes // cols
        n = pes % cols
        vi = s.row_values[s.row_val_start[m] + s.eff_input[pes]].astype(np.int64)
        vw = s.col_values[s.col_val_start[n] + s.eff_weight[pes]].astype(np.int64)
        s.acc[pes] += vi * vw
        hot = (s.acc[pes] > _ACC24_MAX) | (s.acc[pes] < _ACC24_MIN)
        newly_flagged = hot & ~s.acc_flagged[pes]
        if newly_flagged.any():
            counters.acc_range_exceeded += int(newly_flagged.sum())
            s.acc_flagged[pes] = s.acc_flagged[pes] | hot

    counters.active_macs += executed
    counters.idle_pe_cycles += s.pe_count - executed
    counters.cycles += 1
    s.idle_last = alive & ~flat_can
    return StepReport(can, retired, zero_progress, direct_pe, False)


def _trace_record(state, report, cycle):
    s = state
    done = s.done.reshape(s.rows, s.cols)
    alive_rows = ~done.all(axis=1)
    alive_cols = ~done.all(axis=0)
    pes = []
    for m in range(s.rows):
        for n in range(s.cols):
            p = m * s.cols + n
            if done[m, n] and not report.executed[m, n]:
                pes.append({"row": m, "col": n, "status": "done",
                            "eff_input": None, "eff_weight": None,
                            "offset_input": None, "offset_weight": None})
                continue
            if report.executed[m, n]:
                status = "direct_fetch" if report.direct_fetch_pe == (m, n) else "exec"
            else:
                status = "idle"
            pes.append({
                "row": m, "col": n, "status": status,
                "eff_input": int(s.eff_input[p]),
                "eff_weight": int(s.eff_weight[p]),
                "offset_input": int(s.eff_input[p] - s.base_input[m]),
                "offset_weight": int(s.eff_weight[p] - s.base_weight[n]),
            })
    return {
        "cycle": cycle,
        "input_base": [int(b) if ok else None
                       for b, ok in zip(s.base_input, alive_rows)],
        "weight_base": [int(b) if ok else None
                        for b, ok in zip(s.base_weight, alive_cols)],
        "pe": pes,
    }


def _run_state(state, cfg, counters, backend, trace):
    backend = kernels.resolve_backend(backend)
    if backend == "numba" and trace is None:
        status = kernels.run_tile_compiled(
            state, cfg.shared_reg_size, cfg.deadlock_policy == "direct_fetch"
        )
        state.merge_kernel_counters(counters)
        if status != 0:
            alive = ~state.done
            off_i = state.eff_input - state.base_input[np.arange(state.pe_count) // state.cols]
            off_w = state.eff_weight - state.base_weight[np.arange(state.pe_count) % state.cols]
            raise DeadlockError(
                (int(p) // state.cols, int(p) % state.cols, int(off_i[p]), int(off_w[p]))
                for p in np.flatnonzero(alive)
            )
        return
    while True:
        report = array_step(state, cfg, counters)
        if report.all_done:
            break
        if trace is not None:
            trace(_trace_record(state, report, counters.cycles))


def run_tile(tile: TileJob, cfg: SimConfig, backend=None, trace=None):
    """Run one tile to completion.

    Returns (outputs int32 [mapped_rows x mapped_cols], Counters). A trace
    callback forces the stepping path and receives one record per cycle.
    """
    state = PEArrayState.from_tile(tile)
    counters = Counters()
    _run_state(state, cfg, counters, backend, trace)
    _check_read_once(state, counters)
    counters.output_bytes_written += state.pe_count * cfg.output_write_bytes
    if cfg.count_bitmap_bytes:
        per_stream = (tile.length + 7) // 8
        counters.input_bytes_read += tile.mapped_rows * per_stream
        counters.weight_bytes_read += tile.mapped_cols * per_stream
    out = state.acc.reshape(state.rows, state.cols)
    if out.size and (out.max() > np.iinfo(np.int32).max or out.min() < np.iinfo(np.int32).min):
        raise OverflowError("tile output exceeds 32-bit signed range")
    return out.astype(np.int32), counters


def _check_read_once(state, counters):
    # Window bases are monotone minima, so SRAM fetches can never exceed the
    # packed entry counts (plus direct-fetch bypasses, one byte per side).
    in_cap = int(state.row_val_start[-1]) + counters.direct_fetch_events
    w_cap = int(state.col_val_start[-1]) + counters.direct_fetch_events
    if counters.input_bytes_read > in_cap or counters.weight_bytes_read > w_cap:
        raise RuntimeError(
            "read-once violation: "
            f"input {counters.input_bytes_read}/{in_cap} "
            f"weight {counters.weight_bytes_read}/{w_cap}"
        )


def _as_int8_matrix(a, name):
    arr = np.asarray(a)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a 2-D matrix")
    if arr.dtype != np.int8:
        if arr.size and (arr.min() < -128 or arr.max() > 127):
            raise ValueError(f"{name} has entries outside signed 8-bit range")
        arr = arr.astype(np.int8)
    return arr


def simulate_matmul(a, b, cfg: SimConfig | None = None, backend=None, trace=None):
    """Sparse matmul through the full pipeline: compress, match, run tiles.

    Returns (c int32 [M x N], SimReport). c is bit-exact against the dense
    integer product.
    """
    cfg = cfg if cfg is not None else SimConfig()
    a = _as_int8_matrix(a, "A")
    b = _as_int8_matrix(b, "B")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"inner dimensions disagree: A is {a.shape}, B is {b.shape}"
        )
    m, k = a.shape
    n = b.shape[1]
    row_streams = [compress(a[i]) for i in range(m)]
    col_streams = [compress(b[:, j]) for j in range(n)]
    c = np.zeros((m, n), dtype=np.int32)
    total = Counters()
    for ti, m0 in enumerate(range(0, m, cfg.array_rows)):
        for tj, n0 in enumerate(range(0, n, cfg.array_cols)):
            tile = TileJob(
                row_streams[m0 : m0 + cfg.array_rows],
                col_streams[n0 : n0 + cfg.array_cols],
            )
            sink = None
            if trace is not None:
                def sink(rec, _ti=ti, _tj=tj):
                    rec["tile"] = [_ti, _tj]
                    trace(rec)
            out, tc = run_tile(tile, cfg, backend=backend, trace=sink)
            c[m0 : m0 + tile.mapped_rows, n0 : n0 + tile.mapped_cols] = out
            total.add(tc)
    report = analysis.build_report(
        m, n, k, cfg, total,
        nnz_input=int(np.count_nonzero(a)),
        nnz_weight=int(np.count_nonzero(b)),
    )
    return c, report
