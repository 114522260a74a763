"""Derived metrics and reference cost models.

All ratio metrics are exact rationals (fractions.Fraction); callers render
decimals at the presentation layer. Workloads with zero executed MACs or zero
cycles get explicit None markers instead of a division.

MAPM (memory access per MAC) is total SRAM buffer bytes moved divided by
executed MACs. Two reference points frame the simulated number: a dense
output-stationary array that broadcasts operands (full reuse), and a
dot-product machine that reuses only outputs, paying two operand bytes per
MAC.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "SimReport",
    "build_report",
    "dense_baseline",
    "mapm",
    "sparten_baseline",
    "speedup_ratio",
    "utilization",
]


def mapm(counters) -> Fraction | None:
    """Bytes moved per executed MAC; None when no MAC executed."""
    if counters.active_macs == 0:
        return None
    total = (
        counters.input_bytes_read
        + counters.weight_bytes_read
        + counters.output_bytes_written
    )
    return Fraction(total, counters.active_macs)


def utilization(counters, mapped_pe_count: int | None = None) -> Fraction | None:
    """Executed MACs over PE-cycles; None when no cycle ran.

    With mapped_pe_count the denominator is cycles * mapped (single tile).
    Without it, the aggregated identity active + idle == sum(cycles * mapped)
    is used, which is exact across tiles of different mapped sizes.
    """
    if mapped_pe_count is not None:
        if counters.cycles == 0:
            return None
        return Fraction(counters.active_macs, counters.cycles * mapped_pe_count)
    denom = counters.active_macs + counters.idle_pe_cycles
    if denom == 0:
        return None
    return Fraction(counters.active_macs, denom)


def dense_baseline(m: int, n: int, k: int, cfg) -> tuple[int, Fraction]:
    """Cycles and MAPM of the dense broadcast array on the same problem.

    Every tile streams k entries per mapped row and column once and writes its
    outputs back; edge tiles broadcast only their mapped rows/columns.
    """
    if m < 1 or n < 1 or k < 1:
        raise ValueError("dense baseline needs dims >= 1")
    row_tiles = math.ceil(m / cfg.array_rows)
    col_tiles = math.ceil(n / cfg.array_cols)
    cycles = row_tiles * col_tiles * k
    operand_bytes = m * k * col_tiles + n * k * row_tiles
    out_bytes = m * n * cfg.output_write_bytes
    return cycles, Fraction(operand_bytes + out_bytes, m * n * k)


def _pack_nonzero_rows(mat) -> np.ndarray:
    return np.packbits(mat != 0, axis=1, bitorder="little")


def total_matches(a, b) -> int:
    """Non-zero multiplies summed over all output elements (popcount of every
    row/column bitmap AND)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError("operand shapes disagree")
    if a.size == 0 or b.size == 0:
        return 0
    rows = _pack_nonzero_rows(a)
    cols = _pack_nonzero_rows(np.ascontiguousarray(b.T))
    total = 0
    chunk = max(1, (8 << 20) // max(1, rows.shape[0] * rows.shape[1]))
    for j0 in range(0, cols.shape[0], chunk):
        both = rows[:, None, :] & cols[None, j0 : j0 + chunk, :]
        total += int(np.bitwise_count(both).sum())
    return total


def sparten_baseline(a, b, cfg) -> tuple[Fraction | None, int]:
    """Dot-product machine model: two operand bytes per MAC plus one
    output-stationary writeback per output; no cross-PE operand sharing.

    Returns (mapm, ideal_cycles) with ideal_cycles the matches ceil-divided
    over the configured PE count (context only). mapm is None when the
    workload has no matches.
    """
    t = total_matches(a, b)
    pe_count = cfg.array_rows * cfg.array_cols
    ideal_cycles = math.ceil(t / pe_count) if t else 0
    m, n = np.asarray(a).shape[0], np.asarray(b).shape[1]
    if t == 0:
        return None, ideal_cycles
    return Fraction(2 * t + m * n * cfg.output_write_bytes, t), ideal_cycles


def sparten_mapm_from_matches(t: int, m: int, n: int, output_write_bytes: int) -> Fraction | None:
    if t == 0:
        return None
    return Fraction(2 * t + m * n * output_write_bytes, t)


def speedup_ratio(dense_cycles: int, simulated_cycles: int) -> Fraction | None:
    """Dense-baseline cycles over simulated cycles; None when the simulation
    consumed no cycles (reported as unbounded, not divided)."""
    if simulated_cycles == 0:
        return None
    return Fraction(dense_cycles, simulated_cycles)


@dataclass
class SimReport:
    """Aggregated run summary; ratio fields are exact Fractions or None."""

    counters: object
    mapm: Fraction | None
    utilization: Fraction | None
    dense_cycles: int
    speedup: Fraction | None
    speedup_unbounded: bool
    sparten_mapm: Fraction | None
    m: int
    n: int
    k: int
    input_density: Fraction | None
    weight_density: Fraction | None

    def to_dict(self) -> dict:
        def dec(fr):
            return None if fr is None else float(fr)

        def exact(fr):
            return None if fr is None else f"{fr.numerator}/{fr.denominator}"

        return {
            "m": self.m,
            "n": self.n,
            "k": self.k,
            "input_density": dec(self.input_density),
            "weight_density": dec(self.weight_density),
            "counters": self.counters.as_dict(),
            "mapm": dec(self.mapm),
            "utilization": dec(self.utilization),
            "dense_cycles": self.dense_cycles,
            "speedup": dec(self.speedup),
            "speedup_unbounded": self.speedup_unbounded,
            "sparten_mapm": dec(self.sparten_mapm),
            "exact": {
                "mapm": exact(self.mapm),
                "utilization": exact(self.utilization),
                "speedup": exact(self.speedup),
                "sparten_mapm": exact(self.sparten_mapm),
            },
        }


def build_report(m, n, k, cfg, counters, nnz_input, nnz_weight) -> SimReport:
    """Assemble a SimReport from aggregated counters.

    The dot-product reference MAPM is derived from active_macs, which equals
    the total match count (every match executes exactly once).
    """
    if m >= 1 and n >= 1 and k >= 1:
        dense_cycles, _ = dense_baseline(m, n, k, cfg)
    else:
        dense_cycles = 0
    sp = speedup_ratio(dense_cycles, counters.cycles)
    return SimReport(
        counters=counters,
        mapm=mapm(counters),
        utilization=utilization(counters),
        dense_cycles=dense_cycles,
        speedup=sp,
        speedup_unbounded=sp is None and dense_cycles > 0,
        sparten_mapm=sparten_mapm_from_matches(
            counters.active_macs, m, n, cfg.output_write_bytes
        ),
        m=m,
        n=n,
        k=k,
        input_density=Fraction(nnz_input, m * k) if m * k else None,
        weight_density=Fraction(nnz_weight, k * n) if k * n else None,
    )
