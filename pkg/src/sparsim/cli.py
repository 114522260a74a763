"""Command-line driver: single runs, sparsity sweeps, oracle verification,
and per-cycle traces.

Exit codes: 0 success, 2 usage, 3 file I/O or format, 4 dimension mismatch,
5 verification failure, 6 deadlock abort.
"""

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import analysis, kernels
from .engine import DeadlockError, DimensionError, SimConfig, simulate_matmul
from .workload import MatrixFileError, gen_random, load_matrix

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DIM = 4
EXIT_VERIFY = 5
EXIT_DEADLOCK = 6

SWEEP_COLUMNS = [
    "input_sparsity",
    "weight_sparsity",
    "utilization",
    "speedup",
    "mapm",
    "sparten_mapm",
    "zero_progress_events",
]

DEFAULT_VERIFY_DIMS = [4, 16, 17, 64, 128]
DEFAULT_VERIFY_SPARSITIES = [0.0, 0.25, 0.5, 0.75, 0.95]
DEFAULT_TRACE_CAP = 200_000


@dataclass
class SweepSpec:
    """One sweep grid: sparsity lists, matmul dims, seeds per cell."""

    input_sparsities: list
    weight_sparsities: list
    m: int
    n: int
    k: int
    seeds: int = 1
    base_seed: int = 0
    cfg: SimConfig = field(default_factory=SimConfig)

    def __post_init__(self):
        if not self.input_sparsities or not self.weight_sparsities:
            raise ValueError("sparsity lists must be non-empty")
        for s in list(self.input_sparsities) + list(self.weight_sparsities):
            if not 0.0 <= s <= 1.0:
                raise ValueError(f"sparsity {s} outside [0, 1]")
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")


def _add_config_flags(p):
    g = p.add_argument_group("array configuration")
    g.add_argument("--array-rows", type=int, default=16)
    g.add_argument("--array-cols", type=int, default=16)
    g.add_argument("--shared-reg-size", type=int, default=8,
                   help="shared window capacity per row/column")
    g.add_argument("--segment-length", type=int, default=64,
                   help="bitmap window width for chunked index matching")
    g.add_argument("--output-write-bytes", type=int, default=1)
    g.add_argument("--count-bitmap-bytes", action="store_true",
                   help="charge ceil(K/8) metadata bytes per stream")
    g.add_argument("--deadlock-policy", choices=["direct_fetch", "error"],
                   default="direct_fetch")
    g.add_argument("--seed", type=int, default=0,
                   help="base RNG seed for generated workloads")
    g.add_argument("--backend", choices=["numba", "numpy"], default=None,
                   help="override SPARSIM_BACKEND for this run")


def _config_from_args(args) -> SimConfig:
    return SimConfig(
        array_rows=args.array_rows,
        array_cols=args.array_cols,
        shared_reg_size=args.shared_reg_size,
        segment_length=args.segment_length,
        output_write_bytes=args.output_write_bytes,
        count_bitmap_bytes=args.count_bitmap_bytes,
        deadlock_policy=args.deadlock_policy,
        rng_seed=args.seed,
    )


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="sparsim",
        description="Cycle-level simulator for a bitmap-compressed sparse "
                    "matmul PE array with shared operand windows.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one stored matmul, emit a JSON report")
    p_run.add_argument("a_path", help="left operand (M x K)")
    p_run.add_argument("b_path", help="right operand (K x N)")
    _add_config_flags(p_run)
    p_run.set_defaults(fn=cmd_run)

    p_sweep = sub.add_parser("sweep", help="sparsity grid sweep, emit CSV")
    p_sweep.add_argument("--input-sparsities", default="0.5,0.6,0.7",
                         help="comma list of input sparsity fractions")
    p_sweep.add_argument("--weight-sparsities", default="0.5,0.6,0.7")
    p_sweep.add_argument("-M", type=int, default=1024)
    p_sweep.add_argument("-N", type=int, default=1024)
    p_sweep.add_argument("-K", type=int, default=1024)
    p_sweep.add_argument("--seeds", type=int, default=1, help="seeds per grid cell")
    p_sweep.add_argument("--output", default=None, help="CSV path (default stdout)")
    _add_config_flags(p_sweep)
    p_sweep.set_defaults(fn=cmd_sweep)

    p_verify = sub.add_parser("verify",
                              help="compare the simulator against the dense integer oracle")
    p_verify.add_argument("--dims", default=",".join(map(str, DEFAULT_VERIFY_DIMS)),
                          help="comma list of square dims (M=N=K)")
    p_verify.add_argument("--sparsities",
                          default=",".join(map(str, DEFAULT_VERIFY_SPARSITIES)))
    p_verify.add_argument("--seeds", type=int, default=5)
    _add_config_flags(p_verify)
    p_verify.set_defaults(fn=cmd_verify)

    p_trace = sub.add_parser("trace", help="emit per-cycle records (small workloads)")
    p_trace.add_argument("a_path")
    p_trace.add_argument("b_path")
    p_trace.add_argument("--cycles", default=None, metavar="LO:HI",
                         help="1-based inclusive per-tile cycle range")
    p_trace.add_argument("--trace-cap", type=int, default=DEFAULT_TRACE_CAP,
                         help="refuse workloads whose PE-cycle bound exceeds this")
    _add_config_flags(p_trace)
    p_trace.set_defaults(fn=cmd_trace)

    return ap


def _parse_fraction_list(text):
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise ValueError(f"not a comma-separated number list: {text!r}") from None


def cmd_run(args, out=None) -> int:
    out = out if out is not None else sys.stdout
    a = load_matrix(args.a_path)
    b = load_matrix(args.b_path)
    cfg = _config_from_args(args)
    _, report = simulate_matmul(a, b, cfg, backend=args.backend)
    doc = report.to_dict()
    doc["backend"] = kernels.resolve_backend(args.backend)
    doc["config"] = {
        "array_rows": cfg.array_rows,
        "array_cols": cfg.array_cols,
        "shared_reg_size": cfg.shared_reg_size,
        "segment_length": cfg.segment_length,
        "output_write_bytes": cfg.output_write_bytes,
        "count_bitmap_bytes": cfg.count_bitmap_bytes,
        "deadlock_policy": cfg.deadlock_policy,
    }
    json.dump(doc, out, indent=2, sort_keys=True)
    out.write("\n")
    return EXIT_OK


def _cell_seed(base_seed, i, j, s, operand):
    return np.random.SeedSequence([base_seed, i, j, s, operand])


def sweep_cells(spec: SweepSpec, backend=None):
    """Run a sweep grid; yields one averaged row dict per cell, in grid order."""
    for i, si in enumerate(spec.input_sparsities):
        for j, sw in enumerate(spec.weight_sparsities):
            utils, speeds, mapms, sp_mapms, zero_progress = [], [], [], [], []
            for s in range(spec.seeds):
                a = gen_random(spec.m, spec.k, si, _cell_seed(spec.base_seed, i, j, s, 0))
                b = gen_random(spec.k, spec.n, sw, _cell_seed(spec.base_seed, i, j, s, 1))
                _, rep = simulate_matmul(a, b, spec.cfg, backend=backend)
                utils.append(rep.utilization)
                speeds.append(None if rep.speedup_unbounded else rep.speedup)
                mapms.append(rep.mapm)
                sp_mapms.append(rep.sparten_mapm)
                zero_progress.append(rep.counters.zero_progress_events)
            yield {
                "input_sparsity": si,
                "weight_sparsity": sw,
                "utilization": _mean_fraction(utils),
                "speedup": _mean_fraction(speeds, none_is_inf=True),
                "mapm": _mean_fraction(mapms),
                "sparten_mapm": _mean_fraction(sp_mapms),
                "zero_progress_events": sum(zero_progress) / len(zero_progress),
            }


def _mean_fraction(values, none_is_inf=False):
    if any(v is None for v in values):
        return float("inf") if none_is_inf else float("nan")
    return float(sum(values, Fraction(0)) / len(values))


def cmd_sweep(args, out=None) -> int:
    out = out if out is not None else sys.stdout
    try:
        spec = SweepSpec(
            input_sparsities=_parse_fraction_list(args.input_sparsities),
            weight_sparsities=_parse_fraction_list(args.weight_sparsities),
            m=args.M, n=args.N, k=args.K,
            seeds=args.seeds,
            base_seed=args.seed,
            cfg=_config_from_args(args),
        )
    except ValueError as exc:
        print(f"sparsim sweep: {exc}", file=sys.stderr)
        return EXIT_USAGE
    sink = open(args.output, "w", newline="") if args.output else out
    try:
        writer = csv.DictWriter(sink, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in sweep_cells(spec, backend=args.backend):
            writer.writerow(row)
    finally:
        if args.output:
            sink.close()
    return EXIT_OK


def verify_cases(dims, sparsities, seeds, cfg, backend=None, base_seed=0):
    """Yield (case description, simulated, oracle) across the grid."""
    for d_idx, d in enumerate(dims):
        for s_idx, sp in enumerate(sparsities):
            for s in range(seeds):
                a = gen_random(d, d, sp, _cell_seed(base_seed, d_idx, s_idx, s, 0))
                b = gen_random(d, d, sp, _cell_seed(base_seed, d_idx, s_idx, s, 1))
                c, _ = simulate_matmul(a, b, cfg, backend=backend)
                oracle = a.astype(np.int64) @ b.astype(np.int64)
                yield f"dim={d} sparsity={sp} seed={s}", c, oracle


def cmd_verify(args, out=None) -> int:
    out = out if out is not None else sys.stdout
    try:
        dims = [int(t) for t in args.dims.split(",") if t.strip() != ""]
        sparsities = _parse_fraction_list(args.sparsities)
    except ValueError as exc:
        print(f"sparsim verify: {exc}", file=sys.stderr)
        return EXIT_USAGE
    cfg = _config_from_args(args)
    started = time.perf_counter()
    cases = 0
    for desc, c, oracle in verify_cases(dims, sparsities, args.seeds, cfg,
                                        backend=args.backend, base_seed=args.seed):
        cases += 1
        if not np.array_equal(c, oracle):
            bad = np.argwhere(c != oracle)[0]
            print(f"verify: FAIL at {desc}, first mismatch at "
                  f"({bad[0]}, {bad[1]}): got {c[tuple(bad)]}, "
                  f"expected {oracle[tuple(bad)]}", file=out)
            return EXIT_VERIFY
    elapsed = time.perf_counter() - started
    print(f"verify: PASS ({cases} cases, {elapsed:.1f}s)", file=out)
    return EXIT_OK


def _parse_cycle_range(text):
    lo, _, hi = text.partition(":")
    return int(lo) if lo else 1, int(hi) if hi else None


def cmd_trace(args, out=None) -> int:
    out = out if out is not None else sys.stdout
    a = load_matrix(args.a_path)
    b = load_matrix(args.b_path)
    cfg = _config_from_args(args)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions disagree: {a.shape} vs {b.shape}")
    bound = _pe_cycle_bound(a, b, cfg)
    if bound > args.trace_cap:
        print(f"sparsim trace: workload bound {bound} PE-cycles exceeds cap "
              f"{args.trace_cap}; trace smaller dims or raise --trace-cap",
              file=sys.stderr)
        return EXIT_USAGE
    try:
        lo, hi = (1, None) if args.cycles is None else _parse_cycle_range(args.cycles)
    except ValueError:
        print(f"sparsim trace: bad --cycles range {args.cycles!r}, want LO:HI",
              file=sys.stderr)
        return EXIT_USAGE

    def sink(rec):
        if rec["cycle"] < lo or (hi is not None and rec["cycle"] > hi):
            return
        out.write(json.dumps(rec, sort_keys=True, separators=(",", ":")))
        out.write("\n")

    simulate_matmul(a, b, cfg, backend="numpy", trace=sink)
    return EXIT_OK


def _pe_cycle_bound(a, b, cfg):
    # Cycles per tile never exceed matches + mapped PEs (every cycle either
    # executes a match or retires a PE), so this bounds the record volume.
    total = 0
    m, k = a.shape
    n = b.shape[1]
    for m0 in range(0, m, cfg.array_rows):
        for n0 in range(0, n, cfg.array_cols):
            rows = min(cfg.array_rows, m - m0)
            cols = min(cfg.array_cols, n - n0)
            matches = analysis.total_matches(
                a[m0 : m0 + rows], b[:, n0 : n0 + cols]
            )
            total += rows * cols * (matches + rows * cols)
    return total


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except (MatrixFileError, OSError) as exc:
        print(f"sparsim: {exc}", file=sys.stderr)
        return EXIT_IO
    except DimensionError as exc:
        print(f"sparsim: {exc}", file=sys.stderr)
        return EXIT_DIM
    except DeadlockError as exc:
        print(f"sparsim: {exc}", file=sys.stderr)
        return EXIT_DEADLOCK


def console_main():
    sys.exit(main())


if __name__ == "__main__":
    console_main()
