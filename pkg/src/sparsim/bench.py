"""Backend micro-benchmark: compiled kernel vs pure-numpy stepping.

    python -m sparsim.bench --m 512 --k 512 --n 512 \
        --input-sparsity 0.5 --weight-sparsity 0.75 --repeat 3

Times simulate_matmul end to end (compression, matching, cycle loop) per
backend and prints a small table. The first compiled call is warmed outside
the timed region so JIT compilation is excluded.
"""

import argparse
import time

from . import kernels
from .engine import SimConfig, simulate_matmul
from .workload import gen_random


def _time_backend(a, b, cfg, backend, repeat):
    best = float("inf")
    cycles = 0
    for _ in range(repeat):
        t0 = time.perf_counter()
        _, report = simulate_matmul(a, b, cfg, backend=backend)
        best = min(best, time.perf_counter() - t0)
        cycles = report.counters.cycles
    return best, cycles


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="python -m sparsim.bench",
                                 description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=512)
    ap.add_argument("--k", type=int, default=512)
    ap.add_argument("--n", type=int, default=512)
    ap.add_argument("--input-sparsity", type=float, default=0.5)
    ap.add_argument("--weight-sparsity", type=float, default=0.75)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    a = gen_random(args.m, args.k, args.input_sparsity, args.seed)
    b = gen_random(args.k, args.n, args.weight_sparsity, args.seed + 1)
    cfg = SimConfig()

    backends = ["numpy"]
    if kernels.HAVE_NUMBA:
        backends.insert(0, "numba")
        simulate_matmul(a[:16, :64], b[:64, :16], cfg, backend="numba")  # warm JIT
    else:
        print("numba not importable; benchmarking numpy only")

    print(f"workload: {args.m}x{args.k}x{args.n}, "
          f"sparsity {args.input_sparsity}/{args.weight_sparsity}, "
          f"best of {args.repeat}")
    print(f"{'backend':<8} {'seconds':>10} {'cycles':>12} {'cycles/s':>14}")
    results = {}
    for backend in backends:
        secs, cycles = _time_backend(a, b, cfg, backend, args.repeat)
        results[backend] = secs
        print(f"{backend:<8} {secs:>10.3f} {cycles:>12} {cycles / secs:>14.0f}")
    if len(results) == 2:
        print(f"numba speedup over numpy: {results['numpy'] / results['numba']:.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
