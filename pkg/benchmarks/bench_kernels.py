"""Time the compiled and numpy simulator kernels on the same GEMMs.

    python benchmarks/bench_kernels.py [--repeat 3] [--sizes 64,128,256]
"""

import argparse
import time

import numpy as np

from vdbb import codec
from vdbb.codec import DbbFormat
from vdbb.sim import backend, parse_config, simulate_gemm

CASES = [
    ("1x1x1_32x64", None),
    ("4x8x4_4x4", None),
    ("4x8x4_4x8_DBB", None),
    ("4x8x8_4x8_VDBB", 3),
]


def operands(cfg, size, run_nnz, rng):
    act = rng.integers(-128, 128, (size, size)).astype(np.int8)
    act[rng.random(act.shape) < 0.5] = 0
    w = rng.integers(-128, 128, (size, size)).astype(np.int8)
    if not cfg.mode.sparse:
        return act, w
    fmt = DbbFormat(cfg.b, run_nnz or cfg.sdp_width)
    return act, codec.encode_matrix(codec.prune_to_dbb(w, fmt), fmt)


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--sizes", default="64,128,256")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    names = sorted(backend.BACKENDS)
    if "c" not in names:
        print("compiled kernel not built; timing the numpy kernel only")
    header = f"{'config':<18}{'gemm':>10}" + "".join(f"{n + ' (s)':>14}" for n in names)
    if len(names) > 1:
        header += f"{'speedup':>10}"
    print(header)
    rng = np.random.default_rng(args.seed)
    for size in (int(s) for s in args.sizes.split(",")):
        for text, run_nnz in CASES:
            cfg = parse_config(text)
            act, wt = operands(cfg, size, run_nnz, rng)
            times, outs = {}, {}
            for name in names:
                times[name] = best_time(lambda: simulate_gemm(cfg, act, wt, run_nnz, backend_name=name), args.repeat)
                outs[name] = simulate_gemm(cfg, act, wt, run_nnz, backend_name=name)
            ref = outs[names[0]]
            for name in names[1:]:
                o = outs[name]
                if not np.array_equal(o.output, ref.output) or o.summary() != ref.summary():
                    raise SystemExit(f"backends disagree on {text} at {size}")
            row = f"{text:<18}{size:>10}" + "".join(f"{times[n]:>14.4f}" for n in names)
            if len(names) > 1:
                row += f"{times['python'] / times['c']:>9.1f}x"
            print(row)


if __name__ == "__main__":
    main()
