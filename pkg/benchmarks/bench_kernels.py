"""Benchmark the numba kernels against their pure-numpy twins.

Usage:
    python3 benchmarks/bench_kernels.py [--repeats 200] [--batch 64] [--dim 1024]

Reports per-call time for each hot kernel on both backends plus the
speedup factor.  The first numba call compiles (cached on disk), so each
kernel is warmed up before timing.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from codeflow import kernels


def time_call(fn, args, repeats):
    fn(*args)  # warmup (JIT compile / cache load)
    start = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - start) / repeats


def build_cases(batch, dim, tokens, width):
    rng = np.random.default_rng(0)
    flat = rng.normal(size=batch * dim)
    mat = lambda: rng.normal(size=(batch, dim))
    x3 = rng.normal(size=(batch, tokens, width))
    scale = rng.normal(size=(batch, width)) * 0.1
    shift = rng.normal(size=(batch, width)) * 0.1
    _, rms = kernels.impls("numpy")["rmsnorm_mod_fwd"](x3, scale, shift, 1e-6)
    nparams = 500_000
    p = rng.normal(size=nparams).astype(np.float32).astype(np.float64)
    g = rng.normal(size=nparams)
    return [
        ("silu_fwd", (flat,)),
        ("silu_bwd", (flat, rng.normal(size=flat.shape))),
        ("perturb", (mat(), mat(), rng.uniform(0, 1, batch), rng.uniform(0, 0.2, batch), mat())),
        ("euler_update", (mat(), mat(), mat(), -3.7, 0.62, 1.9, 0.005)),
        ("rmsnorm_mod_fwd", (x3, scale, shift, 1e-6)),
        ("rmsnorm_mod_bwd", (x3, rms, scale, rng.normal(size=x3.shape))),
        ("adam_step", (p, g, np.zeros(nparams), np.zeros(nparams),
                       1e-3, 0.9, 0.999, 1e-8, 0.1, 0.002, 1.0)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    parser.add_argument("--batch", type=int, default=64)
    parser.add_argument("--dim", type=int, default=1024)
    parser.add_argument("--tokens", type=int, default=16)
    parser.add_argument("--width", type=int, default=256)
    args = parser.parse_args()

    numpy_impls = kernels.impls("numpy")
    try:
        numba_impls = kernels.impls("numba")
    except Exception as e:  # numba unavailable
        print(f"numba backend unavailable ({e}); nothing to compare")
        return

    cases = build_cases(args.batch, args.dim, args.tokens, args.width)
    print(f"batch={args.batch} dim={args.dim} tokens={args.tokens} "
          f"width={args.width} repeats={args.repeats}\n")
    print(f"{'kernel':<18} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for name, case_args in cases:
        # adam_step mutates its buffers; give each backend private copies
        np_args = tuple(a.copy() if isinstance(a, np.ndarray) else a for a in case_args)
        nb_args = tuple(a.copy() if isinstance(a, np.ndarray) else a for a in case_args)
        t_np = time_call(numpy_impls[name], np_args, args.repeats)
        t_nb = time_call(numba_impls[name], nb_args, args.repeats)
        print(f"{name:<18} {t_np * 1e6:>10.1f}us {t_nb * 1e6:>10.1f}us "
              f"{t_np / t_nb:>8.2f}x")


if __name__ == "__main__":
    main()
