"""Compare the numba and pure-numpy convolution kernel paths.

Run:  python3 benchmarks/bench_kernels.py [--repeats N]

Times forward, input-gradient and weight-gradient passes at the shapes the
network actually uses, on both backends, and prints a table plus the max
absolute cross-backend deviation.
"""

from __future__ import annotations

import argparse
import os
import time

import numpy as np

os.environ.setdefault("SPHEREMAP_THREADS", "0")

from spheremap import backend  # noqa: E402
from spheremap import kernels  # noqa: E402

# (label, N, C_in, H, W, C_out, KH, stride, padding)
SHAPES = [
    ("stem 3->8", 4, 3, 96, 368, 8, 3, 1, 1),
    ("enc 8->16", 4, 8, 48, 184, 16, 3, 1, 1),
    ("mid 64->128", 4, 64, 12, 46, 128, 3, 1, 1),
    ("head 8->1", 4, 8, 96, 368, 1, 1, 1, 0),
]


def _time(fn, repeats):
    fn()  # warmup / jit
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(repeats: int):
    rng = np.random.default_rng(0)
    rows = []
    for label, n, ci, h, w, co, k, stride, pad in SHAPES:
        x = rng.standard_normal((n, ci, h, w)).astype(np.float32)
        wt = rng.standard_normal((co, ci, k, k)).astype(np.float32) * 0.1
        out_ref = {}
        timings = {}
        for name, flag in (("numba", "0"), ("numpy", "1")):
            os.environ["SPHEREMAP_NO_NUMBA"] = flag
            if name == "numba" and not backend.use_numba():
                timings[name] = None
                continue
            y = kernels.conv_forward(x, wt, stride, pad)
            g = np.ones_like(y)
            out_ref[name] = (
                y,
                kernels.conv_input_grad(g, wt, (h, w), stride, pad),
                kernels.conv_weight_grad(x, g, k, k, stride, pad),
            )
            timings[name] = (
                _time(lambda: kernels.conv_forward(x, wt, stride, pad), repeats),
                _time(lambda: kernels.conv_input_grad(g, wt, (h, w), stride, pad), repeats),
                _time(lambda: kernels.conv_weight_grad(x, g, k, k, stride, pad), repeats),
            )
        dev = 0.0
        if len(out_ref) == 2:
            dev = max(float(np.abs(a - b).max())
                      for a, b in zip(out_ref["numba"], out_ref["numpy"]))
        rows.append((label, timings, dev))
    os.environ.pop("SPHEREMAP_NO_NUMBA", None)
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    rows = bench(args.repeats)
    hdr = f"{'shape':<14} {'pass':<8} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}"
    print(hdr)
    print("-" * len(hdr))
    for label, timings, dev in rows:
        for i, pname in enumerate(("forward", "in-grad", "w-grad")):
            nb = timings.get("numba")
            nq = timings["numpy"]
            if nb is None:
                print(f"{label:<14} {pname:<8} {'n/a':>10} {nq[i]*1e3:>10.2f} {'':>8}")
            else:
                print(f"{label:<14} {pname:<8} {nb[i]*1e3:>10.2f} {nq[i]*1e3:>10.2f} "
                      f"{nq[i]/nb[i]:>8.2f}")
        print(f"{label:<14} max |numba - numpy| = {dev:.3e}")
    print()


if __name__ == "__main__":
    main()
