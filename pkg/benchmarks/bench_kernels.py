#!/usr/bin/env python3
"""Compare the compiled and pure-Python kernel backends.

Times forward and backward convolution/pooling on the shapes the model
zoo actually runs, and reports the max absolute disagreement between
the two backends (they reduce in different orders, so tiny float
differences are expected).

Run:  python benchmarks/bench_kernels.py [--batch 64] [--reps 9]
"""

import argparse
import time

import numpy as np

from pea.kernels import get_backend

CASES = [
    # name, input NCHW, kernel, stride, padding, depthwise
    ("smallcnn conv1", (1, 16, 16), (16, 1, 3, 3), 1, 1, False),
    ("smallcnn conv2", (16, 8, 8), (32, 16, 3, 3), 1, 1, False),
    ("smallcnn conv3", (32, 4, 4), (32, 32, 3, 3), 1, 1, False),
    ("resnet stage2 conv", (16, 16, 16), (32, 16, 3, 3), 2, 1, False),
    ("mobile dw s2", (16, 16, 16), (16, 1, 3, 3), 2, 1, True),
    ("mobile pw", (16, 8, 8), (32, 16, 1, 1), 1, 0, False),
]


def _best(fn, *args, reps):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times) * 1e3


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--reps", type=int, default=9)
    args = ap.parse_args()

    py = get_backend("python")
    try:
        cy = get_backend("compiled")
    except Exception as e:
        print(f"compiled backend unavailable ({e}); nothing to compare")
        return

    rng = np.random.default_rng(0)
    header = f"{'case':<22} {'pass':<8} {'python ms':>10} {'compiled ms':>12} {'ratio':>7} {'max|diff|':>10}"
    print(header)
    print("-" * len(header))
    tot_py = tot_cy = 0.0
    for name, xshape, wshape, stride, pad, dw in CASES:
        x = rng.standard_normal((args.batch, *xshape)).astype(np.float32)
        w = rng.standard_normal(wshape).astype(np.float32)
        if dw:
            fwd_py, fwd_cy = py.depthwise_conv2d_forward, cy.depthwise_conv2d_forward
            bi_py, bi_cy = py.depthwise_conv2d_backward_input, cy.depthwise_conv2d_backward_input
            bk_py, bk_cy = py.depthwise_conv2d_backward_kernel, cy.depthwise_conv2d_backward_kernel
        else:
            fwd_py, fwd_cy = py.conv2d_forward, cy.conv2d_forward
            bi_py, bi_cy = py.conv2d_backward_input, cy.conv2d_backward_input
            bk_py, bk_cy = py.conv2d_backward_kernel, cy.conv2d_backward_kernel
        y = fwd_py(x, w, stride, pad)
        gy = rng.standard_normal(y.shape).astype(np.float32)
        rows = [
            ("fwd", (fwd_py, (x, w, stride, pad)), (fwd_cy, (x, w, stride, pad)),
             lambda: (fwd_py(x, w, stride, pad), fwd_cy(x, w, stride, pad))),
            ("bwd_in", (bi_py, (gy, w, x.shape, stride, pad)),
             (bi_cy, (gy, w, x.shape, stride, pad)),
             lambda: (bi_py(gy, w, x.shape, stride, pad), bi_cy(gy, w, x.shape, stride, pad))),
            ("bwd_k", (bk_py, (gy, x, w.shape, stride, pad)),
             (bk_cy, (gy, x, w.shape, stride, pad)),
             lambda: (bk_py(gy, x, w.shape, stride, pad), bk_cy(gy, x, w.shape, stride, pad))),
        ]
        for label, (fp, ap_), (fc, ac), both in rows:
            tp = _best(fp, *ap_, reps=args.reps)
            tc = _best(fc, *ac, reps=args.reps)
            a, b = both()
            diff = float(np.abs(a - b).max())
            tot_py += tp
            tot_cy += tc
            print(f"{name:<22} {label:<8} {tp:>10.3f} {tc:>12.3f} {tc / tp:>7.2f} {diff:>10.2e}")

    xp = rng.standard_normal((args.batch, 16, 16, 16)).astype(np.float32)
    yp, idx = py.maxpool2x2_forward(xp)
    tp = _best(py.maxpool2x2_forward, xp, reps=args.reps)
    tc = _best(cy.maxpool2x2_forward, xp, reps=args.reps)
    yc, idxc = cy.maxpool2x2_forward(xp)
    same = float(np.abs(yp - yc).max())
    tot_py += tp
    tot_cy += tc
    print(f"{'maxpool 2x2':<22} {'fwd':<8} {tp:>10.3f} {tc:>12.3f} {tc / tp:>7.2f} {same:>10.2e}")
    print("-" * len(header))
    print(f"{'TOTAL':<22} {'':<8} {tot_py:>10.3f} {tot_cy:>12.3f} {tot_cy / tot_py:>7.2f}")
    print("\nratio > 1: python (BLAS) faster; ratio < 1: compiled loops faster.")
    print("The default 'auto' selection routes dense convs to python and")
    print("depthwise conv + max pool to the compiled backend.")


if __name__ == "__main__":
    main()
