"""Time the compiled and numpy kernel backends on training-sized inputs.

    python bench/bench_kernels.py [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from sclifd import kernels


def cases(rng):
    z = rng.normal(size=(128, 10))          # one 2N batch at batch_size=64
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    t = rng.normal(size=z.shape)
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    labels = rng.integers(0, 10, 128)
    feats = rng.normal(size=(500, 10))      # a normal-class training set
    ctx = rng.normal(size=(600, 10))
    ctx_labels = rng.integers(0, 10, 600)
    q = np.flatnonzero(ctx_labels == 0)
    return {
        "scl_loss_grad (2N=128)": ("scl_loss_grad", (z, labels, 0.07)),
        "kd_loss_grad (2N=128)": ("kd_loss_grad", (t, z, 0.07)),
        "herding_order (n=500, m=50)": ("herding_order", (feats, 50)),
        "majority_counts (600 ctx, 5-NN)": ("majority_counts", (ctx, ctx_labels, q, 5)),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the numpy backend is available")
    table = cases(np.random.default_rng(0))
    names = sorted(backends)
    print(f"{'kernel':<34}" + "".join(f"{n + ' ms':>14}" for n in names) + f"{'speedup':>10}")
    for label, (fn, fargs) in table.items():
        ms = {}
        for n in names:
            f = getattr(backends[n], fn)
            ms[n] = 1e3 * min(timeit.repeat(lambda: f(*fargs), number=1, repeat=args.repeat))
        speed = f"{ms['python'] / ms['cython']:9.1f}x" if "cython" in ms else ""
        print(f"{label:<34}" + "".join(f"{ms[n]:14.3f}" for n in names) + speed)


if __name__ == "__main__":
    main()
