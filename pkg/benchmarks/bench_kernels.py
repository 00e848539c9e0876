"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--n 40] [--dim 64] [--repeat 50]

Also checks that both paths agree before timing them.  One end-to-end
number (a training epoch on the bundled fixture) is reported per backend by
re-running this script in a subprocess with ASTETAG_DISABLE_NUMBA set.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from astetag import kernels


def cases(n, dim, seed=0):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(n, dim))
    roles = rng.integers(0, 3, size=n)
    mask = np.triu(np.where(roles[:, None] == roles[None, :], 1, -1), 1).astype(np.int8)
    logits = rng.normal(size=(n * n, 5))
    gold = rng.integers(0, 5, size=n * n).astype(np.int64)
    w = np.ones(n * n)
    m = np.zeros((n, n), dtype=np.int8)
    for k in range(0, n - 3, 6):
        m[k, k + 2] = 2
        m[k + 1, k + 2] = 1
        m[k, k + 3] = 1
        m[k + 1, k + 3] = 1
    p = rng.normal(size=(dim, dim))
    g = rng.normal(size=(dim, dim))
    return {
        "decode_scan": (lambda f: f(m, 1, 2)),
        "contrastive": (lambda f: f(h, mask, 1.0, True)),
        "focal": (lambda f: f(logits, gold, w, 2.0)),
        "adam": (lambda f: f(p.copy(), g, np.zeros_like(p), np.zeros_like(p),
                             1e-3, 0.9, 0.999, 1e-8, 1)),
    }


PAIRS = {
    "decode_scan": ("decode_scan_nb", "decode_scan_np"),
    "contrastive": ("contrastive_fwd_bwd_nb", "contrastive_fwd_bwd_np"),
    "focal": ("focal_fwd_bwd_nb", "focal_fwd_bwd_np"),
    "adam": ("adam_update_nb", "adam_update_np"),
}


def epoch_time():
    import time

    from astetag import fixture_path
    from astetag.dataset import load_split
    from astetag.training import TrainConfig, train

    sp = load_split(fixture_path(), "train")
    train(TrainConfig(epochs=1), sp, sp, out=None)  # warm-up / jit
    t = time.perf_counter()
    train(TrainConfig(epochs=3), sp, sp, out=None)
    return (time.perf_counter() - t) / 3


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=40)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--epoch-only", action="store_true", help=argparse.SUPPRESS)
    ap.add_argument("--no-epoch", action="store_true", help="skip the end-to-end timing")
    args = ap.parse_args()
    if args.epoch_only:
        print(f"{epoch_time():.4f}")
        return

    print(f"backend in use: {kernels.BACKEND}; n={args.n} dim={args.dim}")
    if not kernels.HAS_NUMBA:
        print("numba not importable; nothing to compare")
        return
    print(f"{'kernel':<14}{'numba us':>12}{'numpy us':>12}{'speedup':>10}")
    for name, run in cases(args.n, args.dim).items():
        nb, npy = (getattr(kernels, a) for a in PAIRS[name])
        a, b = run(nb), run(npy)
        if name != "adam":
            for x, y in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
                np.testing.assert_allclose(x, y, rtol=1e-9, atol=1e-12)
        t_nb = min(timeit.repeat(lambda: run(nb), number=args.repeat, repeat=3)) / args.repeat
        t_np = min(timeit.repeat(lambda: run(npy), number=args.repeat, repeat=3)) / args.repeat
        print(f"{name:<14}{1e6 * t_nb:>12.1f}{1e6 * t_np:>12.1f}{t_np / t_nb:>10.2f}")

    if args.no_epoch:
        return
    for label, flag in (("numba", ""), ("numpy", "1")):
        env = dict(os.environ, ASTETAG_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, __file__, "--epoch-only"], env=env,
                             capture_output=True, text=True, check=True)
        print(f"fixture epoch ({label}): {float(res.stdout.strip()):.3f} s")


if __name__ == "__main__":
    main()
