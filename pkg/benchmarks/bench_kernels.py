"""Benchmark the compiled kernel backend against the pure-NumPy fallback.

Runs the hot array kernels (patch extraction/scatter, 2x2 max pooling,
bilinear resampling) on training-shaped inputs and reports per-call times
plus one end-to-end training-step comparison.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from coar_zsl import _convops_py
from coar_zsl import kernels

try:
    from coar_zsl import _convops
except ImportError:
    _convops = None


def timeit(fn, repeats):
    fn()  # warm-up
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_kernels(repeats):
    rng = np.random.default_rng(0)
    batch = 32
    cases = []

    x1 = rng.normal(size=(batch, 64, 64, 3))
    cases.append(("im2col 64x64x3 k3", lambda m: lambda: m.im2col(x1, 3, 3, 1)))

    cols = _convops_py.im2col(x1, 3, 3, 1)
    cases.append(("col2im 64x64x3 k3",
                  lambda m: lambda: m.col2im(cols, 64, 64, 3, 3, 1)))

    x2 = rng.normal(size=(batch, 32, 32, 32))
    cases.append(("maxpool fwd 32x32x32",
                  lambda m: lambda: m.maxpool2x2_forward(x2)))

    _, idx = _convops_py.maxpool2x2_forward(x2)
    g2 = rng.normal(size=(batch, 16, 16, 32))
    cases.append(("maxpool bwd 32x32x32",
                  lambda m: lambda: m.maxpool2x2_backward(g2, idx)))

    x3 = rng.normal(size=(batch, 32, 32, 12))
    y0, y1, wy = kernels.bilinear_coeffs(32, 8)
    x0, xx1, wx = kernels.bilinear_coeffs(32, 8)
    cases.append(("bilinear gather 32->8",
                  lambda m: lambda: m.bilinear_gather(x3, y0, y1, wy, x0, xx1, wx)))

    g3 = rng.normal(size=(batch, 8, 8, 12))
    cases.append(("bilinear scatter 8->32",
                  lambda m: lambda: m.bilinear_scatter(g3, y0, y1, wy, x0, xx1,
                                                       wx, 32, 32)))

    print(f"{'kernel':26s} {'python':>10s} {'compiled':>10s} {'speedup':>8s}")
    for name, make in cases:
        t_py = timeit(make(_convops_py), repeats)
        if _convops is None:
            print(f"{name:26s} {t_py * 1e3:9.2f}ms {'n/a':>10s}")
            continue
        t_c = timeit(make(_convops), repeats)
        print(f"{name:26s} {t_py * 1e3:9.2f}ms {t_c * 1e3:9.2f}ms "
              f"{t_py / t_c:7.1f}x")


def bench_train_step(repeats):
    import os

    from coar_zsl.dataset import SynthSpec, generate_synthetic
    from coar_zsl.episodes import sample_episode
    from coar_zsl.losses import LossConfig
    from coar_zsl.trainer import TrainConfig, init_state, train_step

    ds = generate_synthetic(SynthSpec(
        n_seen=20, n_unseen=5, num_attributes=12, images_per_class=4,
        image_size=64, noise_std=0.05, seed=1))
    results = {}
    for backend in ("python", "compiled"):
        if backend == "compiled" and _convops is None:
            continue
        kernels._impl = kernels.get_backend(backend)
        config = TrainConfig(seed=0, loss=LossConfig(t_peak=None))
        state = init_state(config, ds)
        rng = np.random.default_rng(0)
        episode = sample_episode(ds, config.n_way, config.k_shot, state.rng)

        def step():
            train_step(state, episode)

        results[backend] = timeit(step, repeats)
    kernels._impl = kernels.get_backend()

    print()
    print("full training step (batch 32, 64px, full objective):")
    for backend, t in results.items():
        print(f"  {backend:9s} {t * 1e3:9.1f}ms")
    if len(results) == 2:
        print(f"  speedup   {results['python'] / results['compiled']:7.1f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    print(f"active backend: {kernels.BACKEND}")
    bench_kernels(args.repeats)
    bench_train_step(max(2, args.repeats // 2))


if __name__ == "__main__":
    main()
