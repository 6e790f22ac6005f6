#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Times the per-batch loss/gradient kernel and full training runs (where the
compiled backend fuses the whole epoch loop in C) on two representative
architectures, and prints a table.

Usage: python3 scripts/benchmark_backends.py [--quick]
"""

import argparse
import time

import numpy as np

from rewardlab.backend import available_backends, get_backend
from rewardlab.mlp import MlpConfig, _head_weights, init_params, mlp_train


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_arch(hidden, dim, heads, n_train, epochs, repeats):
    cfg = MlpConfig(input_dim=dim, n_heads=heads, hidden_dims=hidden,
                    epochs=epochs, batch_size=128, seed=0)
    rng = np.random.default_rng(0)
    xb = rng.standard_normal((cfg.batch_size, dim))
    yb = (rng.random((cfg.batch_size, heads)) < 0.5).astype(np.float64)
    weights, biases = init_params(cfg, np.random.default_rng(1))
    head_w = _head_weights(cfg)
    x = rng.standard_normal((n_train, dim))
    y = (rng.random((n_train, heads)) < 0.5).astype(np.float64)

    rows = {}
    for name in available_backends():
        be = get_backend(name)
        t_step = best_of(lambda: be.loss_and_grad(weights, biases, xb, yb, head_w),
                         repeats * 10)
        t_train = best_of(lambda: mlp_train(cfg, x, y, backend=be), max(1, repeats // 4))
        rows[name] = (t_step, t_train)
    return rows


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="fewer repeats/epochs")
    args = parser.parse_args()
    repeats = 4 if args.quick else 12
    epochs = 5 if args.quick else 20

    workloads = [
        ("small net", [32, 32], 16, 3),
        ("default net", [256, 256], 32, 8),
    ]
    print(f"backends: {', '.join(available_backends())}")
    print(f"{'workload':<14} {'backend':<10} {'loss+grad (ms)':>15} {'train (s)':>12} {'train speedup':>14}")
    for label, hidden, dim, heads in workloads:
        rows = bench_arch(hidden, dim, heads, n_train=1024, epochs=epochs, repeats=repeats)
        base = rows.get("python")
        for name, (t_step, t_train) in rows.items():
            speedup = f"x{base[1] / t_train:.2f}" if base else "-"
            print(f"{label:<14} {name:<10} {t_step * 1e3:>15.3f} {t_train:>12.3f} {speedup:>14}")


if __name__ == "__main__":
    main()
