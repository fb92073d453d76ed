"""Benchmark the compiled kernels against the pure-numpy fallback.

Times the two hot loops (bicubic tile resize and block-statistics feature
extraction) plus the combined per-window detection pipeline, and prints the
speedup of the extension over the fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from fissura.kernels import _py

try:
    from fissura.kernels import _ext
except ImportError:
    _ext = None


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_resize(impl, crops, repeats):
    return best_of(lambda: [impl.resize_bicubic(c, 224, 224) for c in crops],
                   repeats) / len(crops)


def bench_blockstats(impl, batch, repeats):
    return best_of(lambda: impl.block_mean_std(batch), repeats) / batch.shape[0]


def bench_window_pipeline(impl, image, positions, repeats):
    means = np.asarray((123.68, 116.779, 103.939), dtype=np.float32)

    def run():
        batch = np.empty((len(positions), 224, 224, 3), dtype=np.float32)
        for i, (x, y) in enumerate(positions):
            crop = image[y:y + 112, x:x + 112]
            batch[i] = impl.resize_bicubic(crop, 224, 224).astype(np.float32) - means
        impl.block_mean_std(batch)

    return best_of(run, repeats) / len(positions)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    crops = [rng.integers(0, 256, (112, 112, 3), dtype=np.uint8)
             for _ in range(32)]
    batch = rng.normal(0, 60, (128, 224, 224, 3)).astype(np.float32)
    image = rng.integers(0, 256, (1200, 1600, 3), dtype=np.uint8)
    positions = [(x, y) for y in range(0, 1088, 67) for x in range(0, 1488, 134)]

    cases = [
        ("resize 112->224 (per tile)", bench_resize, crops),
        ("block mean/std (per tile, batch 128)", bench_blockstats, batch),
        (f"window pipeline (per window, {len(positions)} windows)",
         bench_window_pipeline, None),
    ]
    impls = [("python", _py)] + ([("cython", _ext)] if _ext else [])
    if _ext is None:
        print("note: Cython extension not built; timing the fallback only\n")

    header = f"{'kernel':<42}" + "".join(f"{name:>12}" for name, _ in impls)
    if _ext is not None:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for label, fn, payload in cases:
        times = []
        for _, impl in impls:
            if payload is None:
                t = fn(impl, image, positions, args.repeats)
            else:
                t = fn(impl, payload, args.repeats)
            times.append(t)
        row = f"{label:<42}" + "".join(f"{t * 1e3:>10.3f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
