"""Benchmark the ray-march render kernel: compiled extension vs numpy.

Renders the same poses against the same terrain with both backends,
verifies the outputs are bitwise identical, and reports per-frame timings.

Usage: python benchmarks/bench_render.py [--resolution 512] [--frames 10]
"""

import argparse
import statistics
import time

import numpy as np

from terrasafe import kernels
from terrasafe.heightfield import HeightField, render_pair, sample_camera


def make_terrain(seed=0, size=200, cell=0.25):
    rng = np.random.default_rng(seed)
    ax = np.arange(size) * cell
    xx, yy = np.meshgrid(ax, ax)
    elevation = (1.5 * np.sin(xx / 9) * np.cos(yy / 7)
                 + rng.uniform(0, 0.2, (size, size)))
    return HeightField(origin=np.zeros(2), cell=cell, elevation=elevation,
                       gray=rng.uniform(0, 1, (size, size)),
                       safety=rng.uniform(0, 1, (size, size)),
                       valid=np.ones((size, size), dtype=bool))


def bench(field, poses, resolution, backend):
    times = []
    outputs = []
    for pose in poses:
        start = time.perf_counter()
        sample = render_pair(field, pose, resolution=resolution,
                             backend=backend)
        times.append(time.perf_counter() - start)
        outputs.append(sample)
    return times, outputs


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--resolution", type=int, default=512)
    parser.add_argument("--frames", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    field = make_terrain(args.seed)
    rng = np.random.default_rng(args.seed + 1)
    poses = [sample_camera(field, rng) for _ in range(args.frames)]

    backends = ["numpy"]
    if kernels.HAVE_COMPILED:
        backends.insert(0, "compiled")
    else:
        print("compiled kernel unavailable; benchmarking numpy only")

    results = {}
    for backend in backends:
        # warm up once, then time
        render_pair(field, poses[0], resolution=args.resolution,
                    backend=backend)
        times, outputs = bench(field, poses, args.resolution, backend)
        results[backend] = (times, outputs)
        print(f"{backend:>9}: median {statistics.median(times) * 1e3:7.1f} ms"
              f"  mean {statistics.mean(times) * 1e3:7.1f} ms"
              f"  min {min(times) * 1e3:7.1f} ms"
              f"  ({args.frames} frames at {args.resolution}x{args.resolution})")

    if len(results) == 2:
        for a, b in zip(results["compiled"][1], results["numpy"][1]):
            assert np.array_equal(a.image, b.image)
            assert np.array_equal(a.mask, b.mask)
        speedup = (statistics.median(results["numpy"][0])
                   / statistics.median(results["compiled"][0]))
        print(f"backends bitwise identical; compiled is {speedup:.1f}x faster")


if __name__ == "__main__":
    main()
