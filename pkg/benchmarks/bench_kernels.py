"""Time the conv2d kernels of each available backend on the default model's layer shapes.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--batch 64]
"""
import argparse
import timeit

import numpy as np

from downscaler import kernels

# (name, C_in, C_out, H, W) for the convolutions of the default architecture
LAYERS = [
    ("embed.conv1", 20, 50, 8, 8),
    ("embed.conv2", 50, 25, 8, 8),
    ("embed.conv3", 25, 10, 8, 8),
    ("enc.conv1", 1, 16, 32, 32),
    ("enc.conv2", 16, 8, 32, 32),
    ("dec.conv1", 8, 8, 16, 16),
    ("dec.conv2", 8, 4, 32, 32),
]


def bench(backend, layer, batch, repeat, rng):
    _, cin, cout, h, w = layer
    x = rng.standard_normal((batch, cin, h, w)).astype(np.float32)
    k = rng.standard_normal((cout, cin, 3, 3)).astype(np.float32)
    b = np.zeros(cout, np.float32)
    g = rng.standard_normal((batch, cout, h, w)).astype(np.float32)

    def step():
        kernels.conv2d_forward(x, k, b, 1, backend=backend)
        kernels.conv2d_backward(x, k, g, 1, backend=backend)

    step()
    return min(timeit.repeat(step, number=3, repeat=repeat)) / 3


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--batch", type=int, default=64)
    args = p.parse_args()
    backends = kernels.available_backends()
    rng = np.random.default_rng(0)
    print(f"active backend: {kernels.BACKEND}; batch {args.batch}; forward+backward, ms per call")
    print(f"{'layer':<12}" + "".join(f"{b:>10}" for b in backends) + ("   speedup" if len(backends) > 1 else ""))
    totals = dict.fromkeys(backends, 0.0)
    for layer in LAYERS:
        times = {b: bench(b, layer, args.batch, args.repeat, rng) for b in backends}
        for b, t in times.items():
            totals[b] += t
        row = f"{layer[0]:<12}" + "".join(f"{1e3 * times[b]:>10.2f}" for b in backends)
        if len(backends) > 1:
            row += f"{times['python'] / times['ext']:>9.2f}x"
        print(row)
    row = f"{'total':<12}" + "".join(f"{1e3 * totals[b]:>10.2f}" for b in backends)
    if len(backends) > 1:
        row += f"{totals['python'] / totals['ext']:>9.2f}x"
    print(row)


if __name__ == "__main__":
    main()
