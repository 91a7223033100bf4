"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Inputs are sized like the synthetic benchmark (64-D, 20 subjects, 10
learners) scaled up so the timings are not dominated by call overhead.
"""
import argparse
import timeit

import numpy as np

from opennae import kernels
from opennae.nn import TrainConfig, epoch_batches, init_net


def cases(rng):
    x = rng.normal(size=(1200, 64))
    t = np.concatenate([rng.integers(0, 2, size=600), -np.ones(600, dtype=np.int64)])
    order, bounds = epoch_batches(rng, 600, 600, TrainConfig())
    z = rng.normal(size=(2000, 64))
    labels = np.arange(2000) % 200
    act = rng.normal(size=(100, 2000, 2))
    assign = rng.integers(0, 2, size=(100, 200))

    def sgd(impl):
        params = init_net([64, 160, 2], 0).params()
        vel = [np.zeros_like(p) for p in params]
        return lambda: kernels.sgd_epoch(x, t, order, bounds, params, vel, 0.01, 0.9, 0.3,
                                         impl=impl)

    return {
        "sgd_epoch (1200x64 -> 160 -> 2)": sgd,
        "omu_neighbors (2000 x 64)": lambda impl: lambda: kernels.omu_neighbors(z, labels, impl=impl),
        "aggregate_scores (100 x 2000 x 200)":
            lambda impl: lambda: kernels.aggregate_scores(act, assign, impl=impl),
        "max_cosine_per_subject (2000 x 2000)":
            lambda impl: lambda: kernels.max_cosine_per_subject(z, z, labels, 200, impl=impl),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the python backend is available")
    names = list(backends)
    print(f"{'kernel':<40}" + "".join(f"{n + ' ms':>14}" for n in names) + f"{'speedup':>10}")
    for label, make in cases(np.random.default_rng(0)).items():
        ms = []
        for n in names:
            fn = make(backends[n])
            fn()  # warm-up
            ms.append(1e3 * min(timeit.repeat(fn, number=1, repeat=args.repeat)))
        speed = f"{ms[-1] / ms[0]:.2f}x" if len(ms) == 2 else "-"
        print(f"{label:<40}" + "".join(f"{v:>14.2f}" for v in ms) + f"{speed:>10}")


if __name__ == "__main__":
    main()
