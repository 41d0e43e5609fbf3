"""Compare the compiled and numpy ML scoring kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Workload: one data phase of the default experiment (N_d=500 observations,
K=256 candidates, 2N_r=64 signs), once with finite tables and once with 5%
zero-probability entries (naive learning at high SNR).
"""

import argparse
import timeit

import numpy as np

from onebitml import kernels


def workload(dead_fraction, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.choice(np.array([-1, 1], dtype=np.int8), size=(500, 64))
    p = rng.uniform(0.01, 0.99, size=(256, 64))
    p[rng.random(p.shape) < dead_fraction] = 0.0
    with np.errstate(divide="ignore"):
        return y, np.log(p), np.log1p(-p)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--number", type=int, default=20)
    args = parser.parse_args()

    backends = ["python"] + (["cython"] if kernels._compiled is not None else [])
    print(f"default backend: {kernels.BACKEND}")
    print(f"{'tables':<12}{'backend':<10}{'ms/call':>10}")
    for label, dead in (("finite", 0.0), ("5% zeros", 0.05)):
        y, lp, lm = workload(dead)
        reference = kernels.score_argmax(y, lp, lm, backend="python")[0]
        for backend in backends:
            idx = kernels.score_argmax(y, lp, lm, backend=backend)[0]
            assert np.array_equal(idx, reference), "backends disagree"
            times = timeit.repeat(lambda: kernels.score_argmax(y, lp, lm, backend=backend),
                                  repeat=args.repeat, number=args.number)
            print(f"{label:<12}{backend:<10}{1e3 * min(times) / args.number:>10.3f}")


if __name__ == "__main__":
    main()
