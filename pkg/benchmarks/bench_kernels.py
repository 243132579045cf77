"""Compare the numba kernels with their pure-numpy fallbacks.

Run ``python benchmarks/bench_kernels.py``. Each kernel is timed under both
backends on identical inputs (after one warm-up call so numba compilation is
excluded) and the outputs are checked for agreement.
"""

import argparse
import os
import time

import numpy as np

from sigmort._accel import BACKEND_ENV
from sigmort.kernels.kalman import arma_negloglik
from sigmort.kernels.signature import oracle_signature, path_signature_batch


def _cases(rng):
    lead_lag = rng.normal(size=(101, 160, 3)).cumsum(axis=1)
    short = rng.normal(size=(6, 3)).cumsum(axis=0)
    w = np.diff(rng.normal(size=200).cumsum())
    x = np.array([0.3, -0.2, 0.1, 0.0])
    return {
        "path_signature_batch (101 paths, 160 pts, m=3)": lambda: path_signature_batch(lead_lag, 3),
        "oracle_signature (5 segments, 1e4 steps, m=3)": lambda: oracle_signature(short, 3, 10_000),
        "arma_negloglik ARMA(2,1)+c, n=199": lambda: arma_negloglik(x, w, 2, 1, True),
    }


def _time(fn, repeat):
    fn()
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    cases = _cases(np.random.default_rng(0))
    saved = os.environ.get(BACKEND_ENV)
    print(f"{'kernel':50s} {'numba [s]':>11s} {'numpy [s]':>11s} {'speedup':>8s} {'max |diff|':>11s}")
    try:
        for name, fn in cases.items():
            results = {}
            for backend in ("numba", "numpy"):
                os.environ[BACKEND_ENV] = backend
                results[backend] = _time(fn, args.repeat)
            (tn, on), (tp, op) = results["numba"], results["numpy"]
            diff = float(np.max(np.abs(np.asarray(on) - np.asarray(op))))
            print(f"{name:50s} {tn:11.5f} {tp:11.5f} {tp / tn:8.1f} {diff:11.2e}")
    finally:
        if saved is None:
            os.environ.pop(BACKEND_ENV, None)
        else:
            os.environ[BACKEND_ENV] = saved


if __name__ == "__main__":
    main()
