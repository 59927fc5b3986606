"""Time the score-DPO and SFT inner loops under both kernel backends.

    python3 benchmarks/bench_kernels.py --samples 2000 --pairs 500
"""

import argparse
import time

import numpy as np

from scoreflow import _kernels


def problem(n_pairs, bank, n_features, samples, seed):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n_pairs), rng.random((n_pairs, n_features - 1))])
    yw = rng.integers(0, bank, n_pairs)
    yl = (yw + rng.integers(1, bank, n_pairs)) % bank
    cw, cl = rng.random(n_pairs), rng.random(n_pairs)
    ref = -np.log(bank) * np.ones(n_pairs)
    order = rng.integers(0, n_pairs, samples)
    return X, yw, yl, cw, cl, ref, order


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--pairs", type=int, default=500)
    ap.add_argument("--bank", type=int, default=11)
    ap.add_argument("--features", type=int, default=3)
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--batch-size", type=int, default=1)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    X, yw, yl, cw, cl, ref, order = problem(args.pairs, args.bank, args.features, args.samples, 0)
    theta0 = np.zeros((args.bank, args.features))
    backends = [b for b in ("numba", "numpy") if _kernels._IMPLS[b]["score_dpo"] is not None]
    results = {}
    for backend in backends:
        def dpo():
            theta = theta0.copy()
            _kernels.score_dpo_sgd(theta, X, yw, yl, cw, cl, ref, ref, order, 0.1, 0.05, args.batch_size, backend)
            return theta

        def sft():
            _kernels.sft_sgd(theta0.copy(), X, yw, order, 0.05, args.batch_size, backend)

        dpo()
        sft()  # warm-up (JIT compile or cache load)
        results[backend] = dpo()
        print(f"{backend:>6}  score_dpo {best_of(dpo, args.repeats) * 1e3:9.3f} ms   sft {best_of(sft, args.repeats) * 1e3:9.3f} ms")
    if len(results) == 2:
        diff = np.max(np.abs(results["numba"] - results["numpy"]))
        print(f"max |theta_numba - theta_numpy| = {diff:.3e}")


if __name__ == "__main__":
    main()
