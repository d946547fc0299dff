"""Sampling distribution of the TV distance under an exactly correct model.

Draws K* straight from numpy's negative binomial sampler (the simulator is
not involved) and measures its total-variation distance to the exact pmf
from scipy.  The compare gate is safe if TV stays well below the threshold.

    python scripts/calibrate_tv_threshold.py --reps 500 --trials 20000
"""

import argparse

import numpy as np
from scipy import stats


def tv_to_exact(sample, n, p):
    r = n - 1
    failures = sample - r
    hi = max(int(failures.max()), int(stats.nbinom.ppf(1 - 1e-12, r, p)))
    emp = np.bincount(failures, minlength=hi + 1)[: hi + 1] / len(sample)
    exact = stats.nbinom.pmf(np.arange(hi + 1), r, p)
    return 0.5 * (np.abs(emp - exact).sum() + stats.nbinom.sf(hi, r, p))


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--n", type=int, default=20)
    ap.add_argument("--p", type=float, default=0.64)
    ap.add_argument("--trials", type=int, default=20000)
    ap.add_argument("--reps", type=int, default=500)
    ap.add_argument("--threshold", type=float, default=0.02)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    tvs = np.array([
        tv_to_exact((args.n - 1) + rng.negative_binomial(args.n - 1, args.p, args.trials), args.n, args.p)
        for _ in range(args.reps)
    ])
    q = np.quantile(tvs, [0.5, 0.9, 0.99, 1.0])
    print(f"n={args.n} p={args.p} trials={args.trials} reps={args.reps}")
    print(f"TV mean {tvs.mean():.5f}  median {q[0]:.5f}  q90 {q[1]:.5f}  q99 {q[2]:.5f}  max {q[3]:.5f}")
    print(f"fraction above {args.threshold}: {np.mean(tvs > args.threshold):.4f}")


if __name__ == "__main__":
    main()
