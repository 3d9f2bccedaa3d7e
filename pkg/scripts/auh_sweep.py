"""Run the homogeneity pipeline over several block structures and exponents.

Prints one CSV row per (blocks, p, q, eps) with the worst residual over the
requested number of seeded trials.
"""
import argparse
import time

import numpy as np

from lplq.blpq import BKpqSpec
from lplq.sampling import random_embedding
from lplq.stepfn import NormParams
from lplq.transport import auh_pipeline

CASES = [((1, 2), (2, 1)), ((2, 3), (3, 2)), ((2, 1), (1, 2)), ((1, 1, 2), (4, 2)),
         ((3,), (2.5, 1))]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--eps", type=float, nargs="+", default=[1e-2, 1e-3])
    args = ap.parse_args()
    print("blocks,p,q,eps,worst_residual,seconds")
    for blocks, pq in CASES:
        params = NormParams(*pq)
        spec = BKpqSpec(blocks, params)
        for eps in args.eps:
            t0 = time.perf_counter()
            worst = 0.0
            for s in np.random.SeedSequence(args.seed).spawn(args.trials):
                rng = np.random.default_rng(s)
                e1, e2 = random_embedding(rng, spec), random_embedding(rng, spec)
                worst = max(worst, auh_pipeline(e1, e2, params, eps)[1].max_residual)
            blk = "-".join(map(str, blocks))
            print(f"{blk},{pq[0]},{pq[1]},{eps:g},{worst:.3e},{time.perf_counter() - t0:.2f}")


if __name__ == "__main__":
    main()
