"""Stability probe of the unit-to-e automorphism on a two-band family.

The family is ``(1_{y < 1/2}, 1_{y >= 1/2})``; ``e`` is a base-and-fiber bump
of 1 rescaled to sit at each requested distance from 1.
"""
import argparse

from scipy.optimize import brentq

from lplq.stepfn import NormParams, StepFunction2D, mixed_norm
from lplq.transport import stability_probe


def bump(d, params):
    e = StepFunction2D.from_grid([0, 0.5, 1], [0, 0.3, 1], [[1 + d, 1 + d], [1 - d, 1.0]])
    return e * (1 / mixed_norm(e, params))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, default=2.0)
    ap.add_argument("--q", type=float, default=1.0)
    ap.add_argument("--dist", type=float, nargs="+", default=[0.2, 0.1, 0.05, 0.02, 0.01, 0.001])
    args = ap.parse_args()
    params = NormParams(args.p, args.q)
    one = StepFunction2D.constant(1.0)
    lo = StepFunction2D.indicator(0, 1, 0, 0.5)
    fs = [lo, one - lo]
    print("distance,probe")
    for t in args.dist:
        d = brentq(lambda s: mixed_norm(one - bump(s, params), params) - t, 1e-9, 0.9)
        print(f"{t:g},{stability_probe(fs, bump(d, params), params):.6f}")


if __name__ == "__main__":
    main()
