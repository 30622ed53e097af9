"""Locate the blow-up boundary of s' + s^2 + k = 0 on [0, 1] by bisection.

The numerically located boundary is compared with the closed form
-sqrt|k| coth sqrt|k|, -1, -sqrt k cot sqrt k.
"""

import argparse
import csv
import sys

import numpy as np

from cconvex.riccati import blow_up_threshold, constant_source, riccati_integrate


def bounded(k, s0, step):
    return riccati_integrate(constant_source([[k]]), [[s0]], 1.0, step).bounded()


def boundary(k, step, tol=1e-7):
    lo, hi = -50.0, 50.0
    if bounded(k, lo, step) or not bounded(k, hi, step):
        return np.nan
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if bounded(k, mid, step) else (mid, hi)
    return 0.5 * (lo + hi)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k", type=float, nargs="+", default=[-9.0, -4.0, -1.0, 0.0, 1.0, 4.0, 9.0])
    ap.add_argument("--step", type=float, default=1e-3)
    ap.add_argument("--out")
    args = ap.parse_args(argv)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["k", "closed_form", "bisection", "difference"])
    for k in args.k:
        exact, found = float(blow_up_threshold(k)), boundary(k, args.step)
        w.writerow([k, repr(exact), repr(found), repr(found - exact)])
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
