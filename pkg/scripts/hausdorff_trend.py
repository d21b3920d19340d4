"""Sampled Hausdorff-distance estimate over relaxation orders for the
probability measures on [-1, 1].

Usage: python3 scripts/hausdorff_trend.py [--k 2] [--samples 50] [--grid 2001]
"""
import argparse
import sys

from momentgmp.experiments import hausdorff_sweep, write_hausdorff_csv
from momentgmp.gmp import pop_instance
from momentgmp.poly import Polynomial


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k", type=int, default=2)
    ap.add_argument("--orders", default="2,4,6,8")
    ap.add_argument("--samples", type=int, default=50)
    ap.add_argument("--grid", type=int, default=2001)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    inst = pop_instance(Polynomial.variable(1, 0))
    rows = hausdorff_sweep(inst, args.k, [int(o) for o in args.orders.split(",")],
                           args.samples, args.grid, args.seed)
    write_hausdorff_csv(rows, sys.stdout)


if __name__ == "__main__":
    main()
