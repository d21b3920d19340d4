"""Hierarchy values against a grid reference for a few univariate and
bivariate POPs on the unit ball.

Usage: python3 scripts/gap_sweep.py [--orders 2,4,6,8] [--grid 401] [--out sweep.csv]
"""
import argparse
import sys

from momentgmp.experiments import gap_sweep, reference_optimum
from momentgmp.gmp import pop_instance
from momentgmp.poly import Polynomial

x = Polynomial.variable(1, 0)
u, v = Polynomial.variable(2, 0), Polynomial.variable(2, 1)

PROBLEMS = {
    "x": x,
    "x^3 - x": x ** 3 - x,
    "x^4 - x^2 + 0.2x": x ** 4 - x ** 2 + 0.2 * x,
    "u^2 v - 0.5 v^2 + u": u ** 2 * v - 0.5 * v ** 2 + u,
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--orders", default="4,6,8")
    ap.add_argument("--grid", type=int, default=401)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    orders = [int(o) for o in args.orders.split(",")]
    fh = open(args.out, "w") if args.out else sys.stdout
    fh.write("problem,ell,p_ell,d_ell,gap\n")
    for name, f in PROBLEMS.items():
        inst = pop_instance(f)
        ref = reference_optimum(inst, args.grid if f.n > 1 else 2001)
        res = gap_sweep(inst, orders, ref)
        for r, g in zip(res.rows, res.gaps):
            fh.write(f"{name},{r.ell},{r.primal!r},{r.dual!r},{float(g)!r}\n")
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
