"""Decompose tensors built from random atoms and report recovery errors.

Usage: python3 scripts/round_trip.py [--cases 50] [--seed 5] [--mode signed]
"""
import argparse
import warnings
from math import comb

import numpy as np

from momentgmp.extract import AtomSet, match_atoms
from momentgmp.tensor import DecompositionConfig, NotCertified, decompose, tensor_from_atoms


def random_atoms(rng, n, r, signed):
    pts = []
    while len(pts) < r:
        p = rng.standard_normal(n)
        p *= rng.uniform(0.1, 0.9) ** (1 / n) / np.linalg.norm(p)
        if all(np.linalg.norm(p - q) >= 0.2 for q in pts):
            pts.append(p)
    w = rng.uniform(0.5, 5.0, r)
    return AtomSet(w * rng.choice([-1.0, 1.0], r) if signed else w, np.array(pts))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cases", type=int, default=50)
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--mode", choices=["positive", "signed"], default="signed")
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    signed = args.mode == "signed"
    print("case,n,d,r,point_err,weight_err,certified")
    for i in range(args.cases):
        n, d = int(rng.integers(1, 4)), int(rng.choice([4, 6]))
        r = int(rng.integers(1, min(5, comb(n + d // 2 - 1, n)) + 1))
        truth = random_atoms(rng, n, r, signed)
        cfg = DecompositionConfig(order=d + 2, psi_halfdeg=d // 2 + 1, use_kernel=signed,
                                  L=truth.total_variation + 1 if signed else None)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NotCertified)
            found, diag = decompose(tensor_from_atoms(truth, d), d, args.mode, cfg)
        pe, we = match_atoms(found, truth)
        print(f"{i},{n},{d},{r},{pe:.3e},{we:.3e},{diag.certified}")


if __name__ == "__main__":
    main()
