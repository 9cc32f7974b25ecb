"""Outer iterations to convergence for the NMF start against random starts."""
import argparse

import numpy as np

from otclean import CIConstraint, CleanerConfig, CostSpec, Distribution, Schema, build_cost_matrix, fast_otclean


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--instances", type=int, default=5)
    ap.add_argument("--random-starts", type=int, default=5)
    ap.add_argument("--outer-max", type=int, default=2000)
    ap.add_argument("--outer-tol", type=float, default=1e-5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    schema = Schema.binary("X", "Y", "Z")
    C = build_cost_matrix(schema, CostSpec("hamming"))
    sigma = CIConstraint("Y", "Z", "X")
    rng = np.random.default_rng(args.seed)
    for k in range(args.instances):
        P = Distribution(schema, rng.dirichlet(np.ones(schema.size)))
        nmf = fast_otclean(P, C, sigma, CleanerConfig(outer_max=args.outer_max, outer_tol=args.outer_tol))
        rnd = [
            fast_otclean(P, C, sigma, CleanerConfig(outer_max=args.outer_max, outer_tol=args.outer_tol, init="random", seed=s))
            for s in range(args.random_starts)
        ]
        iters = " ".join(f"{r.outer_iterations}{'' if r.converged else '*'}" for r in rnd)
        print(f"instance {k}: nmf {nmf.outer_iterations}{'' if nmf.converged else '*'} | random {iters}")
    print("* = hit outer_max without converging")


if __name__ == "__main__":
    main()
