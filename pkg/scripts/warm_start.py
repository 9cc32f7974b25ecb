"""Compare inner Sinkhorn iterations of fast_otclean with and without warm starts."""
import argparse

import numpy as np

from otclean import CIConstraint, CleanerConfig, CostSpec, Distribution, Schema, build_cost_matrix, fast_otclean


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--instances", type=int, default=10)
    ap.add_argument("--outer-max", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    schema = Schema.binary("X", "Y", "Z")
    C = build_cost_matrix(schema, CostSpec("hamming"))
    sigma = CIConstraint("Y", "Z")
    rng = np.random.default_rng(args.seed)
    print(f"{'instance':>8} {'warm':>7} {'cold':>7} {'ratio':>6}")
    for k in range(args.instances):
        P = Distribution(schema, rng.dirichlet(np.ones(schema.size)))
        warm = fast_otclean(P, C, sigma, CleanerConfig(outer_max=args.outer_max)).inner_iterations
        cold = fast_otclean(P, C, sigma, CleanerConfig(outer_max=args.outer_max, warm_start=False)).inner_iterations
        print(f"{k:>8} {warm:>7} {cold:>7} {cold / warm:6.2f}")


if __name__ == "__main__":
    main()
