"""Monte Carlo check of the difference-in-differences estimator.

Prints the mean estimate and 95% CI coverage under beta = -5, and the
rejection rate of a 5% test under beta = 0, with clustered errors.

    python scripts/monte_carlo_did.py --reps 200 --null-reps 1000 --seed 0
"""
import argparse

from epiflow.simulate import DidDesign, did_monte_carlo


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--null-reps", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0, help="first seed; replications use consecutive seeds")
    ap.add_argument("--null-seed", type=int, default=10_000)
    ap.add_argument("--units", type=int, default=50)
    args = ap.parse_args()

    design = DidDesign(n_units=args.units)
    res = did_monte_carlo(design, range(args.seed, args.seed + args.reps))
    print(f"beta={design.beta}  reps={args.reps}  mean={res.estimate.mean():.3f}  "
          f"sd={res.estimate.std(ddof=1):.3f}  mean_se={res.se.mean():.3f}  coverage={res.covered.mean():.3f}")
    null = did_monte_carlo(DidDesign(beta=0.0, n_units=args.units),
                           range(args.null_seed, args.null_seed + args.null_reps))
    print(f"beta=0  reps={args.null_reps}  rejection rate at 5% = {(null.p < 0.05).mean():.3f}")


if __name__ == "__main__":
    main()
