"""Monte Carlo check of 2SLS against OLS under an endogenous regressor.

    python scripts/monte_carlo_tsls.py --reps 200 --seed 0
"""
import argparse

from epiflow.simulate import IvDesign, iv_monte_carlo


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n", type=int, default=500)
    args = ap.parse_args()

    design = IvDesign(n=args.n)
    res = iv_monte_carlo(design, range(args.seed, args.seed + args.reps))
    print(f"true beta={design.beta}  reps={args.reps}")
    print(f"OLS   mean bias {res.ols.mean() - design.beta:+.4f}")
    print(f"2SLS  mean error {res.tsls.mean() - design.beta:+.4f}  median first-stage F {res.first_stage_F.median():.1f}")


if __name__ == "__main__":
    main()
