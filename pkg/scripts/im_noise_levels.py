"""Recover the five motor regression coefficients at several measurement-noise levels."""

import argparse

import numpy as np

from loadbayes.datagen import REFERENCE_COEFFICIENTS, synthetic_im_regression
from loadbayes.samplers import gibbs_im

NAMES = ("beta1", "beta2", "beta3", "alpha_b", "alpha_c")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--noise", type=float, nargs="+", default=[0.01, 0.02, 0.05])
    ap.add_argument("--n", type=int, default=2000, help="samples per dataset")
    ap.add_argument("--iters", type=int, default=10000)
    ap.add_argument("--seed", type=int, default=300)
    args = ap.parse_args()

    truth = REFERENCE_COEFFICIENTS.as_array()
    print(f"{'noise':<7}" + "".join(f"{n:>20}" for n in NAMES))
    print(f"{'true':<7}" + "".join(f"{v:>20.5g}" for v in truth))
    for k, noise in enumerate(args.noise):
        data = synthetic_im_regression(REFERENCE_COEFFICIENTS, noise, args.n, seed=args.seed + k)
        chain = gibbs_im(data, n_iter=args.iters, seed=args.seed + 100 + k)
        est = np.array([chain.means()[n] for n in NAMES])
        err = 100 * np.abs(est / truth - 1)
        cells = "".join(f"{e:>11.5g} ({r:5.2f}%)" for e, r in zip(est, err))
        print(f"{noise:<7.0%}{cells}")


if __name__ == "__main__":
    main()
