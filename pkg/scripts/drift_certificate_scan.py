"""Scan (q, delta) for drift certificates of the AR model and print K and b per cell."""

import argparse

import numpy as np

from markovarb.model import stable_ar
from markovarb.verify import DEFAULT_DELTA_GRID, DEFAULT_Q_GRID, certificate_for


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--x-max", type=float, default=50.0)
    p.add_argument("--n", type=int, default=2001)
    a = p.parse_args()

    model = stable_ar(a.alpha)
    print("q,delta,feasible,K,b,min_margin")
    for q in DEFAULT_Q_GRID:
        for d in DEFAULT_DELTA_GRID:
            c = certificate_for(model, q, d, a.x_max, a.n)
            print(f"{q},{d},{c.feasible},{c.K:.4f},{c.b:.6f},{np.min(c.margin):.3e}")


if __name__ == "__main__":
    main()
