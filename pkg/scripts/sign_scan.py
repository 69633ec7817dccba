"""Scan the generator of each regime's test function near its threshold.

For rho > 1 with Uniform(0, M) claims the exact generator of x^(1-rho) is
positive just above x = M.  This prints the grid maximum, the region where
the generator is positive, and compares the rho = 3 case with its closed
form -4/x^3 + 1/(x^2 (x - 1)).

    python scripts/sign_scan.py
"""

import math

import numpy as np

from ruinlab.model import Deterministic, ModelParams, Uniform
from ruinlab.verify import RHO_EQ_1, RHO_GT_1, RHO_LT_1, certify_generator_signs

SETS = [
    ("rho=3, Uniform(0,1)", ModelParams(a=0.15, sigma=math.sqrt(0.1), c=2.0, lam=1.0, claim=Uniform(1.0)), RHO_GT_1),
    ("rho=2, Deterministic(1)", ModelParams(a=1.0, sigma=1.0, c=2.0, lam=1.0, claim=Deterministic(1.0)), RHO_GT_1),
    ("rho=0.8, Uniform(0,2)", ModelParams(a=0.1, sigma=0.5, c=1.0, lam=1.0, claim=Uniform(2.0)), RHO_LT_1),
    ("rho=1, Uniform(0,2)", ModelParams(a=0.5, sigma=1.0, c=1.0, lam=1.0, claim=Uniform(2.0)), RHO_EQ_1),
]


def main():
    for name, params, regime in SETS:
        rep = certify_generator_signs(params, regime)
        x, v = rep.worst_point
        print(f"{name:<26} grid=[{rep.grid[0]:.5g}, {rep.grid[-1]:.5g}]  max L F={v:+.4g} at x={x:.5g}  "
              f"positive region={rep.positive_region}  displayed bound <= 0: {rep.bound_all_nonpositive}")
    params = SETS[0][1]
    xs = np.array([1.01, 1.1, 1.2, 1.3, 4 / 3, 1.4, 2.0])
    rep = certify_generator_signs(params, RHO_GT_1, grid=xs)
    print("\nrho=3 closed-form comparison")
    for x, v in zip(xs, rep.values):
        print(f"  x={x:.4f}  quad={v:+.10f}  closed={-4 / x**3 + 1 / (x**2 * (x - 1)):+.10f}")


if __name__ == "__main__":
    main()
