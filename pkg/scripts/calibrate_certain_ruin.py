"""Long-horizon oracle for the certain-ruin thresholds.

Runs n paths to a long horizon and prints the ruin fraction at a ladder of
checkpoints, for the rho = 0.8 and rho = 1 parameter sets used by the
acceptance suite.  The acceptance thresholds were frozen from its output.

    python scripts/calibrate_certain_ruin.py --n 1000 --horizon 5000
"""

import argparse
import time

from ruinlab.estimate import horizon_sweep
from ruinlab.model import ModelParams, Uniform
from ruinlab.sim import SimConfig

SETS = {
    "rho=0.8": ModelParams(a=0.1, sigma=0.5, c=1.0, lam=1.0, claim=Uniform(2.0)),
    "rho=1": ModelParams(a=0.5, sigma=1.0, c=1.0, lam=1.0, claim=Uniform(2.0)),
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--horizon", type=float, default=5000.0)
    ap.add_argument("--dt", type=float, default=1e-2)
    ap.add_argument("--u", type=float, default=2.0)
    ap.add_argument("--seed", type=int, default=20261014)
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()
    checkpoints = [h for h in (10, 50, 100, 500, 1000, 2000) if h < args.horizon] + [args.horizon]
    for name, params in SETS.items():
        t = time.time()
        cfg = SimConfig(dt=args.dt, horizon=args.horizon)
        sweep = horizon_sweep(params, args.u, 0.0, cfg, checkpoints, args.n, args.seed, args.workers)
        print(f"{name}  (u={args.u}, n={args.n}, dt={args.dt}, {time.time() - t:.1f}s)")
        for est in sweep:
            print(f"  T={est.horizon:>7g}  psi_hat={est.p_hat:.4f}  wilson95=[{est.ci_lo:.4f}, {est.ci_hi:.4f}]")


if __name__ == "__main__":
    main()
