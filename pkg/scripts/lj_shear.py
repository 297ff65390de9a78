"""Sinusoidal-transverse-force shear run on a small Lennard-Jones fluid; prints the response per eta."""

import argparse

import numpy as np

from transport import estimators as est
from transport.ensemble import gather, map_blocks
from transport.experiments import Experiment, running_average_block
from transport.forcings import FourierFluxIm, ShearSTF
from transport.integrators import BAOAB
from transport.models import LennardJonesFluid


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--N", type=int, default=64)
    ap.add_argument("--L", type=float, default=5.04)
    ap.add_argument("--beta", type=float, default=2 / 3)
    ap.add_argument("--gamma", type=float, default=10.0)
    ap.add_argument("--dt", type=float, default=0.01)
    ap.add_argument("--time", type=float, default=40.0)
    ap.add_argument("--K", type=int, default=32)
    ap.add_argument("--etas", type=float, nargs="+", default=[2.0, 4.0, 8.0])
    ap.add_argument("--neighbor", choices=["pairs", "cells"], default="pairs")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    m = LennardJonesFluid(args.N, args.L, neighbor=args.neighbor)
    sc = BAOAB(args.dt, args.gamma, args.beta)
    ys, ss = [], []
    for i, eta in enumerate(args.etas):
        e = Experiment(m, sc, ShearSTF(args.L), FourierFluxIm(), eta=eta, n_steps=int(args.time / args.dt),
                       burn_in=int(2 / args.dt), equilibrate=int(5 / args.dt), seed=args.seed + i)
        out = map_blocks(running_average_block, e, args.K, block=args.K)
        a = gather(out, "avg")
        ys.append(a.mean())
        ss.append(a.std(ddof=1) / np.sqrt(a.size))
        print(f"eta={eta:<5g} <Im flux>={ys[-1]:.5f} +- {ss[-1]:.5f}  ratio {ys[-1] / eta:.5f}"
              f"  failed {int(gather(out, 'failed').sum())}", flush=True)
    fit = est.nemd_eta_scan(args.etas, ys, ss, 2)
    c, cov = fit.fit_report["coefficients"], np.array(fit.fit_report["covariance"])
    print(f"linear {c[0]:.5f} +- {np.sqrt(cov[0, 0]):.5f}, quadratic {c[1]:.2e} +- {np.sqrt(cov[1, 1]):.2e}")


if __name__ == "__main__":
    main()
