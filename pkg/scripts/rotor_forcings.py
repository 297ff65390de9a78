"""Linear-response slopes of the rotor chain under boundary, bulk and combined forcings."""

import argparse

import numpy as np

from transport import estimators as est
from transport.ensemble import gather, map_blocks
from transport.experiments import Experiment, running_average_block
from transport.forcings import BoundaryGradient, BulkRotorDrive, EnergyCurrentTotal, SyntheticCombo
from transport.integrators import ChainSplitting
from transport.models import AtomChain, Rotor


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=20)
    ap.add_argument("--temperature", type=float, default=0.3)
    ap.add_argument("--dt", type=float, default=0.01)
    ap.add_argument("--K", type=int, default=512)
    ap.add_argument("--time", type=float, default=200.0)
    ap.add_argument("--burn-in", type=float, default=50.0)
    ap.add_argument("--a", type=float, default=0.1, help="strength of the synthetic bulk thermostats")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    T = args.temperature
    m, sc = AtomChain(Rotor(), args.n), ChainSplitting(args.dt, 1.0, 1.0, T, T)
    forcings = {"boundary": (BoundaryGradient(), [0.05, 0.1, 0.2]),
                "bulk": (BulkRotorDrive(), [0.1, 0.2, 0.4]),
                "combined": (SyntheticCombo(BulkRotorDrive(), a=args.a), [0.1, 0.2, 0.4])}
    for name, (f, etas) in forcings.items():
        ys, ss = [], []
        for i, eta in enumerate(etas):
            e = Experiment(m, sc, f, EnergyCurrentTotal(), eta=eta, n_steps=int(args.time / args.dt),
                           burn_in=int(args.burn_in / args.dt), seed=args.seed + i)
            a = gather(map_blocks(running_average_block, e, args.K, args.workers), "avg")
            ys.append(a.mean())
            ss.append(a.std(ddof=1) / np.sqrt(a.size))
            print(f"{name:9s} eta={eta:<5g} <J>={ys[-1]:.5f} +- {ss[-1]:.5f}", flush=True)
        fit = est.nemd_eta_scan(etas, ys, ss, 2)
        scale = 2 * T if name == "boundary" else 1.0
        print(f"{name:9s} slope {fit.value:.4f} +- {fit.stderr:.4f}   (scaled {scale * fit.value:.4f})")


if __name__ == "__main__":
    main()
