"""Invariant-measure bias of BAOAB (entropic switch) and Euler-Maruyama (1D OU) versus the step size."""

import argparse

from transport.integrators import EulerMaruyama
from transport.invariant import baoab_bias_study, gibbs_average, linear_scheme_stationary_covariance
from transport.models import EntropicSwitch, Harmonic
from transport.statistics import loglog_slope


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dts", type=float, nargs="+", default=[0.16, 0.08, 0.04, 0.02])
    ap.add_argument("--horizon", type=float, default=12.0)
    args = ap.parse_args()

    m = EntropicSwitch()
    ref = gibbs_average(m, m.potential)
    print(f"entropic switch, E_pi[V] = {ref:.12f}")
    study = baoab_bias_study(m, args.dts, m.potential, horizon=args.horizon, tol=2e-8)
    for r in study:
        print(f"  BAOAB dt={r.dt:<6g} bias={r.extrapolated - ref:+.4e}  ({r.steps} steps, {r.seconds:.0f}s)")
    print(f"  slope {loglog_slope([r.dt for r in study], [abs(r.extrapolated - ref) for r in study]):.3f}")

    print("1D OU, Euler-Maruyama")
    bias = []
    for h in args.dts:
        ev = 0.5 * linear_scheme_stationary_covariance(Harmonic(), EulerMaruyama(h))[1][0, 0]
        bias.append(ev - 0.5)
        print(f"  EM dt={h:<6g} bias={bias[-1]:+.4e}")
    print(f"  slope {loglog_slope(args.dts, bias):.3f}")


if __name__ == "__main__":
    main()
