#!/usr/bin/env python3
"""Numerical convergence checks that back the default step sizes.

    python scripts/convergence.py splitting     # order of the time splitting
    python scripts/convergence.py window        # grid quadrature of the coupling window
    python scripts/convergence.py stride --p0 1.0

splitting: T_a0 at fixed dx for dtau = 4h, 2h, h, h/2; successive difference
ratios near 4 show second order.  window: the grid integral of g^2 against
the exact value, per dx.  stride: traversal T_t0 and P_inf_12 for several
tau1 strides on the coarse grid.
"""
import argparse
import time

import numpy as np
from scipy.integrate import quad

from eeqt.arrival import run_arrival
from eeqt.detectors import DetectorSpec, make_window
from eeqt.propagator import GridSpec
from eeqt.relkin import Grid, InitialStateSpec, ModelParams, bump_profile
from eeqt.traversal import run_traversal, traversal_grid


def splitting(args):
    det = DetectorSpec(0.0, 0.01, args.height)
    ini = InitialStateSpec("P", 1.0, -1.0)
    steps = [4 * args.dtau, 2 * args.dtau, args.dtau, args.dtau / 2]
    T = []
    for dt in steps:
        t0 = time.time()
        res = run_arrival(ini, det, GridSpec(-6.0, 4.0, args.dx, 4.5, dt))
        T.append(res.T_a0)
        print(f"dtau={dt:.5f}  T_a0={res.T_a0:.12f}  P_inf={res.P_inf:.8e}  ({time.time() - t0:.1f} s)")
    d = np.diff(T)
    print("difference ratios:", " ".join(f"{r:.3f}" for r in d[:-1] / d[1:]))


def window(args):
    params = ModelParams()
    det = DetectorSpec(0.0, args.width, 1e-5)
    half = det.width / 2
    exact = 2 * det.height * params.mhat * quad(
        lambda x: bump_profile(x, half) ** 2, -half, half, epsabs=0, epsrel=1e-13)[0]
    for dx in (0.002, 0.001, 0.0004, 0.0002, 0.0001):
        w = make_window(det, Grid(-1.0, 1.0, dx), params, centre=0.0)
        print(f"dx={dx:<7} grid integral / exact - 1 = {w.g2.sum() * dx / exact - 1:+.3e}")


def stride(args):
    ini = InitialStateSpec("P", args.p0, -1.5)
    d1 = DetectorSpec(0.0, 0.5, 1e-3, destructive=False)
    d2 = DetectorSpec(1.26, 0.02, 1e-3)
    for s in args.strides:
        t0 = time.time()
        res = run_traversal(ini, d1, d2, traversal_grid(args.p0, 0.002), tau1_stride=s)
        print(f"stride={s:<4} T_t0={res.T_t0:.6f}  P_inf_12={res.P_inf_12:.6e}  "
              f"branches={len(res.branches)}  ({time.time() - t0:.0f} s)")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="check", required=True)
    p = sub.add_parser("splitting")
    p.add_argument("--dx", type=float, default=0.002)
    p.add_argument("--dtau", type=float, default=0.001)
    p.add_argument("--height", type=float, default=1e-2)
    p = sub.add_parser("window")
    p.add_argument("--width", type=float, default=0.01)
    p = sub.add_parser("stride")
    p.add_argument("--p0", type=float, default=1.0)
    p.add_argument("--strides", type=int, nargs="+", default=[80, 40, 20])
    args = ap.parse_args(argv)
    {"splitting": splitting, "window": window, "stride": stride}[args.check](args)


if __name__ == "__main__":
    main()
