"""Sweep PID gains and compare the linear transfer-gain test with simulated l2 amplification.

    python3 scripts/gain_sweep.py [--kp 0.2 0.6 1.0 1.6] [--kd 0.1 0.3 0.6]
"""

import argparse
import math
from dataclasses import replace

import numpy as np

from platoon_energy.analysis import l2_amplification, segment_steady_perturbation
from platoon_energy.scenario import load_preset
from platoon_energy.sim import Collision, simulate_platoon, transfer_gain


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kp", type=float, nargs="+", default=[0.2, 0.3, 0.6, 1.0, 1.6, 2.4])
    ap.add_argument("--kd", type=float, nargs="+", default=[0.1, 0.3, 0.6])
    ap.add_argument("--ki", type=float, default=0.02)
    args = ap.parse_args()

    sc = load_preset("stable")
    base = sc.followers[0]
    omega = 2 * math.pi / 20.0
    grid = np.logspace(-4, 1, 800)
    print(f"{'kp':>5} {'kd':>5} {'|G(w)|':>7} {'sup|G|':>7} {'kp T^2':>7} {'max l2':>7} verdict")
    for kp in args.kp:
        for kd in args.kd:
            p = replace(base, kp=kp, kd=kd, ki=args.ki)
            if kd * p.T >= 1:
                continue
            sup = max(transfer_gain(p, w) for w in grid)
            try:
                ds = simulate_platoon(sc.cycle, [p] * len(sc.followers))
            except Collision as exc:
                print(f"{kp:5.2f} {kd:5.2f} {transfer_gain(p, omega):7.3f} {sup:7.3f} {kp * p.T**2:7.2f}"
                      f" {'-':>7} collision at {exc.time:.1f}s")
                continue
            m = l2_amplification(ds, segment_steady_perturbation(ds["C1"]))
            worst = max(r for r in m.l2_ratio[0].values() if r is not None)
            print(f"{kp:5.2f} {kd:5.2f} {transfer_gain(p, omega):7.3f} {sup:7.3f} {kp * p.T**2:7.2f}"
                  f" {worst:7.3f} {m.verdict}")


if __name__ == "__main__":
    main()
