"""Time-gap statistics of ACC (constant time headway) versus IDM followers on the speed-levels cycle.

    python3 scripts/spacing_policy.py
"""

import argparse

from platoon_energy.analysis import compute_gaps, gap_histograms, gap_speed_slope
from platoon_energy.scenario import load_preset
from platoon_energy.sim import run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reference", choices=("follower", "preceding"), default="follower")
    ap.add_argument("--transient", type=float, default=None, help="ignore samples before this time [s]")
    args = ap.parse_args()

    print(f"{'preset':>13} {'pair':>7} {'mode':>6} {'mean':>6} {'std':>6} {'slope s/(m/s)':>14}")
    for preset in ("levels-acc", "levels-human"):
        ds = run_scenario(load_preset(preset))
        for g in compute_gaps(ds, args.reference):
            th, _ = gap_histograms(g, t_min=args.transient)
            slope = gap_speed_slope(g, args.transient)
            pair = f"{g.leader}-{g.follower}"
            print(f"{preset:>13} {pair:>7} {th.mode:6.2f} {th.mean:6.2f} {th.std:6.3f} {slope:14.5f}")
    # the CTH equilibrium time gap is T + s0/v, so its slope is -s0/v^2 and shrinks at highway speed


if __name__ == "__main__":
    main()
