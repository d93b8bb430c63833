"""Frozen-in oscillator discrepancy as a function of when the step drops from 0.1 to 0.01.

The final value depends on the mass velocity at the switch, so sweeping the
switch time traces out the damped velocity curve.
"""

import argparse
import csv

import numpy as np

from costep import (
    MassUnit,
    Model,
    PowerBond,
    RunConfig,
    ScheduledController,
    SpringDamperUnit,
    StepSchedule,
    measure_oscillator_discrepancy,
    oscillator_single_change_limit,
    run,
)


def oscillator(v0):
    model = Model({"S1": SpringDamperUnit(x1=1.0), "S2": MassUnit(x2=1.0, v2=v0)}, [])
    flow = model.connect(("S2", "y2"), ("S1", "u1"))
    effort = model.connect(("S1", "y1"), ("S2", "u2"))
    model.bonds.append(PowerBond(effort, flow))
    return model


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--v0", type=float, default=0.0)
    ap.add_argument("--t-end", type=float, default=40.0)
    ap.add_argument("--csv", help="write the sweep to this file")
    args = ap.parse_args()

    rows = []
    for t_switch in np.round(np.arange(0.1, 8.01, 0.1), 10):
        sched = StepSchedule(((0.0, 0.1), (float(t_switch), 0.01)))
        tr = run(oscillator(args.v0), RunConfig(0.0, args.t_end, ScheduledController(sched)))
        K = int(np.argmin(np.abs(tr.times() - t_switch)))
        v2K = tr.state("S2", "v2")[K]
        limit = oscillator_single_change_limit(args.v0, v2K, 0.1, 0.01)
        rows.append((t_switch, v2K, measure_oscillator_discrepancy(tr).final, limit))
        print(f"t_switch={t_switch:4.1f}  v2[K]={v2K:+.5f}  dx_final={rows[-1][2]:+.6e}  limit={limit:+.6e}")

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_switch", "v2_at_switch", "dx_final", "single_change_limit"])
            w.writerows(rows)


if __name__ == "__main__":
    main()
