"""How the PI step-ratio bounds change the frozen-in oscillator discrepancy.

A tighter lower bound on the step ratio slows step reduction, which lets
more discrepancy accumulate while steps are still large.
"""

import argparse

from costep import ControllerParams, PIController, RunConfig, measure_oscillator_discrepancy, run
from costep.experiments import build_model, builtin_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--v0", type=float, default=1.0)
    ap.add_argument("--t-end", type=float, default=40.0)
    args = ap.parse_args()

    cfg = builtin_config("osc-pi-v1" if args.v0 else "osc-pi")
    cfg.initial["v2"] = args.v0
    print(f"{'theta_min':>10}{'theta_max':>10}{'steps':>8}{'dx_final':>16}")
    for theta_min in (0.2, 0.5, 0.8):
        for theta_max in (1.05, 1.2, 2.0):
            params = ControllerParams(theta_min=theta_min, theta_max=theta_max)
            tr = run(build_model(cfg), RunConfig(0.0, args.t_end, PIController(params)))
            dx = measure_oscillator_discrepancy(tr).final
            print(f"{theta_min:>10}{theta_max:>10}{len(tr) - 1:>8}{dx:>16.6e}")


if __name__ == "__main__":
    main()
