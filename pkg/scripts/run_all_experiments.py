"""Run every builtin experiment and print one summary row per run."""

import argparse
from pathlib import Path

from costep.cli import write_summary
from costep.experiments import BUILTINS, builtin_config, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out", help="parent directory for per-experiment outputs")
    args = ap.parse_args()

    print(f"{'experiment':<22}{'steps':>7}{'final':>16}{'leading':>16}")
    for name in BUILTINS:
        res = run_experiment(builtin_config(name))
        s = res.summary
        final = s.get("final_dx", s.get("final_dV"))
        leading = s.get("predicted_leading_dx", s.get("predicted_leading_dV"))
        print(f"{name:<22}{s['steps']:>7}{final:>16.8g}{leading:>16.8g}")
        dest = Path(args.out) / name
        dest.mkdir(parents=True, exist_ok=True)
        res.trace.to_csv(dest / "trace.csv")
        res.discrepancy.to_csv(dest / "discrepancy.csv")
        write_summary(dest / "summary.txt", s)


if __name__ == "__main__":
    main()
