"""Strategic loan applicants under repulsive and Morse interaction kernels.

Compares final accuracy, precision and the accuracy on applicants the
initial classifier got wrong.

    python3 scripts/loan_kernels.py --out runs/loan
"""

import argparse
from pathlib import Path

from coupledwgf.scenarios import load_config, resolve_config, run_scenario
from coupledwgf.scenarios.charts import loss_chart


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()
    runs = {}
    for name in ("loan_repulsive", "loan_morse"):
        out = args.out / name if args.out else None
        runs[name] = run_scenario(load_config(resolve_config(name)), out_dir=out)
        m = runs[name].summary["metrics"]
        print(f"{name:<16} accuracy {m['final_accuracy']:.3f}  precision {m['final_precision']}  "
              f"initially misclassified {m['final_subgroup_initially_misclassified']:.3f}")
    if args.out:
        path = loss_chart(runs["loan_repulsive"].trajectory, args.out / "loss_compare.svg",
                          others={"morse": runs["loan_morse"].trajectory})
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
