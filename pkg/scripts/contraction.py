"""Contraction and energy decay of the quadratic games against their theoretical rates.

    python3 scripts/contraction.py --out runs/contraction
"""

import argparse
from pathlib import Path

from coupledwgf.scenarios import load_config, resolve_config, run_scenario

# scenario -> (rate constant, factor); energy gaps decay at twice the distance rate
SCENARIOS = {
    "competitive_quadratic_fv": ("lambda_c", 1),
    "competitive_quadratic_particles": ("lambda_c", 1),
    "cooperative_quadratic": ("lambda_a", 2),
    "fast_x_tanh": ("lambda_b", 1),
    "fast_rho_bilinear": ("lambda_d", 1),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()
    print(f"{'scenario':<34} {'channel':<12} {'fitted':>8} {'theory':>8} {'r2':>7}")
    for name, (const, k) in SCENARIOS.items():
        out = args.out / name if args.out else None
        s = run_scenario(load_config(resolve_config(name)), out_dir=out).summary
        fit = s["fit"]
        print(f"{name:<34} {fit['channel']:<12} {fit['rate']:8.4f} "
              f"{k * s['theory'][const]:8.4f} {fit['r_squared']:7.4f}   ({k} x {const})")


if __name__ == "__main__":
    main()
