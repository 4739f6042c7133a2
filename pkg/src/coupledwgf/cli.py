"""Command-line entry point.

    coupledwgf run <config> [--out DIR] [--seed N]
    coupledwgf rates <diagnostics.csv> --channel NAME [--window LO HI]
    coupledwgf validate <config>
    coupledwgf list-scenarios

``run`` exits 0 only if every embedded check passes (1 on failed checks,
2 on configuration or runtime errors).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, InvalidSeriesError
from .ot_metrics import fit_rate
from .scenarios import load_config, resolve_config, run_scenario, shipped_configs, summary_json, validate
from .trajectory import read_diagnostics

EXIT_OK, EXIT_CHECKS, EXIT_ERROR = 0, 1, 2


def _cmd_run(args) -> int:
    cfg = load_config(resolve_config(args.config))
    out = Path(args.out) if args.out else None
    res = run_scenario(cfg, out_dir=out, seed=args.seed)
    s = res.summary
    for c in s["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['metric']} = {c['value']} ({c['kind']} {c['bound']})")
    if out is None:
        sys.stdout.write(summary_json(s))
    else:
        print(f"wrote {out / 'summary.json'}")
    print("passed" if s["passed"] else "checks failed")
    return EXIT_OK if s["passed"] else EXIT_CHECKS


def _cmd_rates(args) -> int:
    diag = read_diagnostics(args.csv)
    if args.channel not in diag:
        print(f"error: channel {args.channel!r} not in {args.csv}; have {sorted(diag)}", file=sys.stderr)
        return EXIT_ERROR
    t, v = diag[args.channel]
    fit = fit_rate(t, v, tuple(args.window) if args.window else None)
    print(json.dumps({"channel": args.channel, **fit.to_dict()}, sort_keys=True, indent=2))
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = load_config(resolve_config(args.config))
    validate(cfg)
    print(f"{cfg.name}: ok")
    return EXIT_OK


def _cmd_list(args) -> int:
    for p in shipped_configs():
        cfg = load_config(p)
        print(f"{cfg.name:<34} {cfg.description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coupledwgf", description="Coupled Wasserstein gradient-flow scenarios.")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run a scenario config (path or shipped name)")
    p.add_argument("config")
    p.add_argument("--out", help="directory for CSV, SVG and summary.json")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("rates", help="fit an exponential decay rate to a diagnostics channel")
    p.add_argument("csv")
    p.add_argument("--channel", required=True)
    p.add_argument("--window", type=float, nargs=2, metavar=("LO", "HI"))
    p.set_defaults(func=_cmd_rates)
    p = sub.add_parser("validate", help="parse and pre-check a config without running it")
    p.add_argument("config")
    p.set_defaults(func=_cmd_validate)
    p = sub.add_parser("list-scenarios", help="list the shipped scenario configs")
    p.set_defaults(func=_cmd_list)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidSeriesError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (RuntimeError, ValueError, FloatingPointError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
