"""Command line entry point: ``pcdsse run`` and ``pcdsse compare``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from ..fopc import ConvergenceError
from ..netmodel import PowerFlowError
from .compare import MODES, compare
from .runner import run_scenario
from .scenario import load_scenario, load_sweep

# flag -> scenario field
OVERRIDES = {
    "P": int, "C": int, "alpha": float, "beta": float, "gamma": float, "h": float,
    "delta": float, "reg_a": float, "wv": float, "sigma_v": float, "window": float,
    "steps": int, "seed": int,
}


def _int_list(text: str) -> list:
    return [int(x) for x in text.replace(",", " ").split()]


def _add_overrides(p: argparse.ArgumentParser):
    g = p.add_argument_group("scenario overrides")
    for name, typ in OVERRIDES.items():
        g.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)
    g.add_argument("--pmu-nodes", dest="pmu_nodes", type=_int_list, default=None,
                   help="comma separated node ids")


def _overrides(args) -> dict:
    keys = list(OVERRIDES) + ["pmu_nodes"]
    return {k: getattr(args, k) for k in keys if getattr(args, k) is not None}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcdsse", description="Prediction-correction state estimation experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario")
    run.add_argument("--scenario", required=True,
                     help="scenario JSON file or bundled:<name>")
    run.add_argument("--out", default=None, help="output directory")
    _add_overrides(run)

    cmp_ = sub.add_parser("compare", help="compare scenario variants")
    cmp_.add_argument("--mode", required=True, choices=sorted(MODES))
    cmp_.add_argument("--base", required=True, help="base scenario JSON or bundled:<name>")
    cmp_.add_argument("--sweep", required=True, help="JSON list of variant overrides")
    cmp_.add_argument("--out", default=None)
    cmp_.add_argument("--repeats", type=int, default=3,
                      help="lockstep timing replays (fixed_time)")
    cmp_.add_argument("--jobs", type=int, default=1, help="variants run in parallel")
    _add_overrides(cmp_)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            s = load_scenario(args.scenario).replace(**_overrides(args))
            res = run_scenario(s, out=args.out)
            print(json.dumps(res.summary, indent=2))
            if res.out_dir is not None:
                print(f"wrote {res.out_dir}", file=sys.stderr)
        else:
            base = load_scenario(args.base).replace(**_overrides(args))
            table = compare(args.mode, base, load_sweep(args.sweep), repeats=args.repeats,
                            jobs=args.jobs, out=args.out)
            print(table.to_text())
    except (ValueError, OSError, PowerFlowError, ConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
