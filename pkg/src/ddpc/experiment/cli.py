"""Command-line entry point: ``ddpc <command> [--config FILE] [--seed N] [--out DIR]``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from ..errors import ConfigError, DdpcError, MissingRuns
from . import campaigns
from .report import report
from .scenario import Scenario, load_scenario

log = logging.getLogger("ddpc")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="scenario JSON file")
    common.add_argument("--seed", type=int, help="base seed (model i uses seed + i)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--paper-scale", action="store_true",
                        help="50 models and six speed points instead of the desk sweep")
    common.add_argument("--models", type=int, help="override the number of randomized models")
    common.add_argument("--workers", type=int, help="parallel worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="ddpc",
                                 description="Data-driven predictive control campaigns on a LIP walker")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("collect", parents=[common], help="record nominal walking data")
    gs = sub.add_parser("grid-search", parents=[common], help="rank hyperparameter combinations")
    gs.add_argument("--model", type=int, help="model seed to search on (default: --seed)")
    ft = sub.add_parser("fit", parents=[common], help="fit and save transition matrices")
    ft.add_argument("--format", choices=["json", "npz"], default="json")
    sub.add_parser("compare", parents=[common], help="nominal vs DDPC vs LIP-MPC sweep")
    sub.add_parser("perturb", parents=[common], help="force-ramp adaptation with online updates")
    sub.add_parser("report", parents=[common], help="long-format CSV of finished runs")
    return ap


def resolve(args) -> Scenario:
    sc = load_scenario(args.config) if args.config else Scenario()
    if args.paper_scale:
        sc = sc.full_scale()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.workers is not None:
        over["workers"] = args.workers
    if args.out is not None:
        # --out names the campaign directory itself
        over["output_dir"] = str(args.out.parent)
        over["name"] = args.out.name
    if args.models is not None:
        over["plant"] = dataclasses.replace(sc.plant, models=args.models)
    return dataclasses.replace(sc, **over) if over else sc


def _cmd_collect(sc: Scenario, args):
    paths = campaigns.collect(sc)
    print(f"wrote {len(paths)} trajectories under {sc.output_path() / 'data'}")


def _cmd_grid(sc: Scenario, args):
    rows = campaigns.grid_search_scenario(sc, args.model)
    path = campaigns.write_table(sc.output_path() / "grid_search.csv", rows)
    best = rows[0]
    print(f"best: dt={best['delta_t']} T={best['T']} T_ini={best['T_ini']} N={best['N']} "
          f"mse={best['mse']:.3g} ({len(rows)} rows in {path})")


def _cmd_fit(sc: Scenario, args):
    out = sc.output_path()
    for seed in sc.model_seeds():
        folder = out / "data" / f"model_{seed}"
        data = campaigns.load_model_data(folder)[0] if folder.is_dir() else None
        g = campaigns.fit(sc, seed, data)
        path = campaigns.save_fit(out / "fits" / f"model_{seed}.{args.format}", g)
        print(f"model {seed}: residual {g.relative_residual:.3g} -> {path}")


def _cmd_compare(sc: Scenario, args):
    reports = campaigns.run_comparison(sc)
    for row in campaigns.summarize(reports):
        print(f"{row['controller']:8s} v={row['speed']:.3f} "
              f"step err {row['mean_step_error_mean']:.4f} "
              f"survival {row['survival_time_mean']:.2f} s")


def _cmd_perturb(sc: Scenario, args):
    if args.config is None:
        # built-in campaign: nominal against online-updated DDPC
        sc = dataclasses.replace(sc, controllers=("nominal", "ddpc"),
                                 online=dataclasses.replace(sc.online, enabled=True))
    reports = campaigns.run_perturbation(sc)
    for kind, rate in campaigns.success_rates(reports).items():
        print(f"{kind:8s} success rate {rate:.2f}")


def _cmd_report(sc: Scenario, args):
    path = report(sc.output_path())
    print(f"wrote {path}")


COMMANDS = {"collect": _cmd_collect, "grid-search": _cmd_grid, "fit": _cmd_fit,
            "compare": _cmd_compare, "perturb": _cmd_perturb, "report": _cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        sc = resolve(args)
        sc.output_path().mkdir(parents=True, exist_ok=True)
        (sc.output_path() / "scenario.json").write_text(json.dumps(sc.to_dict(), indent=2))
        COMMANDS[args.command](sc, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except MissingRuns as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except DdpcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
