"""Command line entry point: ``cipcontract <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .domain import ContractMenu, Scenario, validate_ladder
from .experiments import DEFAULT_SEED, ExperimentConfig, default_scenario, fig2_scenario, run_experiment
from .feasibility import build_relaxed_constraints, check_ic_full, check_ir, check_monotonicity
from .negotiation import run_negotiation
from .solver import brute_force_oracle, solve_optimal

log = logging.getLogger("cipcontract")


def load_scenario(path: str) -> Scenario:
    with open(path) as fh:
        return Scenario.from_dict(json.load(fh))


def _emit(obj: dict, out: str | None):
    text = json.dumps(obj, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig(args.command, n_min=args.n_min, n_max=args.n_max, budget=args.budget,
                           seed=args.seed, out=args.out, t_max=args.t_max)
    table = run_experiment(cfg)
    if args.out:
        Path(args.out + ".provenance.json").write_text(json.dumps(table.provenance, indent=2) + "\n")
        log.info("wrote %s (%d rows)", args.out, len(table.rows))
    else:
        sys.stdout.write(table.to_csv())
    return 0


def cmd_gen_scenario(args) -> int:
    if args.fig2:
        sc = fig2_scenario() if args.t_max is None else fig2_scenario(args.t_max)
    else:
        sc = default_scenario(args.n, seed=args.seed, w_count=args.levels, t_max=args.t_max)
    _emit(sc.to_dict(), args.out)
    return 0


def cmd_validate(args) -> int:
    sc = load_scenario(args.scenario)
    ladder_rep = validate_ladder(sc.ladder)
    report = {"ladder": ladder_rep.to_dict()}
    ok = ladder_rep.ok
    if args.menu:
        with open(args.menu) as fh:
            d = json.load(fh)
        menu = ContractMenu.from_dict(d["menu"] if "menu" in d else d)
        lad, beta, v = sc.ladder, sc.beta, sc.v
        reps = {
            "ir": check_ir(menu, lad, beta, v),
            "ic": check_ic_full(menu, lad, beta, v),
            "monotonicity": check_monotonicity(menu, lad, beta, v),
        }
        order = [e.ci for e in menu.entries]
        sub = sc.subset(order)
        reps["relaxed"] = build_relaxed_constraints(sub, [e.assigned for e in menu.entries]).evaluate(
            menu.t)
        report.update({k: r.to_dict() for k, r in reps.items()})
        ok = ok and all(r.satisfied for r in reps.values())
    report["ok"] = ok
    _emit(report, args.out)
    return 0 if ok else 1


def cmd_solve(args) -> int:
    sc = load_scenario(args.scenario)
    res = brute_force_oracle(sc, args.step) if args.oracle else solve_optimal(sc)
    _emit(res.to_dict(), args.out)
    return 0 if res.optimal else 2


def cmd_negotiate(args) -> int:
    sc = load_scenario(args.scenario)
    trace = run_negotiation(sc, max_rounds=args.max_rounds)
    _emit(trace.to_dict(), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cipcontract",
                                 description="Contract menus for protecting critical infrastructures.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, help_ in (("fig1", "CC utility vs equal split over N"),
                        ("fig2", "CI utilities, contract vs equal split"),
                        ("fig3", "CI utility at every menu entry")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--n-min", type=int, default=3)
        p.add_argument("--n-max", type=int, default=8)
        p.add_argument("--budget", choices=("fixed", "grow", "both"), default="both")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        p.add_argument("--t-max", type=float, default=None, help="override the base budget")
        p.add_argument("--out", help="CSV path (stdout if omitted)")
        p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("gen-scenario", help="write a default scenario as JSON")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--levels", type=int, default=3, help="number of w levels")
    p.add_argument("--t-max", type=float, default=None)
    p.add_argument("--fig2", action="store_true", help="the four-CI ascending instance")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_scenario)

    p = sub.add_parser("validate", help="check a scenario ladder and, optionally, a menu")
    p.add_argument("scenario")
    p.add_argument("--menu", help="menu JSON or a solve result")
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="optimal menu for a scenario")
    p.add_argument("scenario")
    p.add_argument("--oracle", action="store_true", help="use grid enumeration instead of the LP")
    p.add_argument("--step", type=float, default=1.0, help="grid step for --oracle")
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("negotiate", help="run the offer/accept loop")
    p.add_argument("scenario")
    p.add_argument("--max-rounds", type=int, default=None, help="default 2N")
    p.add_argument("--out")
    p.set_defaults(func=cmd_negotiate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
