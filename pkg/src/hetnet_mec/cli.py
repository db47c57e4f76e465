"""Command-line driver.

Subcommands::

    hetnet-mec scenario --scenario fig2 [--seeds 4] [--users 6] [--out file.toml]
    hetnet-mec solve    --scenario fig2 --scheme admm,centralized [--rho 2] [--out dir]
    hetnet-mec converge --scenario fig2 --rho 0.4,1,2,4 --seeds 2 --out runs/fig2
    hetnet-mec sweep    --scenario fig3 --users 4,6,8 --seeds 1,2,3,4,5 --scheme admm,centralized --out runs/fig3

Exit codes: 0 on success, 2 when any run is infeasible, 1 on usage errors.
Log verbosity comes from ``HETNET_MEC_LOG_LEVEL`` (default WARNING).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .experiments import SCHEMES, ExperimentSpec, emit_report, run_convergence_study, run_user_sweep, solve_scheme
from .problem import build_instance
from .scenario import ScenarioError, dump_scenario, load_scenario
from .units import UnitError

LOG_ENV = "HETNET_MEC_LOG_LEVEL"

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _list(kind):
    def parse(text: str):
        try:
            items = [kind(t) for t in text.split(",") if t.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
        if not items:
            raise argparse.ArgumentTypeError("empty list")
        return items
    return parse


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hetnet-mec", description="Distributed resource allocation for cache-enabled MEC HetNets.")
    p.add_argument("--version", action="version", version=f"hetnet-mec {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, solver=True):
        sp.add_argument("--scenario", required=True, help="config path or builtin name (fig2, fig3)")
        sp.add_argument("--seeds", type=_list(int), default=None, help="comma-separated seeds")
        sp.add_argument("--users", type=_list(int), default=None, help="comma-separated user counts")
        sp.add_argument("--out", type=Path, default=None)
        if solver:
            sp.add_argument("--scheme", type=_list(str), default=["admm"],
                            help=f"comma-separated schemes from {', '.join(SCHEMES)}")
            sp.add_argument("--rho", type=_list(float), default=[2.0])
            sp.add_argument("--tol-pri", type=float, default=1e-6)
            sp.add_argument("--tol-dual", type=float, default=1e-6)
            sp.add_argument("--max-iters", type=int, default=1000)
            sp.add_argument("--no-caching", action="store_true",
                            help="use the no-caching variant of every scheme")
            sp.add_argument("--timing", action="store_true",
                            help="add wall-time columns (breaks byte-identical reruns)")

    common(sub.add_parser("scenario", help="print a scenario as normalized TOML"), solver=False)
    common(sub.add_parser("solve", help="solve one scenario with each scheme"))
    common(sub.add_parser("converge", help="ADMM convergence traces across rho values"))
    common(sub.add_parser("sweep", help="utility versus user count"))
    return p


def _spec(args, seeds_default) -> ExperimentSpec:
    schemes = list(args.scheme)
    if args.no_caching:
        schemes = [s if s.endswith("-no-caching") else f"{s}-no-caching" for s in schemes]
    try:
        return ExperimentSpec(
            scenario=args.scenario, schemes=schemes, rhos=args.rho, users=args.users,
            seeds=args.seeds if args.seeds is not None else seeds_default, out_dir=args.out,
            tol_primal=args.tol_pri, tol_dual=args.tol_dual, max_iterations=args.max_iters,
            timing=args.timing)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _default_seed(args) -> list[int]:
    # without --seeds, run the config's own seed
    return [load_scenario(args.scenario).seed]


def _run(args) -> int:
    if args.command == "scenario":
        seed = args.seeds[0] if args.seeds else None
        users = args.users[0] if args.users else None
        text = dump_scenario(load_scenario(args.scenario, seed=seed, users=users))
        if args.out is not None:
            args.out.write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        return EXIT_OK

    spec = _spec(args, _default_seed(args))
    if args.command == "solve":
        reports = []
        users = spec.users or [None]
        for count in users:
            for seed in spec.seeds:
                inst = build_instance(load_scenario(spec.scenario, seed=seed, users=count))
                for scheme in spec.schemes:
                    for rho in spec.rhos:
                        rep = solve_scheme(inst, scheme, spec.admm_config(rho))
                        rep.meta.update(seed=seed, rho=rho, users=inst.n_users)
                        reports.append(rep)
    elif args.command == "converge":
        reports = run_convergence_study(spec)
    else:
        if not spec.users:
            raise UsageError("sweep needs --users")
        reports = run_user_sweep(spec)

    text, _ = emit_report(reports, spec.out_dir, timing=spec.timing)
    sys.stdout.write(text)
    return EXIT_INFEASIBLE if any(r.termination == "infeasible" for r in reports) else EXIT_OK


def main(argv=None) -> int:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _run(args)
    except (UsageError, ScenarioError, UnitError, FileNotFoundError) as exc:
        print(f"hetnet-mec: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
