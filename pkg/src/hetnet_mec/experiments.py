"""Experiment campaigns: convergence traces across penalties and user-count sweeps.

Output files are CSV (UTF-8, header row, 12 significant digits).  Unless
timing is requested, nothing time-dependent is written, so reruns with the
same seeds produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .admm import AdmmConfig, SolveReport, admm_solve, fmt
from .lp import solve_centralized
from .problem import ProblemInstance, build_instance
from .rounding import round_allocation
from .scenario import load_scenario
from .subqp import InfeasibleSubproblem

__all__ = [
    "SCHEMES",
    "ExperimentSpec",
    "solve_scheme",
    "run_convergence_study",
    "run_user_sweep",
    "emit_report",
    "iterations_to_threshold",
]

log = logging.getLogger(__name__)

SCHEMES = ("admm", "centralized", "admm-no-caching", "centralized-no-caching")
VERSION_HEADER = f"# hetnet-mec {__version__}"


@dataclass
class ExperimentSpec:
    scenario: str
    schemes: Sequence[str] = ("admm",)
    rhos: Sequence[float] = (2.0,)
    users: Sequence[int] | None = None
    seeds: Sequence[int] = (0,)
    out_dir: Path | None = None
    tol_primal: float = 1e-6
    tol_dual: float = 1e-6
    max_iterations: int = 1000
    timing: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("schemes", "rhos", "seeds"):
            if not list(getattr(self, name)):
                raise ValueError(f"{name}: list must not be empty")
        if self.users is not None and not list(self.users):
            raise ValueError("users: list must not be empty")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad:
            raise ValueError(f"schemes: unknown {bad}; choose from {list(SCHEMES)}")
        if any(not r > 0 for r in self.rhos):
            raise ValueError("rhos: every penalty must be > 0")
        if self.out_dir is not None:
            self.out_dir = Path(self.out_dir)

    def admm_config(self, rho: float) -> AdmmConfig:
        return AdmmConfig(rho=rho, tol_primal=self.tol_primal, tol_dual=self.tol_dual,
                          max_iterations=self.max_iterations)


def solve_scheme(inst: ProblemInstance, scheme: str, config: AdmmConfig = AdmmConfig()) -> SolveReport:
    """Solve with one scheme, then round the relaxed result to a binary allocation."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    t0 = time.perf_counter()
    if scheme.endswith("-no-caching"):
        inst = inst.without_caching()
    if scheme.startswith("centralized"):
        sol = solve_centralized(inst)
        if sol.status != "optimal":
            return SolveReport(scheme, math.nan, sol.iterations, False, sol.status,
                               wall_time_s=time.perf_counter() - t0, meta={"certificate": sol.certificate})
        alloc = sol.allocation
        report = SolveReport(scheme, sol.objective, sol.iterations, True, "optimal")
    else:
        try:
            alloc, report = admm_solve(inst, config)
        except InfeasibleSubproblem as exc:
            return SolveReport(scheme, math.nan, 0, False, "infeasible",
                               wall_time_s=time.perf_counter() - t0,
                               meta={"certificate": str(exc), "bs": exc.bs_id})
        report.scheme = scheme
        report.meta.pop("state", None)
    rounded = round_allocation(inst, alloc)
    report.rounded_utility = rounded.utility
    report.rounded_feasible = rounded.feasible
    report.wall_time_s = time.perf_counter() - t0
    report.meta["allocation"] = alloc
    return report


def iterations_to_threshold(utilities: Sequence[float], rel: float = 1e-3) -> int:
    """First iteration after which the utility stays within ``rel`` of its final value."""
    if not utilities:
        return 0
    final = utilities[-1]
    band = rel * max(abs(final), 1e-300)
    k = len(utilities)
    while k > 0 and abs(utilities[k - 1] - final) <= band:
        k -= 1
    return k + 1


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    buf.write(VERSION_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, float) else v for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _bool(x: bool) -> str:
    return "true" if x else "false"


def run_convergence_study(spec: ExperimentSpec) -> list[SolveReport]:
    """One ADMM run per (seed, rho), each with its own trace file, plus a summary."""
    out = spec.out_dir
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    users = spec.users[0] if spec.users else None
    reports, rows = [], []
    for seed in spec.seeds:
        scen = load_scenario(spec.scenario, seed=seed, users=users)
        inst = build_instance(scen)
        ref = solve_centralized(inst)
        for rho in spec.rhos:
            rep = solve_scheme(inst, "admm", spec.admm_config(rho))
            rep.meta.update(seed=seed, rho=rho, users=inst.n_users)
            reports.append(rep)
            thr = iterations_to_threshold(rep.trace.utility) if rep.trace else 0
            rows.append([float(rho), seed, rep.iterations, _bool(rep.converged), rep.termination,
                         float(rep.final_utility), float(ref.objective), thr, float(rep.rounded_utility)]
                        + ([float(rep.wall_time_s)] if spec.timing else []))
            if out is not None and rep.trace is not None:
                (out / f"trace_rho{rho:g}_seed{seed}.csv").write_text(
                    VERSION_HEADER + "\n" + rep.trace.to_csv(spec.timing), encoding="utf-8")
    if out is not None:
        header = ["rho", "seed", "iterations", "converged", "termination", "final_utility",
                  "centralized_utility", "iterations_to_1e-3", "rounded_utility"]
        _write_csv(out / "convergence_summary.csv", header + (["wall_time_s"] if spec.timing else []), rows)
    return reports


def run_user_sweep(spec: ExperimentSpec) -> list[SolveReport]:
    """Solve every (user count, seed, scheme); summarize mean/std utility per (count, scheme).

    Users are added incrementally: the scenario with ``k`` users is a prefix
    of the one with more users for the same seed.
    """
    if not spec.users:
        raise ValueError("users: a user-count sweep list is required")
    out = spec.out_dir
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    rho = spec.rhos[0]
    reports, run_rows = [], []
    for count in spec.users:
        for seed in spec.seeds:
            inst = build_instance(load_scenario(spec.scenario, seed=seed, users=count))
            for scheme in spec.schemes:
                rep = solve_scheme(inst, scheme, spec.admm_config(rho))
                rep.meta.update(seed=seed, rho=rho, users=count)
                reports.append(rep)
                run_rows.append([count, seed, scheme, float(rep.final_utility), float(rep.rounded_utility),
                                 rep.iterations, _bool(rep.converged), rep.termination]
                                + ([float(rep.wall_time_s)] if spec.timing else []))
    summary = sweep_summary(reports)
    if out is not None:
        _write_csv(out / "sweep_runs.csv",
                   ["users", "seed", "scheme", "final_utility", "rounded_utility", "iterations",
                    "converged", "termination"] + (["wall_time_s"] if spec.timing else []), run_rows)
        _write_csv(out / "sweep_summary.csv",
                   ["users", "scheme", "runs", "mean_utility", "std_utility", "mean_rounded_utility"],
                   [[r["users"], r["scheme"], r["runs"], r["mean_utility"], r["std_utility"],
                     r["mean_rounded_utility"]] for r in summary])
    return reports


def sweep_summary(reports: Sequence[SolveReport]) -> list[dict]:
    groups: dict[tuple, list[SolveReport]] = {}
    for rep in reports:
        groups.setdefault((rep.meta["users"], rep.scheme), []).append(rep)
    rows = []
    for (users, scheme), reps in groups.items():
        util = np.array([r.final_utility for r in reps])
        rnd = np.array([r.rounded_utility for r in reps])
        rows.append({"users": users, "scheme": scheme, "runs": len(reps),
                     "mean_utility": float(util.mean()), "std_utility": float(util.std()),
                     "mean_rounded_utility": float(rnd.mean())})
    return rows


def emit_report(reports: Sequence[SolveReport], path: Path | None = None,
                timing: bool = False) -> tuple[str, str]:
    """Human-readable summary and machine CSV for a list of reports."""
    if not reports:
        raise ValueError("emit_report needs at least one report")
    lines = [VERSION_HEADER]
    header = ["scheme", "users", "seed", "rho", "final_utility", "rounded_utility", "rounded_feasible",
              "iterations", "converged", "termination"] + (["wall_time_s"] if timing else [])
    rows = []
    for rep in reports:
        m = rep.meta
        row = [rep.scheme, m.get("users", ""), m.get("seed", ""), float(m.get("rho", math.nan)),
               float(rep.final_utility), float(rep.rounded_utility), _bool(rep.rounded_feasible),
               rep.iterations, _bool(rep.converged), rep.termination]
        if timing:
            row.append(float(rep.wall_time_s))
        rows.append(row)
        text = (f"scheme={rep.scheme} users={m.get('users', '')} seed={m.get('seed', '')} "
                f"utility={fmt(rep.final_utility)} rounded={fmt(rep.rounded_utility)} "
                f"iterations={rep.iterations} converged={_bool(rep.converged)} "
                f"termination={rep.termination}")
        if not rep.converged:
            text += "  [NOT CONVERGED]"
        if timing:
            text += f" wall_time_s={fmt(rep.wall_time_s)}"
        lines.append(text)
    buf = io.StringIO()
    buf.write(VERSION_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, float) else v for v in row])
    text = "\n".join(lines) + "\n"
    if path is not None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        (path / "report.txt").write_text(text, encoding="utf-8")
        (path / "report.csv").write_text(buf.getvalue(), encoding="utf-8")
    return text, buf.getvalue()
