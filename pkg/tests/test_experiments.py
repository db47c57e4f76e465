import math
from pathlib import Path

import numpy as np
import pytest

from hetnet_mec.admm import AdmmConfig, SolveReport
from hetnet_mec.experiments import (
    ExperimentSpec, emit_report, iterations_to_threshold, run_convergence_study, run_user_sweep, solve_scheme,
    sweep_summary,
)
from hetnet_mec.problem import build_instance
from hetnet_mec.scenario import build_scenario

DATA = Path(__file__).parent / "data"


@pytest.mark.parametrize("kw", [{"rhos": []}, {"seeds": []}, {"schemes": []}, {"users": []},
                                {"schemes": ["admm", "greedy"]}, {"rhos": [1.0, -2.0]}])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        ExperimentSpec("fig2", **kw)


def test_iterations_to_threshold():
    assert iterations_to_threshold([1.0, 5.0, 9.99, 10.0]) == 3
    assert iterations_to_threshold([10.0, 10.0]) == 1
    assert iterations_to_threshold([]) == 0


def test_convergence_study_files(tmp_path):
    spec = ExperimentSpec("fig2", rhos=[0.4, 2.0], seeds=[2], out_dir=tmp_path)
    reps = run_convergence_study(spec)
    assert sorted(p.name for p in tmp_path.iterdir()) == [
        "convergence_summary.csv", "trace_rho0.4_seed2.csv", "trace_rho2_seed2.csv"]
    u = [r.final_utility for r in reps]
    assert abs(u[0] - u[1]) <= 1e-3 * abs(u[0])
    summary = (tmp_path / "convergence_summary.csv").read_text().splitlines()
    assert summary[0] == "# hetnet-mec 0.1.0"
    assert summary[1].split(",")[:4] == ["rho", "seed", "iterations", "converged"]
    assert len(summary) == 4


def test_convergence_traces_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        run_convergence_study(ExperimentSpec("fig2", rhos=[1.0], seeds=[2, 2], users=[5], out_dir=out))
    for f in a.iterdir():
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_sweep_single_point_gives_one_row(tmp_path):
    spec = ExperimentSpec("fig3", schemes=["admm"], users=[4], seeds=[1], out_dir=tmp_path)
    run_user_sweep(spec)
    rows = (tmp_path / "sweep_summary.csv").read_text().splitlines()
    assert len(rows) == 3 and rows[2].startswith("4,admm,1,")


def test_sweep_trends():
    spec = ExperimentSpec("fig3", schemes=["admm", "admm-no-caching"], users=[4, 6, 8], seeds=[1, 2])
    summary = {(r["users"], r["scheme"]): r for r in sweep_summary(run_user_sweep(spec))}
    for k in (4, 6, 8):
        assert summary[k, "admm"]["mean_utility"] >= summary[k, "admm-no-caching"]["mean_utility"]
    means = [summary[k, "admm"]["mean_utility"] for k in (4, 6, 8)]
    assert means == sorted(means)


def test_sweep_requires_counts():
    with pytest.raises(ValueError):
        run_user_sweep(ExperimentSpec("fig3"))


def test_scheme_lattice():
    from hetnet_mec.scenario import load_scenario
    inst = build_instance(load_scenario("fig3", seed=4, users=5))
    cfg = AdmmConfig(tol_primal=1e-6, tol_dual=1e-6)
    got = {s: solve_scheme(inst, s, cfg).final_utility
           for s in ("admm", "centralized", "admm-no-caching", "centralized-no-caching")}
    assert got["centralized"] >= got["admm"] - 1e-3 * abs(got["centralized"])
    assert got["admm"] >= got["admm-no-caching"] - 1e-6 * abs(got["admm"])
    assert got["centralized"] >= got["centralized-no-caching"]


def infeasible_instance():
    doc = {"seed": 0, "bss": [{"compute": "1GHz"}, {"compute": "1GHz"}],
           "users": {"count": 2, "min_compute_rate": "1Tbps"}}
    return build_instance(build_scenario(doc))


@pytest.mark.parametrize("scheme", ["admm", "centralized"])
def test_infeasible_run_is_reported_not_raised(scheme):
    rep = solve_scheme(infeasible_instance(), scheme)
    assert rep.termination == "infeasible"
    assert not rep.converged and math.isnan(rep.final_utility)
    assert "C4" in rep.meta["certificate"]


def make_report(converged):
    return SolveReport("admm", 12.5, 7, converged, "converged" if converged else "max_iterations",
                       rounded_utility=12.0, rounded_feasible=True, meta={"users": 3, "seed": 1, "rho": 2.0})


def test_emit_report_flags():
    text, csv_text = emit_report([make_report(True), make_report(False)])
    lines = text.splitlines()
    assert lines[0] == "# hetnet-mec 0.1.0"
    assert "converged=true" in lines[1] and "iterations=7" in lines[1]
    assert "converged=false" in lines[2] and "NOT CONVERGED" in lines[2]
    assert "NOT CONVERGED" not in lines[1]
    assert csv_text.splitlines()[1] == ("scheme,users,seed,rho,final_utility,rounded_utility,rounded_feasible,"
                                        "iterations,converged,termination")
    assert csv_text.splitlines()[2] == "admm,3,1,2,12.5,12,true,7,true,converged"
    with pytest.raises(ValueError):
        emit_report([])


def test_emit_report_golden(tmp_path):
    spec = ExperimentSpec("fig3", schemes=["centralized", "centralized-no-caching"], users=[3, 5], seeds=[1, 2])
    text, csv_text = emit_report(run_user_sweep(spec), tmp_path)
    assert csv_text == (DATA / "golden_report.csv").read_text(encoding="utf-8")
    assert (tmp_path / "report.csv").read_bytes() == (DATA / "golden_report.csv").read_bytes()
    assert (tmp_path / "report.txt").read_text() == text
