import logging
import subprocess
import sys

import pytest

from hetnet_mec.cli import main
from hetnet_mec.scenario import load_scenario

INFEASIBLE = """seed = 1
[[bss]]
compute = "1GHz"
[users]
count = 2
min_compute_rate = "1Tbps"
"""


def test_scenario_dump_round_trips(tmp_path, capsys):
    assert main(["scenario", "--scenario", "fig2", "--seeds", "5", "--users", "3"]) == 0
    text = capsys.readouterr().out
    assert text.startswith("# normalized scenario, SI units")
    assert load_scenario(text) == load_scenario("fig2", seed=5, users=3)
    out = tmp_path / "s.toml"
    assert main(["scenario", "--scenario", "fig2", "--out", str(out)]) == 0
    assert load_scenario(out) == load_scenario("fig2")


def test_solve_prints_report(capsys):
    assert main(["solve", "--scenario", "fig2", "--users", "4", "--scheme", "admm,centralized"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "# hetnet-mec 0.1.0"
    assert lines[1].startswith("scheme=admm users=4 seed=2 ") and "converged=true" in lines[1]
    assert lines[2].startswith("scheme=centralized ")


def test_no_caching_flag(capsys):
    assert main(["solve", "--scenario", "fig2", "--users", "3", "--scheme", "centralized", "--no-caching"]) == 0
    assert "scheme=centralized-no-caching" in capsys.readouterr().out


def test_converge_and_sweep_write_files(tmp_path, capsys):
    out = tmp_path / "cv"
    assert main(["converge", "--scenario", "fig2", "--rho", "1,2", "--users", "4", "--out", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == {"convergence_summary.csv", "trace_rho1_seed2.csv",
                                                "trace_rho2_seed2.csv", "report.txt", "report.csv"}
    out = tmp_path / "sw"
    assert main(["sweep", "--scenario", "fig3", "--users", "3,4", "--seeds", "1",
                 "--scheme", "centralized", "--out", str(out), "--timing"]) == 0
    assert "wall_time_s" in (out / "sweep_runs.csv").read_text().splitlines()[1]


def test_infeasible_run_exits_2(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text(INFEASIBLE)
    assert main(["solve", "--scenario", str(cfg), "--scheme", "admm,centralized"]) == 2
    out = capsys.readouterr().out
    assert out.count("termination=infeasible") == 2


@pytest.mark.parametrize("argv", [
    ["sweep", "--scenario", "fig3", "--scheme", "bogus", "--users", "3"],
    ["sweep", "--scenario", "fig3"],
    ["solve", "--scenario", "no-such-config"],
    ["solve", "--scenario", "fig2", "--rho", ""],
    ["solve", "--scenario", "fig2", "--rho", "0"],
    ["solve"],
    ["frobnicate"],
])
def test_usage_errors_exit_1(argv, capsys):
    with pytest.raises(SystemExit) as info:
        sys.exit(main(argv))
    assert info.value.code == 1
    assert "error" in capsys.readouterr().err


def test_log_level_from_environment(monkeypatch):
    monkeypatch.setenv("HETNET_MEC_LOG_LEVEL", "debug")
    root = logging.getLogger()
    saved = root.handlers[:], root.level
    root.handlers.clear()
    try:
        main(["scenario", "--scenario", "fig2"])
        assert root.level == logging.DEBUG
    finally:
        root.handlers[:], _ = saved
        root.setLevel(saved[1])


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hetnet_mec.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.strip() == "hetnet-mec 0.1.0"
