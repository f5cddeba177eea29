import subprocess
import sys

import pytest

from secrecy_an.cli import main
from secrecy_an.experiments import load_csv


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def parse(out):
    return dict(line.split(": ", 1) for line in out.strip().splitlines())


def test_solve_smoke(capsys):
    code, out, _ = run(["solve", "--nt", "4", "--k", "2", "--ne", "2", "--power-db", "15", "--seed", "7",
                        "--alpha-grid", "8"], capsys)
    assert code == 0
    kv = parse(out)
    assert {"rate_bits", "rank_W", "trace_W", "trace_Sigma"} <= set(kv)
    assert kv["rank_W"] == "1" and kv["power_ok"] == "true"
    total = float(kv["trace_W"]) + float(kv["trace_Sigma"])
    assert total <= 10**1.5 + 1e-6


def test_seed_determines_output(capsys):
    args = ["solve", "--nt", "3", "--k", "1", "--ne", "2", "--seed", "3", "--alpha-grid", "6"]
    _, a, _ = run(args, capsys)
    _, b, _ = run(args, capsys)
    assert a == b


@pytest.mark.parametrize("argv,flag", [
    (["solve", "--nt", "0"], "--nt"),
    (["solve", "--k", "-1"], "--k"),
    (["solve", "--ne", "2", "3", "--k", "3"], "--ne"),
    (["solve", "--alpha-grid", "1"], "--alpha-grid"),
    (["solve", "--power-db", "inf"], "--power-db"),
    (["solve", "--nt", "abc"], "--nt"),
    (["solve", "--seed", "-4"], "--seed"),
    (["robust", "--eps", "0"], "--eps"),
    (["outage", "--delta", "0.7"], "--delta"),
    (["outage", "--sigma", "-1"], "--sigma"),
    (["outage", "--mc-draws", "10"], "--mc-draws"),
    (["solve", "--itc-rho-db", "5", "--L", "0"], "--L"),
    (["sweep", "--config", "/nonexistent/plan.toml"], "--config"),
    (["sweep", "--scenario", "power-sweep", "--trials", "0"], "--trials"),
    (["sweep", "--scenario", "nope"], "--scenario"),
    (["sweep", "--jobs", "0", "--scenario", "power-sweep"], "--jobs"),
    (["solve", "--channels", "/nonexistent/c.json"], "--channels"),
    (["eval-design", "--design", "/nonexistent/d.json", "--channels", "x"], "--design"),
])
def test_usage_errors_name_flag(argv, flag, capsys):
    code, _, err = run(argv, capsys)
    assert code == 2
    assert flag in err


def test_no_subcommand(capsys):
    code, _, err = run([], capsys)
    assert code == 2


def test_sweep_config_and_overrides(tmp_path, capsys):
    cfg = tmp_path / "plan.toml"
    cfg.write_text('scenario = "power-sweep"\nsweep = [10.0]\nmethods = ["no-an-srm", "isotropic-an"]\n'
                   'nt = 3\nK = 2\nne = 2\ntrials = 5\nalpha_grid = 6\n')
    out = tmp_path / "fig.csv"
    pd = tmp_path / "pd.csv"
    code, text, _ = run(["sweep", "--config", str(cfg), "--trials", "2", "--out", str(out),
                         "--plot-data", str(pd), "--no-timing"], capsys)
    assert code == 0
    tab = load_csv(out)
    assert len(tab.rows) == 4  # --trials overrides the file's 5
    assert parse(text)["rows"] == "4"
    assert pd.read_text().count("\n") == 3


def test_round_trip_through_files(tmp_path, capsys):
    d, c, o = tmp_path / "d.json", tmp_path / "c.json", tmp_path / "s.csv"
    code, out, _ = run(["robust", "--nt", "3", "--k", "1", "--ne", "2", "--eps", "0.1", "--alpha-grid", "6",
                        "--save-design", str(d), "--save-channels", str(c), "--out", str(o)], capsys)
    assert code == 0
    wc = float(parse(out)["worst_case_rate_bits"])
    code, out, _ = run(["eval-design", "--design", str(d), "--channels", str(c), "--eps", "0.1",
                        "--sigma", "0.02", "--mc-draws", "1000"], capsys)
    assert code == 0
    kv = parse(out)
    assert float(kv["worst_case_rate_bits"]) == pytest.approx(wc, abs=1e-9)
    assert 0.0 <= float(kv["empirical_outage"]) <= 1.0
    assert len(load_csv(o).rows) == 1
    code, out, _ = run(["solve", "--channels", str(c), "--alpha-grid", "6"], capsys)
    assert code == 0


def test_outage_and_shaping_commands(capsys):
    code, out, _ = run(["outage", "--nt", "3", "--k", "1", "--ne", "1", "--alpha-grid", "6",
                        "--mc-draws", "1000"], capsys)
    assert code == 0 and float(parse(out)["empirical_outage"]) <= 0.01
    for extra in (["--per-antenna"], ["--itc-rho-db", "5", "--np", "2"]):
        code, out, _ = run(["solve", "--nt", "3", "--k", "1", "--ne", "1", "--alpha-grid", "6"] + extra, capsys)
        assert code == 0 and parse(out)["power_ok"] == "true"


def test_solver_failure_exit_code(monkeypatch, capsys):
    import secrecy_an.cli as cli
    from secrecy_an.srm import SolverFailure

    def fail(*a, **k):
        raise SolverFailure("forced")
    monkeypatch.setattr(cli, "an_srm", fail)
    code, _, err = run(["solve", "--nt", "2", "--k", "1", "--ne", "1"], capsys)
    assert code == 1 and "forced" in err


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "secrecy_an", "solve", "--nt", "0"], capture_output=True, text=True)
    assert r.returncode == 2 and "--nt" in r.stderr
    r = subprocess.run([sys.executable, "-m", "secrecy_an", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "dB" in r.stdout + subprocess.run(
        [sys.executable, "-m", "secrecy_an", "solve", "--help"], capture_output=True, text=True).stdout
