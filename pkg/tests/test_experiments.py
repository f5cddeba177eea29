import filecmp

import numpy as np
import pytest

import secrecy_an.experiments as ex
from secrecy_an.experiments import (
    CSV_HEADER,
    ExperimentPlan,
    ResultTable,
    Row,
    emit_csv,
    emit_plot_data,
    load_csv,
    run_robust_eval,
    run_sweep,
)


def plan(**kw):
    base = dict(scenario="power-sweep", sweep=[5.0, 15.0], methods=["an-srm", "no-an-srm", "isotropic-an"],
                nt=3, K=2, ne=[2], trials=2, alpha_grid=8, record_timing=False)
    base.update(kw)
    return ExperimentPlan(**base)


def test_plan_validation():
    with pytest.raises(ValueError, match="trials"):
        plan(trials=0)
    with pytest.raises(ValueError, match="sweep"):
        plan(sweep=[])
    with pytest.raises(ValueError, match="methods"):
        plan(methods=["wcr-srm"])
    with pytest.raises(ValueError, match="scenario"):
        plan(scenario="fig9")
    with pytest.raises(ValueError, match="isotropic"):
        plan(per_antenna=True)
    with pytest.raises(ValueError, match="L"):
        plan(scenario="itc-power-sweep", methods=["an-srm"])
    with pytest.raises(ValueError, match="unknown plan keys"):
        ExperimentPlan.from_dict({"scenario": "power-sweep", "sweep": [1], "methods": ["an-srm"], "colour": 1})


def test_plan_from_toml(tmp_path):
    p = tmp_path / "plan.toml"
    p.write_text('scenario = "eve-count-sweep"\nsweep = [1, 2]\nmethods = ["no-an-srm"]\ntrials = 3\n')
    pl = ExperimentPlan.from_toml(p)
    assert pl.scenario == "eve-count-sweep" and pl.sweep == [1.0, 2.0] and pl.trials == 3


def test_empty_table_csv(tmp_path):
    path = tmp_path / "e.csv"
    emit_csv(ResultTable(), path)
    assert path.read_text() == ",".join(CSV_HEADER) + "\n"


def test_one_row_round_trip(tmp_path):
    path = tmp_path / "one.csv"
    row = Row(0, 25.0, "an-srm", 1.0 / 3.0, 12.5, ("raw=-0.5", "note"))
    emit_csv(ResultTable([row]), path)
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    back = load_csv(path)
    assert back.rows == [row]
    # at least nine significant digits
    assert "0.333333333" in lines[1]


def test_reemit_byte_identical_and_sorted(tmp_path):
    rows = [Row(t, v, m, float(np.pi * t + v), 1.0, ()) for t in (1, 0) for v in (20.0, 0.0) for m in ("b", "a")]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_csv(ResultTable(rows), a)
    emit_csv(load_csv(a), b)
    assert filecmp.cmp(a, b, shallow=False)
    keys = [(r.sweep_value, r.method, r.trial) for r in load_csv(a).rows]
    assert keys == sorted(keys)


def test_io_errors_name_the_path(tmp_path):
    bad = tmp_path / "missing" / "x.csv"
    with pytest.raises(OSError, match="missing"):
        emit_csv(ResultTable(), bad)
    with pytest.raises(OSError, match="missing"):
        load_csv(bad)


@pytest.fixture(scope="module")
def small_sweep():
    return run_sweep(plan())


def test_one_row_per_key_and_finite(small_sweep):
    keys = [(r.trial, r.sweep_value, r.method) for r in small_sweep.rows]
    assert len(keys) == len(set(keys)) == 2 * 2 * 3
    assert all(np.isfinite(r.rate_bits) and r.rate_bits >= 0 for r in small_sweep.rows)
    assert small_sweep.failures() == 0


def test_per_trial_ordering(small_sweep):
    a, n, i = (small_sweep.per_trial(m) for m in ("an-srm", "no-an-srm", "isotropic-an"))
    for k in a:
        assert a[k] >= n[k] - 1e-4
        assert a[k] >= i[k] - 1e-4


def test_reproducible_across_parallelism(small_sweep, tmp_path):
    par = run_sweep(plan(), jobs=2)
    emit_csv(small_sweep, tmp_path / "s.csv")
    emit_csv(par, tmp_path / "p.csv")
    assert filecmp.cmp(tmp_path / "s.csv", tmp_path / "p.csv", shallow=False)


def test_plot_data(small_sweep, tmp_path):
    pd = small_sweep.plot_data()
    assert len(pd) == 6
    sv, m, mean, se, n, nfail = pd[0]
    assert n == 2 and nfail == 0
    assert mean == pytest.approx(small_sweep.mean(m, sv))
    vals = small_sweep.values(m, sv)
    assert se == pytest.approx(np.std(vals, ddof=1) / np.sqrt(2))
    emit_plot_data(small_sweep, tmp_path / "pd.csv")
    assert (tmp_path / "pd.csv").read_text().startswith("sweep_value,method,mean_bits,stderr_bits,n,failed\n")


def test_failures_are_flagged_and_excluded(monkeypatch):
    def boom(*a, **k):
        raise ArithmeticError("forced")
    monkeypatch.setattr(ex, "no_an_srm", boom)
    tab = run_sweep(plan(methods=["no-an-srm", "isotropic-an"], sweep=[5.0]))
    failed = [r for r in tab.rows if r.failed]
    assert len(failed) == 2 and all(r.rate_bits == 0.0 for r in failed)
    assert "failed:ArithmeticError" in failed[0].flags
    assert np.isnan(tab.mean("no-an-srm", 5.0))
    assert tab.failures() == 2


def test_negative_rates_clamped_with_raw_flag():
    # isotropic AN against an Eve that sits exactly on Bob's channel loses
    rows = ex._row(0, 1.0, "isotropic-an", lambda: (-0.25, [], None, None))
    assert rows.rate_bits == 0.0 and rows.flags == ("raw=-0.25",)


def test_scenario_routing():
    with pytest.raises(ValueError):
        run_sweep(plan(scenario="worst-case-eval", methods=["wcr-srm"]))
    with pytest.raises(ValueError):
        run_robust_eval(plan())


def test_antenna_and_itc_scenarios_comply_with_power():
    tab = run_sweep(plan(scenario="antenna-sweep", sweep=[2, 4], methods=["an-srm", "isotropic-an"], trials=1))
    assert tab.failures() == 0 and not any("power-violation" in r.flags for r in tab.rows)
    itc = run_sweep(plan(scenario="itc-power-sweep", L=1, np_list=[2], methods=["an-srm", "no-an-srm"], trials=1))
    assert itc.failures() == 0 and not any("power-violation" in r.flags for r in itc.rows)


def test_robust_eval_rows():
    tab = run_robust_eval(plan(scenario="worst-case-eval", methods=["wcr-srm", "nonrobust-an-srm"],
                               sweep=[15.0], trials=1))
    assert tab.failures() == 0
    assert all(any(f.startswith("design_rate=") for f in r.flags) for r in tab.rows)
    out = run_robust_eval(plan(scenario="outage-eval", methods=["ocr-srm"], sweep=[15.0], trials=1,
                               mc_draws=2000))
    (row,) = out.rows
    prob = float(next(f for f in row.flags if f.startswith("outage=")).split("=")[1])
    assert prob <= 0.01


def test_eve_count_trend():
    # no-AN rate falls as eavesdroppers are added (trend over 30 trials)
    p = plan(scenario="eve-count-sweep", sweep=[1, 2, 3, 4, 5, 6], methods=["no-an-srm"], nt=4, ne=[2],
             trials=30, alpha_grid=6, power_db=15.0)
    tab = run_sweep(p)
    means = [tab.mean("no-an-srm", float(k)) for k in p.sweep]
    assert all(b <= a + 0.05 for a, b in zip(means, means[1:]))
    assert means[-1] < means[0]
