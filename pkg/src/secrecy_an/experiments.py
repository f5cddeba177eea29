"""Monte Carlo harness for the simulation studies.

A plan names a scenario, the dimensions, the sweep and the methods.  Every
(trial, sweep value) pair is an independent work item whose random numbers
come from substreams keyed by (master seed, trial, purpose), so results do
not depend on the order or the number of worker processes.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .channel import (
    PowerConstraints,
    check_power_constraints,
    complex_normal,
    generate_channels,
    isotropic_an_design,
    secrecy_rate,
    substream,
)
from .outage import OutageSpec, monte_carlo_outage, ocr_safe_design
from .robust import UncertaintyModel, worst_case_rate, wcr_srm
from .srm import LineSearchSettings, an_srm, no_an_srm

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

SCENARIOS = {
    "power-sweep": {"an-srm", "no-an-srm", "isotropic-an"},
    "antenna-sweep": {"an-srm", "no-an-srm", "isotropic-an"},
    "eve-count-sweep": {"an-srm", "no-an-srm", "isotropic-an"},
    "itc-power-sweep": {"an-srm", "no-an-srm"},
    "worst-case-eval": {"wcr-srm", "nonrobust-an-srm"},
    "outage-eval": {"ocr-srm", "nonrobust-an-srm"},
}
CSV_HEADER = ["trial", "sweep_value", "method", "rate_bits", "wall_ms", "flags"]
POWER_TOL = 1e-6


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass
class ExperimentPlan:
    scenario: str
    sweep: list
    methods: list
    nt: int = 5
    K: int = 3
    ne: list = field(default_factory=lambda: [3])
    L: int = 0
    np_list: list = field(default_factory=lambda: [2])
    trials: int = 20
    seed: int = 0
    power_db: float = 15.0  # fixed power for antenna and Eve-count sweeps
    itc_rho_db: float = 5.0
    per_antenna: bool = False
    eps: float = 0.2
    sigma: float = 0.05
    delta: float = 0.01
    alpha_grid: int = 200
    mc_draws: int = 10000
    record_timing: bool = True

    def __post_init__(self):
        self.sweep = [float(v) for v in np.atleast_1d(self.sweep)]
        self.methods = list(self.methods)
        self.ne = [int(n) for n in np.atleast_1d(self.ne)]
        self.np_list = [int(n) for n in np.atleast_1d(self.np_list)]
        self.validate()

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario: unknown {self.scenario!r}; choose from {sorted(SCENARIOS)}")
        if not self.sweep:
            raise ValueError("sweep: must be nonempty")
        if self.trials < 1:
            raise ValueError(f"trials: must be >= 1, got {self.trials}")
        if not self.methods:
            raise ValueError("methods: must be nonempty")
        bad = [m for m in self.methods if m not in SCENARIOS[self.scenario]]
        if bad:
            raise ValueError(f"methods: {bad} not valid for {self.scenario}; "
                             f"choose from {sorted(SCENARIOS[self.scenario])}")
        if self.nt < 1:
            raise ValueError(f"nt: must be >= 1, got {self.nt}")
        if self.K < 1:
            raise ValueError(f"K: must be >= 1, got {self.K}")
        if min(self.ne) < 1 or len(self.ne) not in (1, self.K):
            raise ValueError(f"ne: need 1 or K={self.K} positive sizes, got {self.ne}")
        if self.scenario == "itc-power-sweep":
            if self.L < 1:
                raise ValueError("L: the ITC scenario needs at least one primary user")
            if len(self.np_list) not in (1, self.L) or min(self.np_list) < 1:
                raise ValueError(f"np_list: need 1 or L={self.L} positive sizes, got {self.np_list}")
        if self.scenario == "antenna-sweep" and min(self.sweep) < 1:
            raise ValueError("sweep: antenna counts must be >= 1")
        if self.scenario == "eve-count-sweep" and min(self.sweep) < 1:
            raise ValueError("sweep: Eve counts must be >= 1")
        if "isotropic-an" in self.methods and self.per_antenna:
            raise ValueError("methods: isotropic-an ignores shaping constraints; drop it or per_antenna")
        if not self.eps > 0:
            raise ValueError(f"eps: must be positive, got {self.eps}")
        if not self.sigma > 0:
            raise ValueError(f"sigma: must be positive, got {self.sigma}")
        if not 0.0 < self.delta < 0.5:
            raise ValueError(f"delta: must lie in (0, 0.5), got {self.delta}")
        if self.alpha_grid < 2:
            raise ValueError(f"alpha_grid: must be >= 2, got {self.alpha_grid}")
        if self.mc_draws < 1000:
            raise ValueError(f"mc_draws: must be >= 1000, got {self.mc_draws}")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown plan keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_toml(cls, path) -> "ExperimentPlan":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))

    def ne_for(self, K: int) -> list:
        return self.ne * K if len(self.ne) == 1 else list(self.ne)


@dataclass(frozen=True)
class Row:
    trial: int
    sweep_value: float
    method: str
    rate_bits: float
    wall_ms: float
    flags: tuple = ()

    @property
    def failed(self) -> bool:
        return any(f.startswith("failed") for f in self.flags)


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)

    def sorted_rows(self) -> list:
        return sorted(self.rows, key=lambda r: (r.sweep_value, r.method, r.trial))

    def values(self, method: str, sweep_value: float, include_failed: bool = False) -> np.ndarray:
        return np.array([r.rate_bits for r in self.rows
                         if r.method == method and r.sweep_value == sweep_value and (include_failed or not r.failed)])

    def mean(self, method: str, sweep_value: float) -> float:
        v = self.values(method, sweep_value)
        return float(np.mean(v)) if v.size else math.nan

    def per_trial(self, method: str) -> dict:
        """{(trial, sweep_value): rate} for successful rows."""
        return {(r.trial, r.sweep_value): r.rate_bits for r in self.rows if r.method == method and not r.failed}

    def failures(self) -> int:
        return sum(1 for r in self.rows if r.failed)

    def plot_data(self) -> list:
        """(sweep_value, method, mean, stderr, n, failed) per sweep point and method."""
        out = []
        keys = sorted({(r.sweep_value, r.method) for r in self.rows})
        for sv, m in keys:
            v = self.values(m, sv)
            n = v.size
            mean = float(np.mean(v)) if n else math.nan
            se = float(np.std(v, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
            nfail = sum(1 for r in self.rows if r.method == m and r.sweep_value == sv and r.failed)
            out.append((sv, m, mean, se, n, nfail))
        return out


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------

def _num(x: float) -> str:
    return format(float(x), ".17g")


def emit_csv(table: ResultTable, path):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in table.sorted_rows():
                w.writerow([r.trial, _num(r.sweep_value), r.method, _num(r.rate_bits), _num(r.wall_ms),
                            ";".join(r.flags)])
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def load_csv(path) -> ResultTable:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            if header != CSV_HEADER:
                raise ValueError(f"{path}: unexpected header {header}")
            rows = [Row(int(t), float(sv), m, float(rate), float(ms), tuple(f for f in flags.split(";") if f))
                    for t, sv, m, rate, ms, flags in rd]
    except OSError as exc:
        raise OSError(f"cannot read results from {path}: {exc}") from exc
    return ResultTable(rows)


def emit_plot_data(table: ResultTable, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sweep_value", "method", "mean_bits", "stderr_bits", "n", "failed"])
        for sv, m, mean, se, n, nfail in table.plot_data():
            w.writerow([_num(sv), m, _num(mean), _num(se), n, nfail])


# --------------------------------------------------------------------------
# running
# --------------------------------------------------------------------------

def _instance(plan: ExperimentPlan, trial: int, value: float):
    """Channels and power constraints for one work item."""
    nt, K, p_db = plan.nt, plan.K, plan.power_db
    if plan.scenario == "antenna-sweep":
        nt = int(value)
    elif plan.scenario == "eve-count-sweep":
        K = int(value)
    else:
        p_db = value
    P = db_to_linear(p_db)
    channels = generate_channels((plan.seed, trial, "channels", nt, K), nt, K, plan.ne_for(K))
    if plan.scenario == "itc-power-sweep":
        rng = substream(plan.seed, trial, "primary", nt)
        nps = plan.np_list * plan.L if len(plan.np_list) == 1 else plan.np_list
        R = [complex_normal(rng, (nt, n)) for n in nps]
        constraints = PowerConstraints.interference(P, R, db_to_linear(plan.itc_rho_db))
    elif plan.per_antenna:
        constraints = PowerConstraints.per_antenna(P, np.full(nt, P / nt))
    else:
        constraints = PowerConstraints(P)
    return channels, constraints


def _row(trial, value, method, fn):
    """Run fn() -> (raw_rate, flags, design, constraints) and package it as a Row."""
    t0 = time.perf_counter()
    try:
        raw, flags, design, constraints = fn()
        flags = list(flags)
        if design is not None and constraints is not None:
            if not check_power_constraints(design, constraints, POWER_TOL).ok:
                flags.append("power-violation")
        if not math.isfinite(raw):
            raise ArithmeticError(f"non-finite rate {raw}")
        if raw < 0:
            flags.append(f"raw={_num(raw)}")
        rate = max(raw, 0.0)
    except Exception as exc:  # recorded, excluded from means
        rate = 0.0
        flags = [f"failed:{type(exc).__name__}"]
    ms = (time.perf_counter() - t0) * 1e3
    return Row(trial, value, method, rate, ms, tuple(flags))


def run_item(plan: ExperimentPlan, trial: int, value: float) -> list:
    """All methods of one (trial, sweep value) work item."""
    channels, constraints = _instance(plan, trial, value)
    settings = LineSearchSettings(grid_points=plan.alpha_grid)
    rows = []
    cache = {}

    def nonrobust():
        if "an" not in cache:
            cache["an"] = an_srm(channels, constraints, settings)
        return cache["an"]

    for method in plan.methods:
        if method == "an-srm":
            def fn():
                d = nonrobust()
                return secrecy_rate(d, channels), [], d, constraints
        elif method == "no-an-srm":
            def fn():
                d = no_an_srm(channels, constraints, settings)
                return secrecy_rate(d, channels), [], d, constraints
        elif method == "isotropic-an":
            def fn():
                d = isotropic_an_design(channels, constraints.P)
                return secrecy_rate(d, channels), [], d, constraints
        elif method in ("wcr-srm", "nonrobust-an-srm") and plan.scenario == "worst-case-eval":
            unc = UncertaintyModel.around(channels, plan.eps)

            def fn(method=method, unc=unc):
                d = wcr_srm(channels, unc, constraints, settings) if method == "wcr-srm" else nonrobust()
                return worst_case_rate(d, channels.h, unc), [f"design_rate={_num(d.achieved_rate_bits)}"], d, constraints
        else:  # outage-eval
            spec = OutageSpec([plan.sigma], plan.delta)

            def fn(method=method, spec=spec):
                d = ocr_safe_design(channels, spec, constraints, settings) if method == "ocr-srm" else nonrobust()
                claimed = d.achieved_rate_bits
                rep = monte_carlo_outage(d, channels.h, channels.eves, spec, plan.mc_draws,
                                         seed=(plan.seed, trial, "mc", method, _num(value)), claimed_rate=claimed)
                return rep.rate_quantile, [f"outage={_num(rep.probability)}", f"claimed={_num(claimed)}"], d, constraints
        row = _row(trial, value, method, fn)
        if not plan.record_timing:
            row = Row(row.trial, row.sweep_value, row.method, row.rate_bits, 0.0, row.flags)
        rows.append(row)
    return rows


def _run_item_args(args):
    plan_dict, trial, value = args
    return run_item(ExperimentPlan.from_dict(plan_dict), trial, value)


def run_plan(plan: ExperimentPlan, jobs: int = 1, progress=None) -> ResultTable:
    items = [(t, v) for v in plan.sweep for t in range(plan.trials)]
    table = ResultTable()
    if jobs <= 1:
        for t, v in items:
            table.rows.extend(run_item(plan, t, v))
            if progress:
                progress(t, v)
    else:
        pd = asdict(plan)
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            for rows in ex.map(_run_item_args, [(pd, t, v) for t, v in items]):
                table.rows.extend(rows)
    table.rows = table.sorted_rows()
    return table


def run_sweep(plan: ExperimentPlan, jobs: int = 1, progress=None) -> ResultTable:
    if plan.scenario in ("worst-case-eval", "outage-eval"):
        raise ValueError(f"scenario {plan.scenario} belongs to run_robust_eval")
    return run_plan(plan, jobs, progress)


def run_robust_eval(plan: ExperimentPlan, jobs: int = 1, progress=None) -> ResultTable:
    if plan.scenario not in ("worst-case-eval", "outage-eval"):
        raise ValueError(f"scenario {plan.scenario} belongs to run_sweep")
    return run_plan(plan, jobs, progress)
