"""Command-line driver.

Powers are given in dB and converted with P = 10^(dB/10).  Exit codes:
0 on success, 2 on usage errors, 1 when a solver fails.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .channel import (
    ChannelSet,
    PowerConstraints,
    TransmitDesign,
    check_power_constraints,
    complex_normal,
    generate_channels,
    secrecy_rate,
    substream,
)
from .experiments import (
    ExperimentPlan,
    ResultTable,
    Row,
    db_to_linear,
    emit_csv,
    emit_plot_data,
    run_robust_eval,
    run_sweep,
    tomllib,
)
from .linalg import numerical_rank
from .outage import OutageSpec, monte_carlo_outage, ocr_radius, ocr_safe_design
from .robust import UncertaintyModel, worst_case_rate, wcr_srm
from .srm import RANK_TOL, LineSearchSettings, SolverFailure, an_srm, no_an_srm


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# flags whose values may come from a --config file; dest -> plan key
_CONFIG_KEYS = {
    "nt": "nt", "k": "K", "ne": "ne", "seed": "seed", "power_db": "power_db", "eps": "eps",
    "delta": "delta", "sigma": "sigma", "itc_rho_db": "itc_rho_db", "per_antenna": "per_antenna",
    "alpha_grid": "alpha_grid", "trials": "trials", "L": "L", "np_list": "np_list", "mc_draws": "mc_draws",
}
_DEFAULTS = {
    "nt": 5, "k": 3, "ne": [3], "seed": 0, "power_db": 15.0, "eps": 0.2, "delta": 0.01, "sigma": 0.05,
    "itc_rho_db": None, "per_antenna": False, "alpha_grid": 200, "trials": None, "L": 1, "np_list": [2],
    "mc_draws": 10000,
}

# plan fields that have a flag of their own, for naming them in errors
_PLAN_FLAGS = {
    "scenario": "--scenario", "trials": "--trials", "nt": "--nt", "K": "--k", "ne": "--ne", "L": "--L",
    "np_list": "--np", "eps": "--eps", "sigma": "--sigma", "delta": "--delta", "alpha_grid": "--alpha-grid",
    "mc_draws": "--mc-draws", "methods": "--config", "sweep": "--config",
}


def _common(p, sweep=False):
    p.add_argument("--config", help="TOML file with plan keys; explicit flags win")
    p.add_argument("--nt", type=int, help="transmit antennas (default 5)")
    p.add_argument("--k", type=int, help="number of eavesdroppers (default 3)")
    p.add_argument("--ne", type=int, nargs="+", help="antennas per eavesdropper, one value or K values (default 3)")
    p.add_argument("--power-db", type=float, help="sum power in dB, P = 10^(dB/10) (default 15)")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--out", help="write a results CSV here")
    p.add_argument("--alpha-grid", type=int, help="grid points of the alpha line search (default 200)")
    p.add_argument("--per-antenna", action="store_true", default=None,
                   help="add per-antenna caps of P/N_t on every antenna")
    p.add_argument("--itc-rho-db", type=float,
                   help="interference temperature cap in dB toward random primary users")
    p.add_argument("--L", type=int, help="primary users for the ITC (default 1)")
    p.add_argument("--np", dest="np_list", type=int, nargs="+", help="antennas per primary user (default 2)")
    if not sweep:
        p.add_argument("--channels", help="load channels from a file instead of generating them")
        p.add_argument("--save-design", help="write the design to a file")
        p.add_argument("--save-channels", help="write the channels used to a file")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="secrecy-an", description="Artificial-noise aided secrecy rate maximization.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("solve", help="perfect-CSI design for one channel draw")
    _common(p)
    p.add_argument("--no-an", action="store_true", help="design without artificial noise")

    p = sub.add_parser("robust", help="worst-case robust design on Frobenius balls")
    _common(p)
    p.add_argument("--eps", type=float, help="error radius for every eavesdropper (default 0.2)")

    p = sub.add_parser("outage", help="outage-safe design under Gaussian Eve errors")
    _common(p)
    p.add_argument("--delta", type=float, help="tolerated outage probability (default 0.01)")
    p.add_argument("--sigma", type=float, help="error standard deviation per entry (default 0.05)")
    p.add_argument("--mc-draws", type=int, help="Monte Carlo draws for the outage check (default 10000)")

    p = sub.add_parser("sweep", help="run an experiment plan")
    _common(p, sweep=True)
    p.add_argument("--scenario", help="override the plan scenario")
    p.add_argument("--trials", type=int, help="override trials per sweep point")
    p.add_argument("--eps", type=float, help="error radius for the robust scenarios")
    p.add_argument("--delta", type=float, help="tolerated outage probability for outage scenarios")
    p.add_argument("--sigma", type=float, help="error standard deviation for outage scenarios")
    p.add_argument("--mc-draws", type=int, help="Monte Carlo draws per outage check")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--plot-data", help="write per-point mean and standard error here")
    p.add_argument("--no-timing", action="store_true", help="write wall_ms as 0 for byte-stable output")

    p = sub.add_parser("eval-design", help="evaluate a saved design on saved channels")
    p.add_argument("--design", required=True)
    p.add_argument("--channels", required=True)
    p.add_argument("--eps", type=float, help="also report the worst-case rate on balls of this radius")
    p.add_argument("--sigma", type=float, help="also run a Monte Carlo outage check with this error level")
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--mc-draws", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise UsageError(f"--config: cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"--config: {path} is not valid TOML: {exc}") from exc


def _resolve(args, config: dict):
    """Fill unset flags from the config file, then from defaults."""
    for dest, key in _CONFIG_KEYS.items():
        if not hasattr(args, dest):
            continue
        if getattr(args, dest) is None:
            val = config.get(key, _DEFAULTS[dest])
            setattr(args, dest, val)


def _check(cond, flag, msg):
    if not cond:
        raise UsageError(f"{flag}: {msg}")


def _validate(args):
    _check(args.nt >= 1, "--nt", f"must be >= 1, got {args.nt}")
    _check(args.k >= 1, "--k", f"must be >= 1, got {args.k}")
    ne = [args.ne] if np.isscalar(args.ne) else list(args.ne)
    _check(len(ne) in (1, args.k) and min(ne) >= 1, "--ne", f"need 1 or {args.k} positive values, got {ne}")
    args.ne = ne * args.k if len(ne) == 1 else ne
    _check(np.isfinite(args.power_db), "--power-db", "must be finite")
    _check(args.seed >= 0, "--seed", "must be nonnegative")
    _check(args.alpha_grid >= 2, "--alpha-grid", f"must be >= 2, got {args.alpha_grid}")
    if args.itc_rho_db is not None:
        _check(np.isfinite(args.itc_rho_db), "--itc-rho-db", "must be finite")
        _check(args.L >= 1, "--L", f"must be >= 1, got {args.L}")
        nps = [args.np_list] if np.isscalar(args.np_list) else list(args.np_list)
        _check(len(nps) in (1, args.L) and min(nps) >= 1, "--np", f"need 1 or {args.L} positive values")
        args.np_list = nps * args.L if len(nps) == 1 else nps
    if hasattr(args, "eps") and args.eps is not None:
        _check(args.eps > 0 and np.isfinite(args.eps), "--eps", f"must be positive, got {args.eps}")
    if hasattr(args, "delta") and args.delta is not None:
        _check(0 < args.delta < 0.5, "--delta", f"must lie in (0, 0.5), got {args.delta}")
    if hasattr(args, "sigma") and args.sigma is not None:
        _check(args.sigma > 0 and np.isfinite(args.sigma), "--sigma", f"must be positive, got {args.sigma}")
    if hasattr(args, "mc_draws") and args.mc_draws is not None:
        _check(args.mc_draws >= 1000, "--mc-draws", f"must be >= 1000, got {args.mc_draws}")


def _instance(args):
    if args.channels:
        try:
            channels = ChannelSet.load(args.channels)
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"--channels: cannot load {args.channels}: {exc}") from exc
    else:
        channels = generate_channels(args.seed, args.nt, args.k, args.ne)
    nt = channels.nt
    P = db_to_linear(args.power_db)
    if args.itc_rho_db is not None:
        rng = substream(args.seed, "primary")
        R = [complex_normal(rng, (nt, n)) for n in args.np_list]
        constraints = PowerConstraints.interference(P, R, db_to_linear(args.itc_rho_db))
    elif args.per_antenna:
        constraints = PowerConstraints.per_antenna(P, np.full(nt, P / nt))
    else:
        constraints = PowerConstraints(P)
    return channels, constraints


def _emit(lines):
    for k, v in lines:
        if isinstance(v, float):
            v = format(v, ".10g")
        print(f"{k}: {v}")


def _design_summary(d: TransmitDesign, constraints):
    check = check_power_constraints(d, constraints)
    return [
        ("rank_W", numerical_rank(d.W, RANK_TOL)),
        ("trace_W", float(np.trace(d.W).real)),
        ("trace_Sigma", float(np.trace(d.Sigma).real)),
        ("power", constraints.P),
        ("power_ok", str(bool(check.ok)).lower()),
        ("alpha", float(d.info.get("alpha", float("nan")))),
    ]


def _finish(args, channels, design, method, rate):
    if args.save_design:
        design.save(args.save_design)
    if args.save_channels:
        channels.save(args.save_channels)
    if args.out:
        emit_csv(ResultTable([Row(0, float(args.power_db), method, max(rate, 0.0), 0.0,
                                  () if rate >= 0 else (f"raw={rate!r}",))]), args.out)


def cmd_solve(args):
    channels, constraints = _instance(args)
    settings = LineSearchSettings(grid_points=args.alpha_grid)
    design = (no_an_srm if args.no_an else an_srm)(channels, constraints, settings)
    rate = secrecy_rate(design, channels)
    _emit([("method", "no-an-srm" if args.no_an else "an-srm"), ("rate_bits", rate)]
          + _design_summary(design, constraints))
    _finish(args, channels, design, "no-an-srm" if args.no_an else "an-srm", rate)


def cmd_robust(args):
    channels, constraints = _instance(args)
    unc = UncertaintyModel.around(channels, args.eps)
    design = wcr_srm(channels, unc, constraints, LineSearchSettings(grid_points=args.alpha_grid))
    wc = worst_case_rate(design, channels.h, unc)
    _emit([("method", "wcr-srm"), ("eps", args.eps), ("design_rate_bits", float(design.achieved_rate_bits)),
           ("worst_case_rate_bits", wc), ("nominal_rate_bits", secrecy_rate(design, channels))]
          + _design_summary(design, constraints))
    _finish(args, channels, design, "wcr-srm", wc)


def cmd_outage(args):
    channels, constraints = _instance(args)
    spec = OutageSpec([args.sigma], args.delta)
    design = ocr_safe_design(channels, spec, constraints, LineSearchSettings(grid_points=args.alpha_grid))
    rep = monte_carlo_outage(design, channels.h, channels.eves, spec, args.mc_draws, seed=(args.seed, "mc"))
    radii = ocr_radius(spec, channels.K, channels.nt, channels.ne)
    _emit([("method", "ocr-srm"), ("delta", args.delta), ("sigma", args.sigma), ("radius", float(radii[0])),
           ("design_rate_bits", float(design.achieved_rate_bits)), ("empirical_outage", rep.probability),
           ("rate_quantile_bits", rep.rate_quantile)] + _design_summary(design, constraints))
    _finish(args, channels, design, "ocr-srm", float(design.achieved_rate_bits))


def cmd_sweep(args, config):
    plan_d = dict(config)
    for dest, key in _CONFIG_KEYS.items():
        if hasattr(args, dest):
            plan_d[key] = getattr(args, dest)
    plan_d["K"] = args.k
    if args.scenario:
        plan_d["scenario"] = args.scenario
    if "scenario" not in plan_d:
        raise UsageError("--scenario: no scenario given on the command line or in --config")
    if args.itc_rho_db is None:
        plan_d.pop("itc_rho_db")
    if plan_d.get("trials") is None:
        plan_d.pop("trials")
    if args.no_timing:
        plan_d["record_timing"] = False
    plan_d.setdefault("sweep", [args.power_db])
    plan_d.setdefault("methods", [])
    _check(args.jobs >= 1, "--jobs", f"must be >= 1, got {args.jobs}")
    try:
        plan = ExperimentPlan.from_dict(plan_d)
    except (TypeError, ValueError) as exc:
        field = str(exc).split(":")[0]
        flag = _PLAN_FLAGS.get(field, "--config")
        raise UsageError(f"{flag}: {exc}") from exc
    robust = plan.scenario in ("worst-case-eval", "outage-eval")
    table = (run_robust_eval if robust else run_sweep)(plan, jobs=args.jobs)
    if args.out:
        emit_csv(table, args.out)
    if args.plot_data:
        emit_plot_data(table, args.plot_data)
    lines = [("scenario", plan.scenario), ("rows", len(table.rows)), ("failures", table.failures())]
    for sv, m, mean, se, n, _ in table.plot_data():
        lines.append((f"mean[{m}@{format(sv, 'g')}]", mean))
    _emit(lines)
    return 1 if table.failures() and table.failures() == len(table.rows) else 0


def cmd_eval(args):
    try:
        design = TransmitDesign.load(args.design)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"--design: cannot load {args.design}: {exc}") from exc
    try:
        channels = ChannelSet.load(args.channels)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"--channels: cannot load {args.channels}: {exc}") from exc
    if design.nt != channels.nt:
        raise UsageError(f"--design: {design.nt} antennas but --channels has {channels.nt}")
    lines = [("rate_bits", secrecy_rate(design, channels)), ("rank_W", numerical_rank(design.W, RANK_TOL))]
    if args.eps is not None:
        _check(args.eps > 0, "--eps", "must be positive")
        lines.append(("worst_case_rate_bits", worst_case_rate(design, channels.h,
                                                               UncertaintyModel.around(channels, args.eps))))
    if args.sigma is not None:
        _check(args.sigma > 0, "--sigma", "must be positive")
        _check(0 < args.delta < 0.5, "--delta", "must lie in (0, 0.5)")
        _check(args.mc_draws >= 1000, "--mc-draws", "must be >= 1000")
        rep = monte_carlo_outage(design, channels.h, channels.eves, OutageSpec([args.sigma], args.delta),
                                 args.mc_draws, seed=(args.seed, "mc"))
        lines += [("empirical_outage", rep.probability), ("rate_quantile_bits", rep.rate_quantile)]
    _emit(lines)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = {}
        if getattr(args, "config", None):
            config = _load_config(args.config)
        if args.command == "eval-design":
            cmd_eval(args)
            return 0
        _resolve(args, config)
        _validate(args)
        if args.command == "sweep":
            return cmd_sweep(args, config)
        {"solve": cmd_solve, "robust": cmd_robust, "outage": cmd_outage}[args.command](args)
        return 0
    except UsageError as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    except (SolverFailure, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"{parser.prog}: solver failure: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
