"""Command-line front end.

Subcommands: simulate, policy, estimate, backtest, benchmark, sweep-asymmetry.
Options can come from a flat key=value config file (--config); command-line
flags win.  Exit codes: 0 success, 2 bad input, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .backtest import (
    BacktestConfig,
    _fmt,
    _round_tree,
    asymmetry_sweep,
    breakeven_wealth,
    extract_benchmark,
    fee_capacity,
    run_backtest,
)
from .errors import DataError, DomainError, NumericError, SchemaError
from .estimation import (
    estimate_gamma,
    estimate_pool_fee_rate,
    estimate_sigma,
    realized_fee_revenue,
    return_correlation,
)
from .events import EventLog
from .pool import range_from_spread
from .stochastics import (
    ConstantDrift,
    ModelParams,
    OUDrift,
    TimeGrid,
    profitability_threshold,
    simulate_wealth_path,
)
from .strategy import PolicyInputs, evaluate_policy, optimal_policy_fn

UNITS_NOTE = """\
Units used throughout:
  time                      days (one minute = 1/1440 day)
  volatility (sigma)        per sqrt(day)
  drift (mu), fee rate (pi) per day
  rates (Z)                 units of X per unit of Y
  money columns             units of X (USD-equivalent)
  gas fees                  USD per action
  spreads and legs          dimensionless sqrt-rate units (range width ~ spread * Z)
"""


def _load_config(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    cfg: dict[str, str] = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg


def _opt(args, cfg: dict[str, str], key: str, default, cast=float):
    """Flag beats config beats default."""
    flag_val = getattr(args, key, None)
    if flag_val is not None:
        return flag_val
    if key in cfg:
        raw = cfg[key]
        if cast is bool:
            return raw.lower() in ("1", "true", "yes")
        return cast(raw)
    return default


def _parse_span(text: str) -> np.ndarray:
    """'lo:hi:n' inclusive linear grid."""
    try:
        lo, hi, n = text.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    except ValueError:
        raise DataError(f"expected lo:hi:n, got {text!r}") from None


def _ensure_outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_round_tree(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _model_params(args, cfg) -> ModelParams:
    ou_speed = _opt(args, cfg, "ou_speed", None)
    if ou_speed is not None:
        drift = OUDrift(
            speed=ou_speed,
            level=_opt(args, cfg, "ou_level", 0.0),
            vol=_opt(args, cfg, "ou_vol", 0.0),
            start=_opt(args, cfg, "ou_start", None),
        )
    else:
        drift = ConstantDrift(_opt(args, cfg, "mu", 0.0))
    return ModelParams(
        sigma=_opt(args, cfg, "sigma", 0.02),
        drift=drift,
        mean_reversion=_opt(args, cfg, "mean_reversion", 1.0),
        fee_mean=_opt(args, cfg, "fee_mean", 1e-3),
        fee_vol=_opt(args, cfg, "fee_vol", 0.0),
        margin=_opt(args, cfg, "epsilon", 1e-4),
        concentration_cost=_opt(args, cfg, "gamma", 5e-7),
        rebalance_cost=_opt(args, cfg, "zeta", 0.0),
    )


def cmd_simulate(args, cfg) -> int:
    params = _model_params(args, cfg)
    grid = TimeGrid(_opt(args, cfg, "horizon", 1.0), int(_opt(args, cfg, "steps", 1440, int)))
    n_paths = int(_opt(args, cfg, "paths", 1, int))
    x0 = _opt(args, cfg, "x0", 1.0)
    pi0 = _opt(args, cfg, "pi0", None)
    if pi0 is None:
        pi0 = params.fee_mean + profitability_threshold(
            params.sigma, params.drift.initial, params.margin
        )
    fixed = _opt(args, cfg, "fixed_spread", None)
    if fixed is not None:
        half = fixed / 2

        def policy(t, z, mu, pi):
            return np.full_like(z, half), np.full_like(z, half)
    else:
        policy = optimal_policy_fn(params)

    bundle = simulate_wealth_path(
        params, x0, policy, grid, seed=args.seed, pi0=pi0,
        n_paths=n_paths, workers=int(_opt(args, cfg, "workers", 1, int)),
    )
    out = _ensure_outdir(args.out)
    bundle.write_csv(out / "paths.csv")

    def mc(name, values):
        mean = float(np.mean(values))
        se = float(np.std(values) / math.sqrt(len(values)))
        return {f"mean_{name}": mean, f"se_{name}": se}

    summary: dict = {
        "n_paths": n_paths,
        "steps": grid.n_steps,
        "horizon_days": grid.horizon,
        "seed": args.seed,
        "truncated_fraction": bundle.truncated_fraction,
    }
    for name, series in [
        ("terminal_rate", bundle.rate[:, -1]),
        ("terminal_fee_rate", bundle.fee_rate[:, -1]),
        ("terminal_log_wealth", bundle.log_wealth[:, -1]),
        ("terminal_pl", bundle.pl[:, -1]),
    ]:
        summary.update(mc(name, series))
    _write_json(out / "summary.json", summary)
    print(f"wrote {out / 'paths.csv'} and {out / 'summary.json'}")
    return 0


def _policy_record(inputs: PolicyInputs, rate: float | None, tick_floor: float) -> dict:
    decision = evaluate_policy(inputs, tick_floor=tick_floor)
    rec = {
        "fee_rate": inputs.fee_rate,
        "sigma": inputs.sigma,
        "mu": inputs.drift,
        "gamma": inputs.concentration_cost,
        "zeta": inputs.rebalance_cost,
        "epsilon": inputs.margin,
        "spread": decision.spread,
        "lower_leg": decision.lower_leg,
        "upper_leg": decision.upper_leg,
        "asymmetry": decision.asymmetry,
        "threshold": decision.threshold,
        "admissible": decision.admissible,
        "reasons": list(decision.reasons),
        "z_lower": None,
        "z_upper": None,
    }
    if (
        rate is not None
        and decision.spread is not None
        and decision.lower_leg is not None
        and 0 < decision.lower_leg <= 2
        and 0 <= decision.upper_leg < 2
    ):
        z_lower, z_upper = range_from_spread(rate, decision.lower_leg, decision.upper_leg)
        rec["z_lower"], rec["z_upper"] = z_lower, z_upper
    return rec


def cmd_policy(args, cfg) -> int:
    base = dict(
        fee_rate=_opt(args, cfg, "pi", 0.02),
        sigma=_opt(args, cfg, "sigma", 0.02),
        drift=_opt(args, cfg, "mu", 0.0),
        concentration_cost=_opt(args, cfg, "gamma", 5e-7),
        rebalance_cost=_opt(args, cfg, "zeta", 0.0),
        margin=_opt(args, cfg, "epsilon", 1e-4),
    )
    rate = _opt(args, cfg, "rate", None)
    tick_floor = _opt(args, cfg, "tick_floor", 1e-4)

    if args.sweep is None:
        rec = _policy_record(PolicyInputs(**base), rate, tick_floor)
        text = json.dumps(_round_tree(rec), indent=2, sort_keys=True)
        print(text)
        if args.out:
            out = _ensure_outdir(args.out)
            (out / "policy.json").write_text(text + "\n")
        return 0

    key = {"pi": "fee_rate", "sigma": "sigma", "mu": "drift"}[args.sweep]
    values = _parse_span(args.sweep_range)
    gammas = (
        [float(g) for g in args.gamma_grid.split(",")]
        if args.gamma_grid
        else [base["concentration_cost"]]
    )
    out = _ensure_outdir(args.out or ".")
    path = out / "policy_sweep.csv"
    cols = [
        "gamma", "fee_rate", "sigma", "mu", "spread", "lower_leg", "upper_leg",
        "asymmetry", "threshold", "admissible", "reasons", "z_lower", "z_upper",
    ]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for g in gammas:
            for v in values:
                spec = dict(base)
                spec["concentration_cost"] = g
                spec[key] = float(v)
                rec = _policy_record(PolicyInputs(**spec), rate, tick_floor)
                row = [
                    _fmt(g), _fmt(rec["fee_rate"]), _fmt(rec["sigma"]), _fmt(rec["mu"]),
                    _fmt(rec["spread"]) if rec["spread"] is not None else "",
                    _fmt(rec["lower_leg"]) if rec["lower_leg"] is not None else "",
                    _fmt(rec["upper_leg"]) if rec["upper_leg"] is not None else "",
                    _fmt(rec["asymmetry"]) if rec["asymmetry"] is not None else "",
                    _fmt(rec["threshold"]),
                    str(int(rec["admissible"])),
                    "|".join(rec["reasons"]),
                    _fmt(rec["z_lower"]) if rec["z_lower"] is not None else "",
                    _fmt(rec["z_upper"]) if rec["z_upper"] is not None else "",
                ]
                fh.write(",".join(row) + "\n")
    print(f"wrote {path}")
    return 0


def cmd_estimate(args, cfg) -> int:
    log = EventLog.read_csv(args.events)
    from .backtest import build_minute_series

    step_minutes = _opt(args, cfg, "step_minutes", 1.0)
    window_days = _opt(args, cfg, "window_days", 1.0)
    fee_tier = _opt(args, cfg, "fee_tier", 0.0005)
    step_s = int(round(step_minutes * 60))
    series = build_minute_series(log, step_s)
    window_steps = int(round(window_days * 86400 / step_s))
    if len(series.ts) <= window_steps:
        raise DataError("event log shorter than one estimation window")

    step_days = step_s / 86400.0
    out = _ensure_outdir(args.out)
    rows = []
    gamma_fit = None
    if args.fit_gamma:
        lo, hi, n = (args.delta_grid or "0.0005:0.05:10").split(":")
        deltas = np.geomspace(float(lo), float(hi), int(n))
        m_minutes = _opt(args, cfg, "rebalance_minutes", 1.0)
        revenues = [realized_fee_revenue(log, float(d), m_minutes) for d in deltas]
        gamma_fit = estimate_gamma(deltas, revenues, m_minutes / 1440.0)

    fee_rates = []
    with open(out / "estimates.csv", "w", newline="") as fh:
        fh.write("ts,sigma,fee_rate,drift,gamma\n")
        for k in range(window_steps, len(series.ts)):
            window = series.rate[k - window_steps:k + 1]
            sigma = estimate_sigma(window, step_days)
            drift = float(np.mean(np.diff(np.log(window))) / step_days)
            volume = float(np.sum(series.volume_x[k - window_steps:k]))
            pi = (
                estimate_pool_fee_rate(volume, float(series.depth[k]), float(series.rate[k]),
                                       fee_tier, window_days)
                if volume > 0
                else 0.0
            )
            fee_rates.append(pi)
            gcol = _fmt(gamma_fit.gamma) if gamma_fit is not None else ""
            fh.write(f"{int(series.ts[k])},{_fmt(sigma)},{_fmt(pi)},{_fmt(drift)},{gcol}\n")
            rows.append((sigma, pi, drift))

    summary: dict = {"n_estimates": len(rows), "step_minutes": step_minutes,
                     "window_days": window_days}
    if len(fee_rates) >= 3 and min(fee_rates) > 0:
        summary["fee_rate_rate_return_correlation"] = return_correlation(
            series.rate[window_steps:], np.asarray(fee_rates)
        )
    if gamma_fit is not None:
        summary["gamma_fit"] = {
            "gamma": gamma_fit.gamma,
            "fee_rate": gamma_fit.fee_rate,
            "slope": gamma_fit.slope,
            "intercept": gamma_fit.intercept,
        }
    _write_json(out / "summary.json", summary)
    print(f"wrote {out / 'estimates.csv'} and {out / 'summary.json'}")
    return 0


def _backtest_config(args, cfg) -> BacktestConfig:
    return BacktestConfig(
        step_minutes=_opt(args, cfg, "step_minutes", 1.0),
        in_sample_days=_opt(args, cfg, "in_sample_days", 1.0),
        concentration_cost=_opt(args, cfg, "gamma", 5e-7),
        margin=_opt(args, cfg, "epsilon", 1e-4),
        rebalance_cost=_opt(args, cfg, "zeta", 0.0),
        gas_provide=_opt(args, cfg, "gas_provide", 30.7),
        gas_withdraw=_opt(args, cfg, "gas_withdraw", 24.5),
        gas_take=_opt(args, cfg, "gas_take", 29.6),
        initial_wealth=_opt(args, cfg, "initial_wealth", 1_000_000.0),
        drift_mode=_opt(args, cfg, "drift_mode", "zero", str),
        fee_tier=_opt(args, cfg, "fee_tier", 0.0005),
        tick_floor=_opt(args, cfg, "tick_floor", 1e-4),
    )


def cmd_backtest(args, cfg) -> int:
    log = EventLog.read_csv(args.events)
    config = _backtest_config(args, cfg)
    report = run_backtest(log, config)
    if args.benchmark:
        report.benchmark = extract_benchmark(log)
    out = _ensure_outdir(args.out)
    report.write_report_csv(out / "report.csv")
    report.write_spread_csv(out / "spread_distribution.csv")
    report.write_fee_rate_csv(out / "fee_rate_series.csv")

    summary = report.summary()
    summary["capacity"] = fee_capacity(log, config.fee_tier, config.step_minutes)
    summary["breakeven_wealth"] = breakeven_wealth(
        report.aggregates["mean_total_ex_gas"], config.gas_per_operation
    )
    if math.isinf(summary["breakeven_wealth"]):
        summary["breakeven_wealth"] = None  # no breakeven: mean return <= 0
    with open(out / "summary.json", "w") as fh:
        json.dump(_round_tree(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    agg = report.aggregates
    print(
        f"operations={agg['n_operations']} active={agg['n_active']} "
        f"mean_total_ex_gas={agg['mean_total_ex_gas']:.6%} "
        f"final_wealth={agg['final_wealth']:.2f} fee_account={agg['fee_account']:.2f}"
    )
    print(f"wrote report to {out}")
    return 0


def cmd_benchmark(args, cfg) -> int:
    log = EventLog.read_csv(args.events)
    stats = extract_benchmark(log)
    out = _ensure_outdir(args.out)
    with open(out / "benchmark_pairs.csv", "w", newline="") as fh:
        fh.write(
            "wallet,mint_ts,burn_ts,depth,z_lower,z_upper,"
            "initial_value,final_value,fee_income,hold_days,performance\n"
        )
        for p in stats.pairs:
            fh.write(
                f"{p.wallet},{p.mint_ts},{p.burn_ts},{_fmt(p.depth)},{_fmt(p.z_lower)},"
                f"{_fmt(p.z_upper)},{_fmt(p.initial_value)},{_fmt(p.final_value)},"
                f"{_fmt(p.fee_income)},{_fmt(p.hold_days)},{_fmt(p.performance)}\n"
            )
    _write_json(out / "benchmark_summary.json", stats.aggregates)
    print(f"matched {stats.aggregates['n_pairs']} pairs "
          f"({stats.n_unmatched_mints} unmatched mints); wrote {out}")
    return 0


def cmd_sweep_asymmetry(args, cfg) -> int:
    log = EventLog.read_csv(args.events)
    lo, hi, n = (args.delta_grid or "0.0005:0.05:10").split(":")
    deltas = np.geomspace(float(lo), float(hi), int(n))
    rhos = _parse_span(args.rho_grid or "0:1:11")
    rows = asymmetry_sweep(
        log,
        deltas,
        rhos,
        drift_window_minutes=_opt(args, cfg, "drift_window_minutes", 60.0),
        return_step_minutes=_opt(args, cfg, "return_step_minutes", 5.0),
        n_bins=int(_opt(args, cfg, "bins", 5, int)),
    )
    out = _ensure_outdir(args.out)
    path = out / "asymmetry_sweep.csv"
    with open(path, "w", newline="") as fh:
        fh.write("drift_low,drift_high,drift_mean,n_windows,spread,best_asymmetry,mean_fee\n")
        for r in rows:
            fh.write(
                f"{_fmt(r['drift_low'])},{_fmt(r['drift_high'])},{_fmt(r['drift_mean'])},"
                f"{r['n_windows']},{_fmt(r['spread'])},{_fmt(r['best_asymmetry'])},"
                f"{_fmt(r['mean_fee'])}\n"
            )
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_float(p, *names, dest=None):
    p.add_argument(*names, dest=dest, type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clmm",
        description="Concentrated-liquidity market making toolkit",
        epilog=UNITS_NOTE,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--units", action="store_true", help="print the units note and exit")
    sub = parser.add_subparsers(dest="command")

    def common(p, events=False):
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--out", default=None if p.prog.endswith("policy") else ".",
                       help="output directory")
        if events:
            p.add_argument("--events", required=True, help="event CSV path")

    p = sub.add_parser("simulate", help="simulate joint rate/fee/wealth paths")
    common(p)
    p.add_argument("--seed", type=int, required=True)
    for name in ("sigma", "mu", "ou-speed", "ou-level", "ou-vol", "ou-start",
                 "mean-reversion", "fee-mean", "fee-vol", "epsilon", "gamma", "zeta",
                 "pi0", "x0", "horizon", "fixed-spread"):
        _add_float(p, f"--{name}", dest=name.replace("-", "_"))
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("policy", help="evaluate the closed-form policy")
    common(p)
    for name in ("pi", "sigma", "mu", "gamma", "zeta", "epsilon", "rate", "tick-floor"):
        _add_float(p, f"--{name}", dest=name.replace("-", "_"))
    p.add_argument("--sweep", choices=("pi", "sigma", "mu"), default=None)
    p.add_argument("--sweep-range", default="0.005:0.05:50", help="lo:hi:n")
    p.add_argument("--gamma-grid", default=None, help="comma-separated gamma values")

    p = sub.add_parser("estimate", help="rolling parameter estimates from an event log")
    common(p, events=True)
    for name in ("step-minutes", "window-days", "fee-tier", "rebalance-minutes"):
        _add_float(p, f"--{name}", dest=name.replace("-", "_"))
    p.add_argument("--fit-gamma", action="store_true")
    p.add_argument("--delta-grid", default=None, help="lo:hi:n geometric spread grid")

    p = sub.add_parser("backtest", help="replay an event log under the policy")
    common(p, events=True)
    for name in ("step-minutes", "in-sample-days", "gamma", "epsilon", "zeta",
                 "gas-provide", "gas-withdraw", "gas-take", "initial-wealth",
                 "fee-tier", "tick-floor"):
        _add_float(p, f"--{name}", dest=name.replace("-", "_"))
    p.add_argument("--drift-mode", choices=("zero", "estimated"), default=None)
    p.add_argument("--benchmark", action="store_true",
                   help="include the matched-pair benchmark block")

    p = sub.add_parser("benchmark", help="matched provide/withdraw pair statistics")
    common(p, events=True)

    p = sub.add_parser("sweep-asymmetry", help="fee-maximising skew per drift bin")
    common(p, events=True)
    p.add_argument("--delta-grid", default=None, help="lo:hi:n geometric spread grid")
    p.add_argument("--rho-grid", default=None, help="lo:hi:n linear asymmetry grid")
    for name in ("drift-window-minutes", "return-step-minutes"):
        _add_float(p, f"--{name}", dest=name.replace("-", "_"))
    p.add_argument("--bins", type=int, default=None)

    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "policy": cmd_policy,
    "estimate": cmd_estimate,
    "backtest": cmd_backtest,
    "benchmark": cmd_benchmark,
    "sweep-asymmetry": cmd_sweep_asymmetry,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.units:
        print(UNITS_NOTE, end="")
        return 0
    if args.command is None:
        parser.print_help()
        return 2
    try:
        cfg = _load_config(args.config)
        return _COMMANDS[args.command](args, cfg)
    except (SchemaError, DataError, DomainError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
