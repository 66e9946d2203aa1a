"""Event-driven backtest of the provisioning policy, and market benchmarks.

Protocol: the trading window is discretised in fixed steps (default one
minute).  At every step the policy parameters are re-estimated on the
trailing in-sample window, the optimal range is posted, the position value is
rolled forward with the realised rate move, in-range swap fees accrue to a
separate X account, and the Y-leg adjustment between consecutive positions
pays the execution cost y * Z^(3/2) / depth plus flat gas fees.

Scalar accounting runs in chronological order with fsum reductions so a rerun
on the same inputs is bit-reproducible; report files round to 12 significant
digits.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .estimation import estimate_pool_fee_rate, estimate_sigma
from .events import EventLog
from .pool import holdings_for_position, range_from_spread
from .strategy import PolicyInputs, evaluate_policy

__all__ = [
    "BacktestConfig",
    "OperationRow",
    "MinuteSeries",
    "BacktestReport",
    "BenchmarkPair",
    "BenchmarkStats",
    "build_minute_series",
    "run_backtest",
    "extract_benchmark",
    "asymmetry_sweep",
    "breakeven_wealth",
    "fee_capacity",
]


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def _mean_sd(values) -> tuple[float, float]:
    vals = list(values)
    n = len(vals)
    if n == 0:
        return 0.0, 0.0
    mean = math.fsum(vals) / n
    sd = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / n)
    return mean, sd


@dataclass(frozen=True)
class BacktestConfig:
    """Replay settings; gas defaults are historical per-action averages in USD."""

    step_minutes: float = 1.0
    in_sample_days: float = 1.0
    concentration_cost: float = 5e-7
    margin: float = 1e-4
    rebalance_cost: float = 0.0
    gas_provide: float = 30.7
    gas_withdraw: float = 24.5
    gas_take: float = 29.6
    initial_wealth: float = 1_000_000.0
    drift_mode: str = "zero"  # "zero" | "estimated"
    fee_tier: float = 0.0005
    tick_floor: float = 1e-4

    def __post_init__(self):
        if self.step_minutes <= 0:
            raise DataError("step_minutes must be positive")
        if self.in_sample_days * 1440 < self.step_minutes:
            raise DataError("in-sample window must cover at least one step")
        if self.drift_mode not in ("zero", "estimated"):
            raise DataError(f"drift_mode must be 'zero' or 'estimated', got {self.drift_mode!r}")
        if self.initial_wealth <= 0:
            raise DataError("initial_wealth must be positive")

    @property
    def step_seconds(self) -> int:
        return int(round(self.step_minutes * 60))

    @property
    def gas_per_operation(self) -> float:
        return self.gas_provide + self.gas_withdraw + self.gas_take


@dataclass
class OperationRow:
    ts: int
    lower_leg: float
    upper_leg: float
    delta_position: float
    fee_income: float
    rebalance_cost: float
    gas_cost: float
    wealth: float              # wealth at the start of the operation
    active: bool
    flags: str = ""

    @property
    def total(self) -> float:
        return self.delta_position + self.fee_income - self.rebalance_cost - self.gas_cost


@dataclass
class MinuteSeries:
    """Step-aligned series derived from the event log (rates forward-filled)."""

    ts: np.ndarray      # int64 grid timestamps
    rate: np.ndarray
    depth: np.ndarray
    volume_x: np.ndarray  # taker volume per bucket [ts_k, ts_k + step)
    fee_x: np.ndarray


def build_minute_series(log: EventLog, step_seconds: int) -> MinuteSeries:
    """Grid the swap stream: last rate/depth at each grid point, sums per bucket.

    Missing buckets forward-fill the rate and depth and carry zero volume;
    grid points before the first swap use the first observed values.
    """
    idx = log.swap_idx
    if idx.size == 0:
        raise DataError("event log contains no swaps")
    ts = log.ts[idx]
    rate = log.rate_after[idx].astype(float)
    depth = log.pool_depth[idx].astype(float)
    volume = (log.amount_y[idx] * log.exec_rate[idx]).astype(float)
    fee = log.fee_x[idx].astype(float)

    t0 = int(log.ts[0])
    t_last = int(log.ts[-1])
    n_buckets = (t_last - t0) // step_seconds + 1
    grid = t0 + step_seconds * np.arange(n_buckets + 1, dtype=np.int64)

    # last swap at or before each grid point (head back-fills to the first swap)
    pos = np.searchsorted(ts, grid, side="right") - 1
    pos = np.clip(pos, 0, len(ts) - 1)
    grid_rate = rate[pos]
    grid_depth = depth[pos]

    bucket = (ts - t0) // step_seconds
    vol_per = np.zeros(n_buckets + 1)
    fee_per = np.zeros(n_buckets + 1)
    np.add.at(vol_per, bucket, volume)
    np.add.at(fee_per, bucket, fee)
    return MinuteSeries(ts=grid, rate=grid_rate, depth=grid_depth, volume_x=vol_per, fee_x=fee_per)


@dataclass
class BacktestReport:
    rows: list[OperationRow]
    aggregates: dict
    estimates: list[tuple[int, float, float, float]]  # (ts, sigma, fee_rate, drift)
    config: BacktestConfig
    benchmark: "BenchmarkStats | None" = None

    def write_report_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(
                "ts,lower_leg,upper_leg,delta_position,fee_income,"
                "rebalance_cost,gas_cost,total,wealth,active,flags\n"
            )
            for r in self.rows:
                legs = (
                    f"{_fmt(r.lower_leg)},{_fmt(r.upper_leg)}" if r.active else ","
                )
                fh.write(
                    f"{r.ts},{legs},{_fmt(r.delta_position)},{_fmt(r.fee_income)},"
                    f"{_fmt(r.rebalance_cost)},{_fmt(r.gas_cost)},{_fmt(r.total)},"
                    f"{_fmt(r.wealth)},{int(r.active)},{r.flags}\n"
                )

    def write_spread_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("ts,spread\n")
            for r in self.rows:
                if r.active:
                    fh.write(f"{r.ts},{_fmt(r.lower_leg + r.upper_leg)}\n")

    def write_fee_rate_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("ts,sigma,fee_rate,drift\n")
            for ts, sigma, pi, mu in self.estimates:
                fh.write(f"{ts},{_fmt(sigma)},{_fmt(pi)},{_fmt(mu)}\n")

    def summary(self) -> dict:
        out = {"aggregates": _round_tree(self.aggregates)}
        if self.benchmark is not None:
            out["benchmark"] = _round_tree(self.benchmark.aggregates)
        return out

    def write_summary_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _round_tree(obj):
    if isinstance(obj, dict):
        return {k: _round_tree(v) for k, v in obj.items()}
    if isinstance(obj, float):
        return float(_fmt(obj))
    return obj


def run_backtest(log: EventLog, config: BacktestConfig) -> BacktestReport:
    """Replay the log under the policy; see the module docstring for the rules.

    Steps whose policy is not implementable (fee rate below the threshold, or
    legs outside the placeable box) hold X cash instead, unwinding any open
    position at the prevailing execution cost.
    """
    series = build_minute_series(log, config.step_seconds)
    step_s = config.step_seconds
    in_sample_steps = int(round(config.in_sample_days * 86400 / step_s))
    if in_sample_steps < 1:
        raise DataError("in-sample window shorter than one step")
    n_grid = len(series.ts)
    first_op = in_sample_steps
    last_op = n_grid - 2  # need the rate one step ahead
    if last_op < first_op:
        raise DataError("event log spans less than in-sample plus one step")

    log_returns = np.diff(np.log(series.rate))
    step_days = step_s / 86400.0
    steps_per_day = 86400.0 / step_s

    swap_all = log.swap_idx
    swap_ts = log.ts[swap_all]
    swap_rate = log.exec_rate[swap_all].astype(float)
    swap_fee = log.fee_x[swap_all].astype(float)
    swap_depth = log.pool_depth[swap_all].astype(float)

    rows: list[OperationRow] = []
    estimates: list[tuple[int, float, float, float]] = []
    wealth = float(config.initial_wealth)
    fee_account = 0.0
    prev_range: tuple[float, float] | None = None
    prev_depth = 0.0
    endowed = True  # the first deposit arrives in kind, no rebalance charge

    for k in range(first_op, last_op + 1):
        ts_k = int(series.ts[k])
        z = float(series.rate[k])
        pool_depth = float(series.depth[k])
        window_returns = log_returns[k - in_sample_steps:k]
        sigma = float(np.std(window_returns) * math.sqrt(steps_per_day))
        volume = math.fsum(series.volume_x[k - in_sample_steps:k].tolist())
        if volume > 0:
            fee_rate = estimate_pool_fee_rate(
                volume, pool_depth, z, config.fee_tier, config.in_sample_days
            )
        else:
            fee_rate = 0.0
        if config.drift_mode == "estimated":
            mu = float(np.mean(window_returns) / step_days)
        else:
            mu = 0.0
        estimates.append((ts_k, sigma, fee_rate, mu))

        decision = evaluate_policy(
            PolicyInputs(
                fee_rate=fee_rate,
                sigma=sigma,
                drift=mu,
                concentration_cost=config.concentration_cost,
                rebalance_cost=config.rebalance_cost,
                margin=config.margin,
            ),
            tick_floor=config.tick_floor,
        )
        placeable = (
            decision.spread is not None
            and 0 < decision.lower_leg <= 2
            and 0 <= decision.upper_leg < 2
        )
        flags = "|".join(decision.reasons)

        # value of whatever the previous operation left us, at today's rate
        if prev_range is not None:
            x_w, y_w = holdings_for_position(z, prev_range[0], prev_range[1], prev_depth)
        else:
            x_w, y_w = wealth, 0.0

        if placeable:
            lower, upper = decision.lower_leg, decision.upper_leg
            spread = lower + upper
            if endowed:
                rebal = 0.0
                endowed = False
            else:
                y_new = (upper / spread) * wealth / z
                rebal = abs(y_new - y_w) * z * math.sqrt(z) / pool_depth
            active_wealth = wealth - rebal
            z_lower, z_upper = range_from_spread(z, lower, upper)
            pos_depth = 2.0 * active_wealth / (spread * math.sqrt(z))

            lo_s = int(np.searchsorted(swap_ts, ts_k, side="left"))
            hi_s = int(np.searchsorted(swap_ts, ts_k + step_s, side="left"))
            fee_income = math.fsum(
                (pos_depth / swap_depth[j]) * swap_fee[j]
                for j in range(lo_s, hi_s)
                if z_lower < swap_rate[j] <= z_upper
            )

            z_next = float(series.rate[k + 1])
            ret = z_next / z - 1.0
            pl_term = -(0.5 * sigma * sigma) * step_days * (active_wealth / spread)
            delta_position = pl_term + active_wealth * (upper / spread) * ret
            gas = config.gas_per_operation

            rows.append(OperationRow(
                ts=ts_k, lower_leg=lower, upper_leg=upper,
                delta_position=delta_position, fee_income=fee_income,
                rebalance_cost=rebal, gas_cost=gas, wealth=wealth,
                active=True, flags=flags,
            ))
            fee_account += fee_income
            wealth = active_wealth + delta_position
            prev_range = (z_lower, z_upper)
            prev_depth = pos_depth
        else:
            if prev_range is not None and y_w > 0:
                rebal = y_w * z * math.sqrt(z) / pool_depth
                gas = config.gas_withdraw + config.gas_take
            else:
                rebal, gas = 0.0, 0.0
            rows.append(OperationRow(
                ts=ts_k, lower_leg=math.nan, upper_leg=math.nan,
                delta_position=0.0, fee_income=0.0,
                rebalance_cost=rebal, gas_cost=gas, wealth=wealth,
                active=False, flags=flags,
            ))
            wealth = wealth - rebal
            prev_range = None
            prev_depth = 0.0
            endowed = False

    aggregates = _aggregate_rows(rows, wealth, fee_account, config)
    return BacktestReport(rows=rows, aggregates=aggregates, estimates=estimates, config=config)


def _aggregate_rows(rows, final_wealth, fee_account, config) -> dict:
    n = len(rows)
    pos = [r.delta_position / r.wealth for r in rows]
    fees = [r.fee_income / r.wealth for r in rows]
    rebal = [r.rebalance_cost / r.wealth for r in rows]
    gas = [r.gas_cost / r.wealth for r in rows]
    total_ex = [
        (r.delta_position + r.fee_income - r.rebalance_cost) / r.wealth for r in rows
    ]
    total_with = [
        (r.delta_position + r.fee_income - r.rebalance_cost - r.gas_cost) / r.wealth
        for r in rows
    ]
    out = {
        "n_operations": n,
        "n_active": sum(1 for r in rows if r.active),
        "final_wealth": final_wealth,
        "fee_account": fee_account,
        "gas_per_operation": config.gas_per_operation,
    }
    for name, vals in [
        ("position_value", pos),
        ("fee_income", fees),
        ("rebalance_cost", rebal),
        ("gas_cost", gas),
        ("total_ex_gas", total_ex),
        ("total_with_gas", total_with),
    ]:
        mean, sd = _mean_sd(vals)
        out[f"mean_{name}"] = mean
        out[f"sd_{name}"] = sd
    return out


# ---------------------------------------------------------------------------
# Benchmark: matched provide/withdraw pairs from the log
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkPair:
    wallet: str
    mint_ts: int
    burn_ts: int
    depth: float
    z_lower: float
    z_upper: float
    initial_value: float
    final_value: float
    fee_income: float

    @property
    def hold_days(self) -> float:
        return (self.burn_ts - self.mint_ts) / 86400.0

    @property
    def performance(self) -> float:
        return self.final_value / self.initial_value - 1.0

    @property
    def fee_fraction(self) -> float:
        return self.fee_income / self.initial_value


@dataclass
class BenchmarkStats:
    pairs: list[BenchmarkPair]
    n_unmatched_mints: int
    n_unmatched_burns: int
    aggregates: dict = field(default_factory=dict)


def extract_benchmark(log: EventLog, depth_rtol: float = 1e-9) -> BenchmarkStats:
    """Pair mints with the later burn of identical depth by the same wallet.

    Pairing is first-in-first-out per wallet and each burn consumes at most
    one mint; unmatched operations are counted and excluded.  Per-pair
    statistics value the position at the prevailing rate on entry and exit
    and accrue the depth share of in-range swap fees over the holding window.
    """
    swap_all = log.swap_idx
    if swap_all.size == 0:
        raise DataError("benchmark extraction needs swap rows for rate marks")
    swap_ts = log.ts[swap_all]
    swap_rate = log.exec_rate[swap_all].astype(float)
    swap_fee = log.fee_x[swap_all].astype(float)
    swap_depth = log.pool_depth[swap_all].astype(float)
    post_rate = log.rate_after[swap_all].astype(float)

    def rate_at(ts: int) -> float:
        j = int(np.searchsorted(swap_ts, ts, side="right")) - 1
        return float(post_rate[j]) if j >= 0 else float(post_rate[0])

    open_mints: dict[str, list[int]] = {}
    pairs: list[BenchmarkPair] = []
    unmatched_burns = 0
    order = np.argsort(log.ts, kind="stable")
    for i in order:
        kind = log.kind[i]
        if kind == "mint":
            open_mints.setdefault(log.wallet[i], []).append(int(i))
        elif kind == "burn":
            wallet = log.wallet[i]
            depth = float(log.position_depth[i])
            candidates = open_mints.get(wallet, [])
            match = None
            for pos, j in enumerate(candidates):
                d = float(log.position_depth[j])
                if math.isclose(d, depth, rel_tol=depth_rtol, abs_tol=0.0):
                    match = pos
                    break
            if match is None:
                unmatched_burns += 1
                continue
            j = candidates.pop(match)
            mint_ts, burn_ts = int(log.ts[j]), int(log.ts[i])
            z_lower = float(log.tick_lower[j])
            z_upper = float(log.tick_upper[j])
            d = float(log.position_depth[j])
            z_in, z_out = rate_at(mint_ts), rate_at(burn_ts)
            x0, y0 = holdings_for_position(z_in, z_lower, z_upper, d)
            x1, y1 = holdings_for_position(z_out, z_lower, z_upper, d)
            lo_s = int(np.searchsorted(swap_ts, mint_ts, side="right"))
            hi_s = int(np.searchsorted(swap_ts, burn_ts, side="right"))
            fee_income = math.fsum(
                (d / swap_depth[s]) * swap_fee[s]
                for s in range(lo_s, hi_s)
                if z_lower < swap_rate[s] <= z_upper
            )
            pairs.append(BenchmarkPair(
                wallet=wallet, mint_ts=mint_ts, burn_ts=burn_ts, depth=d,
                z_lower=z_lower, z_upper=z_upper,
                initial_value=x0 + y0 * z_in,
                final_value=x1 + y1 * z_out,
                fee_income=fee_income,
            ))
    n_unmatched_mints = sum(len(v) for v in open_mints.values())

    perf = [p.performance for p in pairs]
    fee_frac = [p.fee_fraction for p in pairs]
    hold = [p.hold_days for p in pairs]
    spread = [(p.z_upper - p.z_lower) / rate_at(p.mint_ts) for p in pairs]
    per_minute = [
        p.performance / (p.hold_days * 1440) for p in pairs if p.hold_days > 0
    ]
    by_wallet: dict[str, int] = {}
    for p in pairs:
        by_wallet[p.wallet] = by_wallet.get(p.wallet, 0) + 1
    ops_per_wallet = [2 * c for c in by_wallet.values()]

    aggregates: dict = {
        "n_pairs": len(pairs),
        "n_wallets": len(by_wallet),
        "n_unmatched_mints": n_unmatched_mints,
        "n_unmatched_burns": unmatched_burns,
    }
    for name, vals in [
        ("performance", perf),
        ("fee_income", fee_frac),
        ("hold_days", hold),
        ("spread", spread),
        ("performance_per_minute", per_minute),
        ("operations_per_wallet", ops_per_wallet),
    ]:
        mean, sd = _mean_sd(vals)
        aggregates[f"mean_{name}"] = mean
        aggregates[f"sd_{name}"] = sd
    return BenchmarkStats(
        pairs=pairs,
        n_unmatched_mints=n_unmatched_mints,
        n_unmatched_burns=unmatched_burns,
        aggregates=aggregates,
    )


# ---------------------------------------------------------------------------
# Asymmetry sweep and capacity diagnostics
# ---------------------------------------------------------------------------


def asymmetry_sweep(
    log: EventLog,
    spreads,
    asymmetries,
    drift_window_minutes: float = 60.0,
    return_step_minutes: float = 5.0,
    n_bins: int = 5,
) -> list[dict]:
    """Fee-maximising skew per (drift bin, spread) on hypothetical positions.

    Splits the log into windows of ``drift_window_minutes``; in each window a
    unit-wealth position with every (spread, skew) combination is held from
    the window start, collecting its share of in-range swap fees.  Windows
    are binned by the realised drift (mean of ``return_step_minutes`` log
    returns, per day) into ``n_bins`` quantile bins; within each bin and
    spread the reported skew maximises the average fee revenue.
    """
    spreads = [float(s) for s in spreads]
    asymmetries = [float(r) for r in asymmetries]
    if not spreads or not asymmetries:
        raise DataError("spread and asymmetry grids must be nonempty")
    idx = log.swap_idx
    if idx.size == 0:
        raise DataError("event log contains no swaps")
    sub_s = int(round(return_step_minutes * 60))
    win_s = int(round(drift_window_minutes * 60))
    series = build_minute_series(log, sub_s)
    per_win = win_s // sub_s
    if per_win < 1:
        raise DataError("drift window shorter than the return step")

    swap_ts = log.ts[idx]
    swap_rate = log.exec_rate[idx].astype(float)
    swap_fee = log.fee_x[idx].astype(float)
    swap_depth = log.pool_depth[idx].astype(float)

    n_windows = (len(series.ts) - 1) // per_win
    if n_windows < 1:
        raise DataError("event log shorter than one drift window")
    log_rate = np.log(series.rate)
    step_days = sub_s / 86400.0

    drifts = np.empty(n_windows)
    fee_table = np.zeros((n_windows, len(spreads), len(asymmetries)))
    for w in range(n_windows):
        a, b = w * per_win, (w + 1) * per_win
        rets = np.diff(log_rate[a:b + 1])
        drifts[w] = float(np.mean(rets) / step_days)
        z = float(series.rate[a])
        lo_t, hi_t = int(series.ts[a]), int(series.ts[b])
        lo_s = int(np.searchsorted(swap_ts, lo_t, side="left"))
        hi_s = int(np.searchsorted(swap_ts, hi_t, side="left"))
        if lo_s == hi_s:
            continue
        rates_w = swap_rate[lo_s:hi_s]
        fees_w = swap_fee[lo_s:hi_s]
        depths_w = swap_depth[lo_s:hi_s]
        sqz = math.sqrt(z)
        for si, delta in enumerate(spreads):
            for ri, rho in enumerate(asymmetries):
                upper, lower = rho * delta, (1 - rho) * delta
                s_lower = sqz * (1 - lower / 2)
                z_lower = s_lower * s_lower
                s_upper = sqz / (1 - upper / 2)
                z_upper = s_upper * s_upper
                pos_depth = 2.0 / (delta * sqz)
                in_range = (z_lower < rates_w) & (rates_w <= z_upper)
                fee_table[w, si, ri] = float(
                    np.sum(pos_depth / depths_w[in_range] * fees_w[in_range])
                )

    edges = np.quantile(drifts, np.linspace(0, 1, n_bins + 1))
    out: list[dict] = []
    for b in range(n_bins):
        lo, hi = float(edges[b]), float(edges[b + 1])
        mask = (drifts >= lo) & (drifts <= hi if b == n_bins - 1 else drifts < hi)
        if not mask.any():
            continue
        mean_fees = fee_table[mask].mean(axis=0)  # (spreads, asymmetries)
        for si, delta in enumerate(spreads):
            ri = int(np.argmax(mean_fees[si]))
            out.append({
                "drift_low": lo,
                "drift_high": hi,
                "drift_mean": float(drifts[mask].mean()),
                "n_windows": int(mask.sum()),
                "spread": delta,
                "best_asymmetry": asymmetries[ri],
                "mean_fee": float(mean_fees[si, ri]),
            })
    return out


def breakeven_wealth(per_operation_return: float, gas_per_operation: float) -> float:
    """Initial wealth at which fees cover flat gas: gas / per-operation return.

    A nonpositive return means gas can never be covered; returns inf.
    """
    if gas_per_operation < 0:
        raise DataError("gas must be nonnegative")
    if gas_per_operation == 0:
        return 0.0
    if per_operation_return <= 0:
        return math.inf
    return gas_per_operation / per_operation_return


def fee_capacity(log: EventLog, fee_tier: float, horizon_minutes: float = 1.0) -> dict:
    """Taker-flow ceiling on fee income: swaps/minute, volume/minute, max fee.

    The max fee is what a provider of 100% of the liquidity would earn over
    ``horizon_minutes``: fee_tier * volume per minute * horizon.
    """
    idx = log.swap_idx
    if idx.size == 0:
        return {
            "n_swaps": 0,
            "span_minutes": 0.0,
            "swaps_per_minute": 0.0,
            "volume_per_minute": 0.0,
            "max_fee_per_operation": 0.0,
        }
    ts = log.ts[idx]
    volume = math.fsum((log.amount_y[idx] * log.exec_rate[idx]).tolist())
    span_minutes = max((int(ts[-1]) - int(ts[0])) / 60.0, horizon_minutes)
    vol_per_min = volume / span_minutes
    return {
        "n_swaps": int(idx.size),
        "span_minutes": span_minutes,
        "swaps_per_minute": idx.size / span_minutes,
        "volume_per_minute": vol_per_min,
        "max_fee_per_operation": fee_tier * vol_per_min * horizon_minutes,
    }
