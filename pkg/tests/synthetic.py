"""Synthetic event-log builders shared by the tests."""

from __future__ import annotations

import math

import numpy as np

from clmm.events import EventLog

T0 = 1_700_000_000  # arbitrary round epoch


def swap_row(ts, exec_rate, fee_x, pool_depth, rate_after, fee_tier=0.0005, side="buy"):
    return {
        "ts": ts,
        "kind": "swap",
        "side": side,
        "amount_y": fee_x / (fee_tier * exec_rate),
        "exec_rate": exec_rate,
        "fee_x": fee_x,
        "pool_depth": pool_depth,
        "rate_after": rate_after,
    }


def lp_row(ts, kind, wallet, z_lower, z_upper, depth):
    return {
        "ts": ts,
        "kind": kind,
        "wallet": wallet,
        "tick_lower": z_lower,
        "tick_upper": z_upper,
        "position_depth": depth,
    }


def constant_rate_log(minutes: int, rate: float = 100.0, depth: float = 1e5,
                      fee_per_minute: float = 5.0, fee_tier: float = 0.0005,
                      start_ts: int = T0) -> EventLog:
    """One at-the-rate swap per minute at a pinned rate; fees constant."""
    rows = []
    for k in range(minutes):
        rows.append(swap_row(start_ts + 60 * k + 7, rate, fee_per_minute, depth, rate,
                             fee_tier=fee_tier))
    return EventLog.from_rows(sorted(rows, key=lambda r: r["ts"]))


def fee_shape_log(
    delta_grid,
    rate: float = 100.0,
    depth: float = 1e5,
    fee_rate: float = 0.002,
    gamma: float = 5e-7,
    window_minutes: float = 1.0,
    n_windows: int = 60,
    fee_tier: float = 0.0005,
    noise_sd: float = 0.0,
    seed: int = 0,
    start_ts: int = T0,
) -> EventLog:
    """Swap stream whose realised fee revenue per window is, for every spread
    d in ``delta_grid``, exactly (4*fee_rate/d - gamma/d^2) * window (noise-free).

    Construction: a symmetric unit-wealth position with spread d captures the
    fee mass of swaps whose executed rate deviates by less than d in
    sqrt-rate units.  Placing one at-the-rate swap plus one swap between each
    pair of consecutive grid spreads, with cumulative captured fees

        S(d_i) = depth*sqrt(rate) * window_days * (2*fee_rate - gamma/(2*d_i)),

    makes the pipeline hit the affine shape exactly.  Gaussian multiplicative
    fee noise (``noise_sd``) is available for the noisy recovery test.
    """
    deltas = sorted(float(d) for d in delta_grid)
    window_days = window_minutes / 1440.0
    scale = depth * math.sqrt(rate) * window_days
    s_values = [scale * (2 * fee_rate - gamma / (2 * d)) for d in deltas]
    if s_values[0] <= 0:
        raise ValueError("first grid spread too small: captured fee mass must be positive")
    masses = [s_values[0]] + [b - a for a, b in zip(s_values, s_values[1:])]
    # mass j > 0 sits between grid spreads j-1 and j (in sqrt-rate deviation units)
    deviations = [0.0] + [(a + b) / 2 for a, b in zip(deltas, deltas[1:])]

    rng = np.random.default_rng(seed)
    window_s = int(round(window_minutes * 60))
    rows = []
    for w in range(n_windows):
        base = start_ts + w * window_s
        for j, (mass, dev) in enumerate(zip(masses, deviations)):
            if dev == 0.0:
                exec_rate = rate
            elif j % 2:  # alternate the side of the rate the swap prints on
                exec_rate = rate / (1 - dev / 4) ** 2
            else:
                exec_rate = rate * (1 - dev / 4) ** 2
            fee = mass
            if noise_sd > 0:
                fee = mass * max(0.05, 1.0 + noise_sd * rng.standard_normal())
            rows.append(swap_row(base + 2 + 2 * j, exec_rate, fee, depth, rate,
                                 fee_tier=fee_tier))
    return EventLog.from_rows(rows)


def gbm_trading_log(
    minutes: int,
    seed: int,
    z0: float = 100.0,
    sigma: float = 0.015,
    depth: float = 1e5,
    fee_tier: float = 0.0005,
    mean_fee: float = 2.5,
    lp_pairs: int = 0,
    start_ts: int = T0,
) -> EventLog:
    """Random walk rate with one swap per minute; optional mint/burn pairs."""
    rng = np.random.default_rng(seed)
    dt = 1.0 / 1440.0
    shocks = rng.standard_normal(minutes)
    log_rate = math.log(z0) + np.cumsum(-0.5 * sigma * sigma * dt + sigma * math.sqrt(dt) * shocks)
    rates = np.exp(log_rate)
    fees = mean_fee * rng.lognormal(mean=-0.125, sigma=0.5, size=minutes)
    depths = depth * (1 + 0.1 * np.sin(np.arange(minutes) / 720.0))
    rows = []
    for k in range(minutes):
        rows.append(swap_row(start_ts + 60 * k + 11, float(rates[k]), float(fees[k]),
                             float(depths[k]), float(rates[k]), fee_tier=fee_tier,
                             side="buy" if shocks[k] >= 0 else "sell"))
    for j in range(lp_pairs):
        mint_minute = int(rng.integers(1, max(2, minutes // 2)))
        hold = int(rng.integers(1, max(2, minutes - 1 - mint_minute)))
        z_at = float(rates[mint_minute])
        width = float(rng.uniform(0.02, 0.3))
        z_lower = z_at * (1 - width / 2)
        z_upper = z_at * (1 + width / 2)
        pos_depth = float(rng.uniform(100.0, 5000.0))
        wallet = f"w{j % 7}"
        rows.append(lp_row(start_ts + 60 * mint_minute + 30, "mint", wallet,
                           z_lower, z_upper, pos_depth))
        rows.append(lp_row(start_ts + 60 * (mint_minute + hold) + 30, "burn", wallet,
                           z_lower, z_upper, pos_depth))
    rows.sort(key=lambda r: r["ts"])
    return EventLog.from_rows(rows)
