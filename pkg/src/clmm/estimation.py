"""Parameter estimation from rate series and pool event logs.

All estimates are normalised to daily units: volatility per sqrt(day),
fee rate and drift per day.  Rolling in-sample windows default to the
trailing day sampled at one-minute steps.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .events import EventLog
from .pool import depth_from_wealth, fee_share, range_from_spread

__all__ = [
    "estimate_sigma",
    "estimate_drift",
    "estimate_pool_fee_rate",
    "realized_fee_revenue",
    "GammaFit",
    "estimate_gamma",
    "return_correlation",
]


def estimate_sigma(rates, step_days: float) -> float:
    """Realised volatility: std of log returns at ``step_days``, per sqrt(day).

    Population standard deviation (ddof=0); for one-minute sampling the
    annualisation factor is sqrt(1440).
    """
    rates = np.asarray(rates, dtype=float)
    if rates.size < 2:
        raise DataError(f"need at least 2 observations, got {rates.size}")
    if step_days <= 0:
        raise DataError("step_days must be positive")
    returns = np.diff(np.log(rates))
    return float(np.std(returns) * math.sqrt(1.0 / step_days))


def estimate_drift(rates, step_days: float) -> float:
    """Mean log return divided by the observation step, per day."""
    rates = np.asarray(rates, dtype=float)
    if rates.size < 2:
        raise DataError(f"need at least 2 observations, got {rates.size}")
    if step_days <= 0:
        raise DataError("step_days must be positive")
    returns = np.diff(np.log(rates))
    return float(np.mean(returns) / step_days)


def estimate_pool_fee_rate(
    volume_x: float,
    pool_depth: float,
    rate: float,
    fee_tier: float,
    window_days: float = 1.0,
) -> float:
    """Pool fee rate per day: fee_tier * volume / (2*depth*sqrt(rate)) / window.

    ``volume_x`` is taker volume in units of X over the window; the
    denominator 2*depth*sqrt(rate) is the pool size marked in X.
    """
    if pool_depth <= 0:
        raise DataError("pool_depth must be positive")
    if rate <= 0:
        raise DataError("rate must be positive")
    if window_days <= 0:
        raise DataError("window_days must be positive")
    if volume_x == 0:
        warnings.warn("no taker volume in the window; fee rate estimate is 0", stacklevel=2)
        return 0.0
    return fee_tier * volume_x / (2 * pool_depth * math.sqrt(rate)) / window_days


def realized_fee_revenue(
    log: EventLog,
    spread: float,
    window_minutes: float,
    wealth: float = 1.0,
) -> float:
    """Average fee revenue of a symmetric unit-wealth position per window.

    The position is recentred on the prevailing rate at the start of every
    window of ``window_minutes`` and collects its depth share of each swap fee
    whose executed rate falls inside the range.  Returns the mean revenue
    across windows (0 when the log has no swaps).
    """
    if spread <= 0:
        raise DataError("spread must be positive")
    if window_minutes <= 0:
        raise DataError("window_minutes must be positive")
    idx = log.swap_idx
    if idx.size == 0:
        return 0.0
    ts = log.ts[idx]
    exec_rate = log.exec_rate[idx].astype(float)
    fee = log.fee_x[idx].astype(float)
    depth = log.pool_depth[idx].astype(float)
    rate_after = log.rate_after[idx].astype(float)

    window_s = int(round(window_minutes * 60))
    t0 = int(ts[0])
    t_end = int(ts[-1])
    n_windows = max(1, (t_end - t0) // window_s + (1 if (t_end - t0) % window_s else 0))
    totals = []
    half = spread / 2
    for w in range(n_windows):
        lo_t, hi_t = t0 + w * window_s, t0 + (w + 1) * window_s
        # rate at the window start: last post-trade rate before it, else the first known
        before = np.searchsorted(ts, lo_t, side="right") - 1
        z = float(rate_after[before]) if before >= 0 else float(rate_after[0])
        z_lower, z_upper = range_from_spread(z, half, half)
        pos_depth = depth_from_wealth(wealth, z, half, half)
        mask = (ts >= lo_t) & (ts < hi_t)
        acc = math.fsum(
            fee_share(pos_depth, depth[j], fee[j], exec_rate[j], z_lower, z_upper)
            for j in np.flatnonzero(mask)
        )
        totals.append(acc)
    return math.fsum(totals) / len(totals)


@dataclass(frozen=True)
class GammaFit:
    """OLS fit of spread^2 * revenue = 4*pi*m*spread - gamma*m."""

    gamma: float
    fee_rate: float       # slope/(4m), a cross-check estimate of pi
    slope: float
    intercept: float


def estimate_gamma(spreads, revenues, window_days: float,
                   expected_fee_rate: float | None = None) -> GammaFit:
    """Concentration cost from the affine shape of spread^2 * revenue.

    Regresses spread^2 * revenue on spread; gamma = -intercept/m and
    slope/(4m) re-estimates the pool fee rate.  ``window_days`` is the
    recentring horizon m in days.
    """
    spreads = np.asarray(spreads, dtype=float)
    revenues = np.asarray(revenues, dtype=float)
    if spreads.shape != revenues.shape:
        raise DataError("spreads and revenues must have equal length")
    if spreads.size < 3:
        raise DataError(f"need at least 3 grid points, got {spreads.size}")
    if np.unique(spreads).size < 2:
        raise DataError("design matrix is degenerate: all spreads equal")
    if window_days <= 0:
        raise DataError("window_days must be positive")
    y = spreads * spreads * revenues
    design = np.column_stack([spreads, np.ones_like(spreads)])
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    fit = GammaFit(
        gamma=float(-intercept / window_days),
        fee_rate=float(slope / (4 * window_days)),
        slope=float(slope),
        intercept=float(intercept),
    )
    if expected_fee_rate is not None and expected_fee_rate > 0:
        if abs(fit.fee_rate - expected_fee_rate) > 0.5 * expected_fee_rate:
            warnings.warn(
                f"regression fee rate {fit.fee_rate:.3g} is far from the "
                f"direct estimate {expected_fee_rate:.3g}",
                stacklevel=2,
            )
    return fit


def return_correlation(rate_series, fee_rate_series) -> float:
    """Correlation of simple returns of the rate and of the fee rate.

    Reported as a diagnostic of the weak-dependence assumption between the
    two; not enforced anywhere.
    """
    z = np.asarray(rate_series, dtype=float)
    p = np.asarray(fee_rate_series, dtype=float)
    if z.shape != p.shape:
        raise DataError("series must have equal length")
    if z.size < 3:
        raise DataError("need at least 3 observations")
    rz = np.diff(z) / z[:-1]
    rp = np.diff(p) / p[:-1]
    if np.std(rz) == 0 or np.std(rp) == 0:
        return 0.0
    return float(np.corrcoef(rz, rp)[0, 1])
