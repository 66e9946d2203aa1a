"""Exact algebra of constant-product pools with concentrated liquidity.

Conventions: the pool trades a reference asset X against a risky asset Y
quoted at rate Z (X per Y).  Reserves are implied by the marginal rate and
the depth, q_x = kappa*sqrt(Z) and q_y = kappa/sqrt(Z), so no reserve state
is carried around.  All rates and amounts are plain floats; on-chain
fixed-point representations are out of scope.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field

from .errors import DomainError, LiquidityExhaustedError

__all__ = [
    "PoolState",
    "LiquidityPosition",
    "SwapExecution",
    "level_function",
    "implied_reserves",
    "execution_rate",
    "execute_swap_segmented",
    "range_from_spread",
    "spread_from_range",
    "round_to_ticks",
    "holdings_for_position",
    "depth_from_wealth",
    "fee_share",
    "position_value",
]


@dataclass(frozen=True)
class PoolState:
    """Snapshot of the venue: marginal rate, active depth, fee tier, tick grid."""

    rate: float
    depth: float
    fee_tier: float = 0.0
    ticks: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.rate <= 0:
            raise DomainError(f"rate must be positive, got {self.rate}")
        if self.depth <= 0:
            raise DomainError(f"depth must be positive, got {self.depth}")
        if not 0 <= self.fee_tier < 1:
            raise DomainError(f"fee tier must lie in [0, 1), got {self.fee_tier}")
        if any(b <= a for a, b in zip(self.ticks, self.ticks[1:])):
            raise DomainError("tick grid must be strictly increasing")


@dataclass
class LiquidityPosition:
    """An LP range with its depth, current holdings and accrued fees (in X)."""

    z_lower: float
    z_upper: float
    lower_leg: float
    upper_leg: float
    depth: float
    x: float = 0.0
    y: float = 0.0
    fees: float = 0.0

    def __post_init__(self):
        if not 0 <= self.z_lower < self.z_upper:
            raise DomainError(f"need 0 <= z_lower < z_upper, got ({self.z_lower}, {self.z_upper})")
        _check_legs(self.lower_leg, self.upper_leg)
        if self.depth < 0:
            raise DomainError("position depth must be nonnegative")
        if min(self.x, self.y, self.fees) < 0:
            raise DomainError("holdings and fees must be nonnegative")


def _check_legs(lower_leg: float, upper_leg: float) -> None:
    if not 0 < lower_leg <= 2:
        raise DomainError(f"lower leg must lie in (0, 2], got {lower_leg}")
    if not 0 <= upper_leg < 2:
        raise DomainError(f"upper leg must lie in [0, 2), got {upper_leg}")
    if lower_leg * upper_leg / 2 >= lower_leg + upper_leg:
        raise DomainError("legs violate lower*upper/2 < lower+upper")


def level_function(q_y: float, depth: float) -> float:
    """Reserve of X that keeps the product invariant given a reserve q_y of Y."""
    if q_y <= 0:
        raise DomainError(f"q_y must be positive, got {q_y}")
    if depth <= 0:
        raise DomainError(f"depth must be positive, got {depth}")
    return depth * depth / q_y


def implied_reserves(pool: PoolState) -> tuple[float, float]:
    """Virtual reserves (q_x, q_y) implied by the marginal rate and depth."""
    s = math.sqrt(pool.rate)
    return pool.depth * s, pool.depth / s


def execution_rate(pool: PoolState, side: str, size_y: float) -> float:
    """Average rate (X per Y) paid or received for a trade of ``size_y`` units of Y.

    ``side`` is the liquidity taker's side: 'buy' removes Y from the pool,
    'sell' adds Y.  At size 0 the infinitesimal limits Z/(1-tau) (buy) and
    (1-tau)*Z (sell) are returned.
    """
    if size_y < 0:
        raise DomainError(f"trade size must be nonnegative, got {size_y}")
    tau = pool.fee_tier
    if side == "buy":
        if size_y == 0:
            return pool.rate / (1 - tau)
        _, q_y = implied_reserves(pool)
        if size_y >= q_y:
            raise LiquidityExhaustedError(
                f"buy of {size_y} exceeds implied Y reserves {q_y}"
            )
        paid = level_function(q_y - size_y, pool.depth) - level_function(q_y, pool.depth)
        return paid / ((1 - tau) * size_y)
    if side == "sell":
        if size_y == 0:
            return (1 - tau) * pool.rate
        _, q_y = implied_reserves(pool)
        received = level_function(q_y, pool.depth) - level_function(
            q_y + (1 - tau) * size_y, pool.depth
        )
        return received / size_y
    raise DomainError(f"side must be 'buy' or 'sell', got {side!r}")


@dataclass(frozen=True)
class SwapExecution:
    """Outcome of a swap that may cross tick boundaries."""

    average_rate: float
    rate_after: float
    x_total: float
    fee_total: float


def execute_swap_segmented(
    rate: float,
    ticks: tuple[float, ...],
    depths: dict[int, float],
    fee_tier: float,
    side: str,
    size_y: float,
) -> SwapExecution:
    """Execute a swap across tick ranges, one constant-product segment per range.

    ``depths[i]`` is the active depth on the tick range (ticks[i], ticks[i+1]];
    key -1 covers (0, ticks[0]] and key len(ticks)-1 covers (ticks[-1], inf).
    A buy pushes the rate up, a sell pushes it down; each segment consumes
    liquidity until the next boundary and then switches to that range's depth.
    """
    if rate <= 0:
        raise DomainError("rate must be positive")
    if size_y < 0:
        raise DomainError("trade size must be nonnegative")
    if side not in ("buy", "sell"):
        raise DomainError(f"side must be 'buy' or 'sell', got {side!r}")
    tau = fee_tier
    remaining = size_y
    x_total = 0.0  # X paid (buy) or received (sell) by the taker
    fee = 0.0
    z = rate

    def depth_for(idx: int) -> float:
        if idx not in depths:
            raise LiquidityExhaustedError(f"no liquidity registered for tick range {idx}")
        return depths[idx]

    if size_y == 0:
        marginal = z / (1 - tau) if side == "buy" else (1 - tau) * z
        return SwapExecution(marginal, z, 0.0, 0.0)

    while remaining > 0:
        sz = math.sqrt(z)
        if side == "buy":
            idx = bisect_right(ticks, z) - 1
            kappa = depth_for(idx)
            z_stop = ticks[idx + 1] if idx + 1 < len(ticks) else math.inf
            q_y = kappa / sz
            q_y_stop = kappa / math.sqrt(z_stop) if math.isfinite(z_stop) else 0.0
            dy_max = q_y - q_y_stop
            if remaining >= dy_max and not math.isfinite(z_stop):
                raise LiquidityExhaustedError("buy exhausts the topmost range reserves")
            dy = min(remaining, dy_max)
            hit_boundary = dy == dy_max
            z_new = z_stop if hit_boundary else (kappa / (q_y - dy)) ** 2
            x_seg = kappa * (math.sqrt(z_new) - sz)
            paid = x_seg / (1 - tau)
            x_total += paid
            fee += tau * paid
        else:
            idx = bisect_left(ticks, z) - 1
            kappa = depth_for(idx)
            z_stop = ticks[idx] if idx >= 0 else 0.0
            q_y = kappa / sz
            q_y_stop = kappa / math.sqrt(z_stop) if z_stop > 0 else math.inf
            dy_max = (q_y_stop - q_y) / (1 - tau)
            if remaining >= dy_max and z_stop <= 0:
                raise LiquidityExhaustedError("sell ran out of registered ranges")
            dy = min(remaining, dy_max)
            hit_boundary = dy == dy_max
            z_new = z_stop if hit_boundary else (kappa / (q_y + (1 - tau) * dy)) ** 2
            x_seg = kappa * (sz - math.sqrt(z_new))
            x_total += x_seg
            # fee charged on the Y paid in, marked in X at the segment's gross value
            fee += tau * x_seg / (1 - tau)
        z = z_new
        remaining -= dy

    return SwapExecution(
        average_rate=x_total / size_y, rate_after=z, x_total=x_total, fee_total=fee
    )


def range_from_spread(rate: float, lower_leg: float, upper_leg: float) -> tuple[float, float]:
    """Provision boundaries (z_lower, z_upper) for legs measured in sqrt-rate units.

    sqrt(z_upper) = sqrt(rate)/(1 - upper_leg/2) and
    sqrt(z_lower) = sqrt(rate)*(1 - lower_leg/2); the relative range width is
    lower_leg + upper_leg to first order.
    """
    if rate <= 0:
        raise DomainError(f"rate must be positive, got {rate}")
    _check_legs(lower_leg, upper_leg)
    s = math.sqrt(rate)
    s_lower = s * (1 - lower_leg / 2)
    s_upper = s / (1 - upper_leg / 2)
    return s_lower * s_lower, s_upper * s_upper


def spread_from_range(rate: float, z_lower: float, z_upper: float) -> tuple[float, float]:
    """Invert range_from_spread, recovering (lower_leg, upper_leg)."""
    if rate <= 0 or not 0 <= z_lower < z_upper:
        raise DomainError("need rate > 0 and 0 <= z_lower < z_upper")
    s = math.sqrt(rate)
    lower_leg = 2 * (1 - math.sqrt(z_lower) / s)
    upper_leg = 2 * (1 - s / math.sqrt(z_upper))
    return lower_leg, upper_leg


def round_to_ticks(
    z_lower: float, z_upper: float, ticks: tuple[float, ...]
) -> tuple[float, float]:
    """Snap both bounds to the nearest tick; widen to one tick range on a tie.

    If both bounds snap to the same tick the range is widened to the enclosing
    one-tick range rather than rejected.
    """
    if not ticks:
        raise DomainError("tick grid is empty")
    if not z_lower < z_upper:
        raise DomainError("need z_lower < z_upper")

    def nearest(z: float) -> int:
        i = bisect_left(ticks, z)
        if i == 0:
            return 0
        if i == len(ticks):
            return len(ticks) - 1
        return i if ticks[i] - z < z - ticks[i - 1] else i - 1

    lo, hi = nearest(z_lower), nearest(z_upper)
    if lo == hi:
        if hi + 1 < len(ticks):
            hi += 1
        else:
            lo -= 1
    return ticks[lo], ticks[hi]


def holdings_for_position(
    rate: float, z_lower: float, z_upper: float, depth: float
) -> tuple[float, float]:
    """Holdings (x, y) of a position of given depth at the prevailing rate.

    Below the range the position is all Y, above it all X, and in between it
    interpolates continuously:

        rate <= z_lower:          x = 0,                           y = d*(1/sqrt(z_lower) - 1/sqrt(z_upper))
        z_lower < rate <= z_upper: x = d*(sqrt(rate)-sqrt(z_lower)), y = d*(1/sqrt(rate) - 1/sqrt(z_upper))
        rate > z_upper:           x = d*(sqrt(z_upper)-sqrt(z_lower)), y = 0
    """
    if rate <= 0:
        raise DomainError(f"rate must be positive, got {rate}")
    if not 0 <= z_lower < z_upper:
        raise DomainError(f"need 0 <= z_lower < z_upper, got ({z_lower}, {z_upper})")
    if depth < 0:
        raise DomainError(f"depth must be nonnegative, got {depth}")
    inv_upper = 1 / math.sqrt(z_upper) if math.isfinite(z_upper) else 0.0
    if rate <= z_lower:
        return 0.0, depth * (1 / math.sqrt(z_lower) - inv_upper)
    if rate <= z_upper:
        return (
            depth * (math.sqrt(rate) - math.sqrt(z_lower)),
            depth * (1 / math.sqrt(rate) - inv_upper),
        )
    return depth * (math.sqrt(z_upper) - math.sqrt(z_lower)), 0.0


def depth_from_wealth(wealth: float, rate: float, lower_leg: float, upper_leg: float) -> float:
    """Position depth that invests ``wealth`` (in X) across the given legs.

    depth = 2*wealth/(sqrt(rate)*(lower_leg+upper_leg)); composed with
    range_from_spread and holdings_for_position this is self-financing:
    x + y*rate == wealth exactly.
    """
    if wealth <= 0:
        raise DomainError(f"wealth must be positive, got {wealth}")
    if rate <= 0:
        raise DomainError(f"rate must be positive, got {rate}")
    spread = lower_leg + upper_leg
    if spread <= 0:
        raise DomainError(f"legs must sum to a positive spread, got {spread}")
    return 2 * wealth / (spread * math.sqrt(rate))


def fee_share(
    position_depth: float,
    pool_depth: float,
    fee_paid: float,
    rate: float,
    z_lower: float,
    z_upper: float,
) -> float:
    """Slice of a taker fee earned by a position: pro-rata by depth, in range only."""
    if pool_depth <= 0:
        raise DomainError(f"pool depth must be positive, got {pool_depth}")
    if position_depth < 0 or fee_paid < 0:
        raise DomainError("position depth and fee must be nonnegative")
    if z_lower < rate <= z_upper:
        return (position_depth / pool_depth) * fee_paid
    return 0.0


def position_value(x: float, y: float, rate: float) -> float:
    """Mark-to-market value of holdings in units of X."""
    if rate <= 0:
        raise DomainError(f"rate must be positive, got {rate}")
    if x < 0 or y < 0:
        raise DomainError("holdings must be nonnegative")
    return x + y * rate
