"""Path simulation: marginal rate, stochastic drift, pool fee rate, LP wealth.

Dynamics, with time measured in days:

    rate          dZ = mu_t Z dt + sigma Z dW                 (log-Euler, exact for GBM)
    drift         mu_t constant, or Ornstein-Uhlenbeck        (exact transition)
    fee rate      d(pi - eta) = G*(pibar - (pi - eta)) dt + psi*sqrt(pi - eta) dB
                                                              (full-truncation Euler)
    wealth        d log x = [(4 pi - sigma^2/2)/spread + (mu - zeta)*rho
                             - gamma/spread^2 - sigma^2 rho^2/2] dt
                            + sigma rho dW                    (same W as the rate)

where rho = upper_leg/spread and eta is the profitability threshold
sigma^2/8 - mu/4*(mu - sigma^2/2) + margin/4.

Randomness is organised in fixed blocks of ``BLOCK_SIZE`` paths.  Each block
owns generators spawned deterministically from the master seed (separate
streams for W, B and the drift), so results are byte-identical for any
worker count and workers only decide which thread fills which block.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .errors import DomainError, InadmissiblePolicyError, ShapeError

__all__ = [
    "BLOCK_SIZE",
    "ConstantDrift",
    "OUDrift",
    "ModelParams",
    "TimeGrid",
    "RatePaths",
    "FeeRatePaths",
    "PathBundle",
    "profitability_threshold",
    "simulate_rate_path",
    "simulate_fee_rate_path",
    "simulate_wealth_path",
    "pl_accrual",
]

BLOCK_SIZE = 1024

# policy maps (t, rate, drift, fee rate) to (lower_leg, upper_leg), vectorised
# over paths; it must be pure (it may be called from several threads)
Policy = Callable[[float, np.ndarray, np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


def profitability_threshold(sigma, mu, margin):
    """Depreciation rate the pool fee rate must beat for provision to be viable.

    sigma^2/8 - mu/4*(mu - sigma^2/2) + margin/4, per day.  Accepts scalars
    or arrays in ``mu``.
    """
    s2 = sigma * sigma
    return s2 / 8 - (mu / 4) * (mu - s2 / 2) + margin / 4


@dataclass(frozen=True)
class ConstantDrift:
    """Deterministic constant drift of the marginal rate (per day)."""

    value: float = 0.0

    @property
    def initial(self) -> float:
        return self.value

    def sample(self, rng: np.random.Generator, n_paths: int, grid: "TimeGrid") -> np.ndarray:
        return np.full((n_paths, grid.n_steps + 1), self.value)


@dataclass(frozen=True)
class OUDrift:
    """Mean-reverting drift: d mu = speed*(level - mu) dt + vol dW', exact transitions."""

    speed: float
    level: float
    vol: float
    start: float | None = None

    def __post_init__(self):
        if self.speed <= 0:
            raise DomainError("OU speed must be positive")
        if self.vol < 0:
            raise DomainError("OU vol must be nonnegative")

    @property
    def initial(self) -> float:
        return self.level if self.start is None else self.start

    def sample(self, rng: np.random.Generator, n_paths: int, grid: "TimeGrid") -> np.ndarray:
        dt = grid.dt
        a = math.exp(-self.speed * dt)
        s = self.vol * math.sqrt((1 - a * a) / (2 * self.speed))
        out = np.empty((n_paths, grid.n_steps + 1))
        out[:, 0] = self.initial
        shocks = rng.standard_normal((n_paths, grid.n_steps))
        for k in range(grid.n_steps):
            out[:, k + 1] = self.level + (out[:, k] - self.level) * a + s * shocks[:, k]
        return out


DriftModel = Union[ConstantDrift, OUDrift]


@dataclass(frozen=True)
class ModelParams:
    """Market and cost parameters, all rates per day.

    sigma               rate volatility per sqrt(day)
    drift               drift model for the marginal rate
    mean_reversion      pull of the fee-rate excess towards fee_mean
    fee_mean            long-run mean of (pool fee rate - threshold)
    fee_vol             square-root diffusion coefficient of the fee-rate excess
    margin              profitability margin epsilon (> 0)
    concentration_cost  penalty coefficient gamma on 1/spread^2
    rebalance_cost      proportional cost zeta on the Y side of the position
    gas_fee             flat per-operation fee in USD (reporting only)
    """

    sigma: float
    drift: DriftModel = ConstantDrift(0.0)
    mean_reversion: float = 1.0
    fee_mean: float = 1e-3
    fee_vol: float = 0.0
    margin: float = 1e-4
    concentration_cost: float = 0.0
    rebalance_cost: float = 0.0
    gas_fee: float = 0.0

    def __post_init__(self):
        if self.sigma < 0:
            raise DomainError("sigma must be nonnegative")
        if self.mean_reversion <= 0:
            raise DomainError("mean_reversion must be positive")
        if self.fee_mean <= 0:
            raise DomainError("fee_mean must be positive")
        if self.fee_vol < 0:
            raise DomainError("fee_vol must be nonnegative")
        if self.margin <= 0:
            raise DomainError("margin must be positive")
        if self.concentration_cost < 0:
            raise DomainError("concentration_cost must be nonnegative")
        if self.rebalance_cost < 0:
            raise DomainError("rebalance_cost must be nonnegative")
        if self.gas_fee < 0:
            raise DomainError("gas_fee must be nonnegative")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid over ``horizon`` days with ``n_steps`` steps."""

    horizon: float
    n_steps: int

    def __post_init__(self):
        if self.horizon <= 0 or self.n_steps < 1:
            raise DomainError("grid needs horizon > 0 and n_steps >= 1")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)


@dataclass
class RatePaths:
    times: np.ndarray
    rate: np.ndarray   # (n_paths, n_steps + 1)
    drift: np.ndarray


@dataclass
class FeeRatePaths:
    times: np.ndarray
    fee_rate: np.ndarray        # pi = excess + threshold(mu)
    excess: np.ndarray          # the truncated square-root process, >= 0
    truncated_fraction: float   # share of steps where truncation clipped a negative value


@dataclass
class PathBundle:
    """Joint paths of rate, drift, fee rate, wealth and its predictable loss."""

    times: np.ndarray
    rate: np.ndarray
    drift: np.ndarray
    fee_rate: np.ndarray
    wealth: np.ndarray
    log_wealth: np.ndarray
    pl: np.ndarray
    truncated_fraction: float = 0.0

    def write_csv(self, path) -> None:
        """One row per (path, step): path,t,rate,drift,fee_rate,wealth,pl."""
        n_paths, n = self.wealth.shape
        with open(path, "w", newline="") as fh:
            fh.write("path,t,rate,drift,fee_rate,wealth,pl\n")
            for p in range(n_paths):
                for k in range(n):
                    fh.write(
                        f"{p},{float(self.times[k])!r},{float(self.rate[p, k])!r},"
                        f"{float(self.drift[p, k])!r},{float(self.fee_rate[p, k])!r},"
                        f"{float(self.wealth[p, k])!r},{float(self.pl[p, k])!r}\n"
                    )


def _blocks(n_paths: int) -> list[tuple[int, int]]:
    return [(s, min(s + BLOCK_SIZE, n_paths)) for s in range(0, n_paths, BLOCK_SIZE)]


def _stream_children(seed: int, n_blocks: int) -> tuple[list, list, list]:
    w_root, b_root, m_root = np.random.SeedSequence(seed).spawn(3)
    return w_root.spawn(n_blocks), b_root.spawn(n_blocks), m_root.spawn(n_blocks)


def _run_blocks(n_paths: int, workers: int, task) -> None:
    spans = _blocks(n_paths)
    if workers <= 1:
        for b, span in enumerate(spans):
            task(b, span)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(task, b, span) for b, span in enumerate(spans)]
            for f in futures:
                f.result()


def simulate_rate_path(
    params: ModelParams,
    z0: float,
    grid: TimeGrid,
    seed: int,
    n_paths: int = 1,
    workers: int = 1,
) -> RatePaths:
    """Simulate the marginal rate under its drift model.

    Z_{k+1} = Z_k * exp((mu_k - sigma^2/2) dt + sigma sqrt(dt) xi_k), which is
    exact for constant drift and keeps every path positive.
    """
    if z0 <= 0:
        raise DomainError("z0 must be positive")
    w_kids, _, m_kids = _stream_children(seed, len(_blocks(n_paths)))
    n = grid.n_steps
    rate = np.empty((n_paths, n + 1))
    drift = np.empty((n_paths, n + 1))
    dt, sqdt = grid.dt, math.sqrt(grid.dt)
    sigma = params.sigma

    def task(b, span):
        lo, hi = span
        m = hi - lo
        mu = params.drift.sample(np.random.default_rng(m_kids[b]), m, grid)
        xi = np.random.default_rng(w_kids[b]).standard_normal((m, n))
        logz = np.empty((m, n + 1))
        logz[:, 0] = math.log(z0)
        for k in range(n):
            logz[:, k + 1] = logz[:, k] + (mu[:, k] - 0.5 * sigma * sigma) * dt + sigma * sqdt * xi[:, k]
        rate[lo:hi] = np.exp(logz)
        drift[lo:hi] = mu

    _run_blocks(n_paths, workers, task)
    return RatePaths(times=grid.times(), rate=rate, drift=drift)


def _cir_step(x, pibar, speed, vol, dt, sqdt, shock):
    """One full-truncation Euler step; returns (new state >= 0, clipped mask)."""
    raw = x + speed * (pibar - x) * dt + vol * np.sqrt(x) * sqdt * shock
    clipped = raw < 0
    return np.where(clipped, 0.0, raw), clipped


def simulate_fee_rate_path(
    params: ModelParams,
    pi0: float,
    mu: np.ndarray,
    grid: TimeGrid,
    seed: int,
    workers: int = 1,
) -> FeeRatePaths:
    """Simulate the pool fee rate as threshold(mu_t) plus a square-root excess.

    ``mu`` has shape (n_paths, n_steps + 1) (a 1-D array is broadcast to all
    paths).  The excess pi0 - threshold(mu_0) must be positive.
    """
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    n_paths = mu.shape[0]
    n = grid.n_steps
    if mu.shape[1] != n + 1:
        raise ShapeError(f"mu has {mu.shape[1]} columns, grid wants {n + 1}")
    eta0 = profitability_threshold(params.sigma, mu[:, 0], params.margin)
    if np.any(pi0 - eta0 <= 0):
        raise DomainError("pi0 must exceed the initial profitability threshold")

    _, b_kids, _ = _stream_children(seed, len(_blocks(n_paths)))
    excess = np.empty((n_paths, n + 1))
    clipped_count = np.zeros(len(_blocks(n_paths)), dtype=np.int64)
    dt, sqdt = grid.dt, math.sqrt(grid.dt)

    def task(b, span):
        lo, hi = span
        m = hi - lo
        shocks = np.random.default_rng(b_kids[b]).standard_normal((m, n))
        x = np.full(m, pi0) - profitability_threshold(params.sigma, mu[lo:hi, 0], params.margin)
        excess[lo:hi, 0] = x
        clips = 0
        for k in range(n):
            x, clipped = _cir_step(
                x, params.fee_mean, params.mean_reversion, params.fee_vol, dt, sqdt, shocks[:, k]
            )
            excess[lo:hi, k + 1] = x
            clips += int(clipped.sum())
        clipped_count[b] = clips

    _run_blocks(n_paths, workers, task)
    fee_rate = excess + profitability_threshold(params.sigma, mu, params.margin)
    frac = float(clipped_count.sum()) / float(n_paths * n)
    return FeeRatePaths(times=grid.times(), fee_rate=fee_rate, excess=excess, truncated_fraction=frac)


def simulate_wealth_path(
    params: ModelParams,
    x0: float,
    policy: Policy,
    grid: TimeGrid,
    seed: int,
    pi0: float,
    n_paths: int = 1,
    workers: int = 1,
) -> PathBundle:
    """Simulate LP wealth under a provisioning policy, jointly with Z, mu, pi.

    Wealth follows a log-Euler scheme whose diffusion loads on the same normal
    draw as the rate; the predictable-loss path accrues
    -sigma^2/2 * wealth/spread * dt per step.  The policy is evaluated at the
    start of each step and must return positive spreads.
    """
    if x0 <= 0:
        raise DomainError("x0 must be positive")
    n = grid.n_steps
    n_blocks = len(_blocks(n_paths))
    w_kids, b_kids, m_kids = _stream_children(seed, n_blocks)

    rate = np.empty((n_paths, n + 1))
    drift = np.empty((n_paths, n + 1))
    fee_rate = np.empty((n_paths, n + 1))
    log_wealth = np.empty((n_paths, n + 1))
    pl = np.empty((n_paths, n + 1))
    clipped_count = np.zeros(n_blocks, dtype=np.int64)

    sigma = params.sigma
    s2 = sigma * sigma
    gamma = params.concentration_cost
    zeta = params.rebalance_cost
    dt, sqdt = grid.dt, math.sqrt(grid.dt)
    times = grid.times()
    z0 = 1.0  # wealth dynamics do not depend on the rate level; keep Z for the policy

    def task(b, span):
        lo, hi = span
        m = hi - lo
        mu = params.drift.sample(np.random.default_rng(m_kids[b]), m, grid)
        xi = np.random.default_rng(w_kids[b]).standard_normal((m, n))
        shocks = np.random.default_rng(b_kids[b]).standard_normal((m, n))

        eta = profitability_threshold(sigma, mu[:, 0], params.margin)
        x_excess = np.full(m, pi0) - eta
        if np.any(x_excess <= 0):
            raise DomainError("pi0 must exceed the initial profitability threshold")
        logz = np.full(m, math.log(z0))
        logx = np.full(m, math.log(x0))
        pl_acc = np.zeros(m)
        clips = 0

        rate[lo:hi, 0] = np.exp(logz)
        fee_rate[lo:hi, 0] = x_excess + eta
        log_wealth[lo:hi, 0] = logx
        pl[lo:hi, 0] = pl_acc

        for k in range(n):
            pi_k = x_excess + eta
            lower, upper = policy(times[k], np.exp(logz), mu[:, k], pi_k)
            lower = np.asarray(lower, dtype=float)
            upper = np.asarray(upper, dtype=float)
            spread = lower + upper
            if np.any(spread <= 0) or not np.all(np.isfinite(spread)):
                raise InadmissiblePolicyError("policy returned a nonpositive spread")
            rho = upper / spread

            pl_acc = pl_acc - 0.5 * s2 * np.exp(logx) / spread * dt
            logx = logx + (
                (4 * pi_k - s2 / 2) / spread
                + (mu[:, k] - zeta) * rho
                - gamma / spread**2
                - 0.5 * s2 * rho**2
            ) * dt + sigma * rho * sqdt * xi[:, k]
            logz = logz + (mu[:, k] - s2 / 2) * dt + sigma * sqdt * xi[:, k]
            x_excess, clipped = _cir_step(
                x_excess, params.fee_mean, params.mean_reversion, params.fee_vol, dt, sqdt, shocks[:, k]
            )
            clips += int(clipped.sum())
            eta = profitability_threshold(sigma, mu[:, k + 1], params.margin)

            rate[lo:hi, k + 1] = np.exp(logz)
            fee_rate[lo:hi, k + 1] = x_excess + eta
            log_wealth[lo:hi, k + 1] = logx
            pl[lo:hi, k + 1] = pl_acc

        drift[lo:hi] = mu
        clipped_count[b] = clips

    _run_blocks(n_paths, workers, task)
    frac = float(clipped_count.sum()) / float(n_paths * n)
    return PathBundle(
        times=times,
        rate=rate,
        drift=drift,
        fee_rate=fee_rate,
        wealth=np.exp(log_wealth),
        log_wealth=log_wealth,
        pl=pl,
        truncated_fraction=frac,
    )


def pl_accrual(
    wealth: np.ndarray, spread: np.ndarray, sigma: float, grid: TimeGrid
) -> np.ndarray:
    """Predictable-loss path -sigma^2/2 * sum_{s<t} wealth_s/spread_s * dt.

    ``wealth`` and ``spread`` must both be aligned on the grid (last spread
    value is unused).  Starts at 0 and is nonincreasing.
    """
    wealth = np.asarray(wealth, dtype=float)
    spread = np.asarray(spread, dtype=float)
    if wealth.shape != spread.shape:
        raise ShapeError(f"wealth {wealth.shape} and spread {spread.shape} differ")
    if wealth.shape[-1] != grid.n_steps + 1:
        raise ShapeError(f"paths have {wealth.shape[-1]} points, grid wants {grid.n_steps + 1}")
    increments = -0.5 * sigma * sigma * wealth[..., :-1] / spread[..., :-1] * grid.dt
    out = np.zeros_like(wealth)
    np.cumsum(increments, axis=-1, out=out[..., 1:])
    return out
