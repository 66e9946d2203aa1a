"""Closed-form provisioning policy and its numerical verification.

For log utility the optimal range width (spread) is

    spread* = (2*gamma + mu^2 sigma^2) / (4*pi - sigma^2/2 + mu*(mu - sigma^2/2))
            = (2*gamma + mu^2 sigma^2) / (4*(pi - eta) + margin),

with legs upper* = spread*/2 + mu and lower* = spread*/2 - mu, where pi is the
pool fee rate, gamma the concentration cost, and eta the profitability
threshold sigma^2/8 - mu/4*(mu - sigma^2/2) + margin/4.  A proportional
rebalance cost zeta enters everywhere through the effective drift mu - zeta.

The candidate value of expected log wealth has the form

    w(t, x, excess, mu) = log(x) + C(t,mu)*excess^2 + E(t,mu)*excess + F(t,mu),

where excess = pi - eta and, writing num = 2*gamma + mu^2 sigma^2 and G the
fee-rate mean reversion, the coefficient functions solve the backward system

    C' = 2G C - 8/num
    E' = G E - (2 G pibar + psi^2) C - 4*margin/num
    F' = -G pibar E - mu/2 + sigma^2/8 - margin^2/(2 num)

with zero terminal conditions.  ``value_function`` evaluates the integral
representations of C, E, F by quadrature; ``hjb_residual`` plugs the result
back into the dynamic-programming equation, whose maximised term is
(4*excess + margin)^2 / (2*num), and reports the worst absolute residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, NotProfitableError, NumericError
from .stochastics import (
    ConstantDrift,
    ModelParams,
    OUDrift,
    TimeGrid,
    profitability_threshold,
)

__all__ = [
    "PolicyInputs",
    "PolicyOutput",
    "profitability_threshold",
    "asymmetry",
    "optimal_spread",
    "optimal_legs",
    "check_admissibility",
    "evaluate_policy",
    "optimal_policy_fn",
    "value_functionals",
    "value_function",
    "hjb_residual",
]


@dataclass(frozen=True)
class PolicyInputs:
    """Everything the policy needs: market state and cost parameters, per day."""

    fee_rate: float            # pool fee rate pi
    sigma: float
    drift: float               # mu
    concentration_cost: float  # gamma
    rebalance_cost: float = 0.0  # zeta, folded into the effective drift
    margin: float = 1e-4       # epsilon

    def __post_init__(self):
        if self.margin <= 0:
            raise DomainError("margin must be positive")
        if self.concentration_cost < 0:
            raise DomainError("concentration_cost must be nonnegative")
        if self.sigma < 0:
            raise DomainError("sigma must be nonnegative")

    @property
    def effective_drift(self) -> float:
        return self.drift - self.rebalance_cost


@dataclass(frozen=True)
class PolicyOutput:
    spread: float | None
    lower_leg: float | None
    upper_leg: float | None
    asymmetry: float | None
    threshold: float
    admissible: bool
    reasons: tuple[str, ...]


def asymmetry(spread: float, drift: float) -> float:
    """Share of the spread placed above the rate: 1/2 + drift/spread."""
    if spread <= 0:
        raise DomainError(f"spread must be positive, got {spread}")
    return 0.5 + drift / spread


def _denominator(inputs: PolicyInputs) -> float:
    mu = inputs.effective_drift
    s2 = inputs.sigma * inputs.sigma
    return 4 * inputs.fee_rate - s2 / 2 + mu * (mu - s2 / 2)


def optimal_spread(inputs: PolicyInputs) -> float:
    """Closed-form optimal spread; raises NotProfitableError when pi < eta."""
    mu = inputs.effective_drift
    eta = profitability_threshold(inputs.sigma, mu, inputs.margin)
    if inputs.fee_rate < eta:
        raise NotProfitableError(
            f"fee rate {inputs.fee_rate} is below the profitability threshold {eta}"
        )
    num = 2 * inputs.concentration_cost + mu * mu * inputs.sigma * inputs.sigma
    return num / _denominator(inputs)


def optimal_legs(inputs: PolicyInputs) -> tuple[float, float]:
    """(lower, upper) legs: spread* split by the asymmetry rule, summing to spread*."""
    spread = optimal_spread(inputs)
    mu = inputs.effective_drift
    return spread / 2 - mu, spread / 2 + mu


def check_admissibility(
    inputs: PolicyInputs, spread: float, legs: tuple[float, float] | None = None
) -> tuple[bool, tuple[str, ...]]:
    """Diagnostic box and profitability checks; returns (ok, violated codes).

    Violations are reported, not enforced: the closed form is well defined
    outside these boxes but the corresponding ranges cannot be placed on a
    real venue.
    """
    mu = inputs.effective_drift
    s2 = inputs.sigma * inputs.sigma
    gamma = inputs.concentration_cost
    eta = profitability_threshold(inputs.sigma, mu, inputs.margin)
    codes: list[str] = []
    if inputs.fee_rate < eta:
        codes.append("below_threshold")
    if mu == 0 and inputs.fee_rate - gamma / 8 < s2 / 8:
        codes.append("symmetric_min_profitability")
    if inputs.fee_rate - gamma / 8 < (s2 / 8) * (mu * mu / 2 + 1) - (mu / 4) * (mu - s2 / 2):
        codes.append("min_profitability")
    if not -1 <= mu <= 1:
        codes.append("drift_out_of_range")
    if spread is not None:
        if not 2 * abs(mu) <= spread <= 4 - 2 * abs(mu):
            codes.append("leg_box")
        if spread > 4:
            codes.append("spread_cap")
        if spread <= 0:
            codes.append("nonpositive_spread")
    if legs is not None:
        lower, upper = legs
        if not (0 < lower <= 2 and 0 <= upper < 2):
            if "leg_box" not in codes:
                codes.append("leg_box")
    return (not codes, tuple(codes))


def evaluate_policy(inputs: PolicyInputs, tick_floor: float = 1e-4) -> PolicyOutput:
    """Full policy evaluation with diagnostics instead of exceptions.

    A spread below ``tick_floor`` (e.g. the degenerate gamma = 0, drift = 0
    case) is floored to one tick width and flagged.
    """
    eta = profitability_threshold(inputs.sigma, inputs.effective_drift, inputs.margin)
    try:
        spread = optimal_spread(inputs)
    except NotProfitableError:
        return PolicyOutput(
            spread=None,
            lower_leg=None,
            upper_leg=None,
            asymmetry=None,
            threshold=eta,
            admissible=False,
            reasons=("below_threshold",),
        )
    floored = False
    if spread < tick_floor:
        spread = tick_floor
        floored = True
    if spread <= 0:
        return PolicyOutput(
            spread=spread,
            lower_leg=None,
            upper_leg=None,
            asymmetry=None,
            threshold=eta,
            admissible=False,
            reasons=("nonpositive_spread",),
        )
    mu = inputs.effective_drift
    lower, upper = spread / 2 - mu, spread / 2 + mu
    ok, codes = check_admissibility(inputs, spread, (lower, upper))
    if floored:
        ok = False
        codes = codes + ("below_tick_width",)
    return PolicyOutput(
        spread=spread,
        lower_leg=lower,
        upper_leg=upper,
        asymmetry=asymmetry(spread, mu),
        threshold=eta,
        admissible=ok,
        reasons=codes,
    )


def optimal_policy_fn(params: ModelParams):
    """Vectorised policy callable for the wealth simulator.

    Recomputes the closed form from the simulated (mu, pi) at every step;
    valid whenever the simulated fee rate stays at or above the threshold.
    """
    s2 = params.sigma * params.sigma
    gamma = params.concentration_cost
    zeta = params.rebalance_cost

    def policy(t, z, mu, pi):
        mu_eff = mu - zeta
        denom = 4 * pi - s2 / 2 + mu_eff * (mu_eff - s2 / 2)
        spread = (2 * gamma + mu_eff * mu_eff * s2) / denom
        return spread / 2 - mu_eff, spread / 2 + mu_eff

    return policy


# ---------------------------------------------------------------------------
# Value function and dynamic-programming residual
# ---------------------------------------------------------------------------


def _simpson_doubling(fvec, a: float, b: float, tol: float, max_doublings: int = 22) -> float:
    """Composite Simpson with interval doubling and Richardson extrapolation.

    ``fvec`` must accept an ndarray of nodes.  Refines until successive
    estimates agree to ``tol`` (relative, floored at the same absolute level).
    """
    if b <= a:
        return 0.0
    n = 16
    xs = np.linspace(a, b, n + 1)
    fs = fvec(xs)
    h = (b - a) / n
    prev = h / 3 * (fs[0] + fs[-1] + 4 * fs[1:-1:2].sum() + 2 * fs[2:-2:2].sum())
    for _ in range(max_doublings):
        n *= 2
        xs = np.linspace(a, b, n + 1)
        fs = fvec(xs)
        h = (b - a) / n
        cur = h / 3 * (fs[0] + fs[-1] + 4 * fs[1:-1:2].sum() + 2 * fs[2:-2:2].sum())
        if abs(cur - prev) <= tol * max(1.0, abs(cur)):
            return cur + (cur - prev) / 15
        prev = cur
    raise NumericError(
        f"quadrature did not reach tolerance {tol} after {max_doublings} refinements"
    )


def value_functionals(
    params: ModelParams,
    mu: float,
    t: float,
    horizon: float,
    quad_tol: float = 1e-12,
) -> tuple[float, float, float]:
    """Coefficients (C, E, F) of the candidate value for a constant drift ``mu``.

    C has a closed form; E and F are one-dimensional time quadratures (the
    double integral in F collapses by switching the order of integration).
    The drift is used net of the rebalance cost.
    """
    if t > horizon:
        raise DomainError("t must not exceed the horizon")
    G = params.mean_reversion
    psi2 = params.fee_vol * params.fee_vol
    pibar = params.fee_mean
    eps = params.margin
    mu_eff = mu - params.rebalance_cost
    s2 = params.sigma * params.sigma
    num = 2 * params.concentration_cost + mu_eff * mu_eff * s2
    if num <= 0:
        raise DomainError("2*gamma + mu^2 sigma^2 must be positive")
    T = horizon

    def c_fn(s):
        return (8 / num) * (1 - np.exp(-2 * G * (T - s))) / (2 * G)

    def g_fn(s):
        return (2 * G * pibar + psi2) * c_fn(s) + 4 * eps / num

    c_val = float(c_fn(np.asarray(t)))
    e_val = _simpson_doubling(lambda s: np.exp(-G * (s - t)) * g_fn(s), t, T, quad_tol)
    f_const = mu_eff / 2 - s2 / 8 + eps * eps / (2 * num)
    f_val = (
        pibar * _simpson_doubling(lambda s: g_fn(s) * (1 - np.exp(-G * (s - t))), t, T, quad_tol)
        + f_const * (T - t)
    )
    return c_val, e_val, f_val


def _stochastic_drift_functionals(
    params: ModelParams,
    mu: float,
    t: float,
    horizon: float,
    mc_paths: int,
    grid_steps: int,
    seed: int,
) -> tuple[float, float, float]:
    """(C, E, F) under an OU drift, conditioned on drift value ``mu`` at ``t``.

    Expectations over the drift are Monte Carlo averages across paths started
    at ``mu``; the time integrals run on a fixed Simpson grid with the
    exponential kernels accumulated backwards.  Accuracy is Monte Carlo
    limited, unlike the constant-drift route.
    """
    drift = params.drift
    assert isinstance(drift, OUDrift)
    G = params.mean_reversion
    psi2 = params.fee_vol * params.fee_vol
    pibar = params.fee_mean
    eps = params.margin
    s2 = params.sigma * params.sigma
    span = horizon - t
    if span == 0:
        return 0.0, 0.0, 0.0
    if grid_steps % 2:
        grid_steps += 1
    grid = TimeGrid(span, grid_steps)
    conditioned = OUDrift(drift.speed, drift.level, drift.vol, start=mu)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    paths = conditioned.sample(rng, mc_paths, grid) - params.rebalance_cost

    num = 2 * params.concentration_cost + paths * paths * s2
    g8 = (8 / num).mean(axis=0)
    g4e = (4 * eps / num).mean(axis=0)
    ge2 = (eps * eps / (2 * num)).mean(axis=0)
    gmu = paths.mean(axis=0)

    dt = grid.dt
    n = grid_steps

    def backward_kernel(values: np.ndarray, decay: float) -> np.ndarray:
        """out[j] = int_{s_j}^{T} values(v) * exp(-decay (v - s_j)) dv, trapezoid."""
        out = np.zeros(n + 1)
        w = math.exp(-decay * dt)
        for j in range(n - 1, -1, -1):
            out[j] = w * out[j + 1] + dt / 2 * (values[j] + w * values[j + 1])
        return out

    ec = backward_kernel(g8, 2 * G)                      # E_t[C(s, mu_s)]
    c_val = float(ec[0])
    e_integrand = (2 * G * pibar + psi2) * ec + g4e
    ee = backward_kernel(e_integrand, G)                  # E_t[E(s, mu_s)]
    e_val = float(ee[0])
    f_integrand = pibar * G * ee + gmu / 2 - s2 / 8 + ge2
    weights = np.ones(n + 1)
    weights[1:-1:2], weights[2:-2:2] = 4.0, 2.0
    f_val = float(dt / 3 * (weights * f_integrand).sum())
    return c_val, e_val, f_val


def value_function(
    t: float,
    wealth: float,
    fee_rate: float,
    mu: float,
    params: ModelParams,
    horizon: float,
    quad_tol: float = 1e-12,
    mc_paths: int = 4096,
    grid_steps: int = 512,
    seed: int = 0,
) -> float:
    """Expected log terminal wealth under the optimal policy.

    ``mu`` is the drift observed at ``t``.  With a constant drift model the
    coefficients are quadrature-exact; with an OU drift they are Monte Carlo
    averages over drift paths (deterministic given ``seed``).  At t == horizon
    this returns log(wealth) exactly.
    """
    if wealth <= 0:
        raise DomainError("wealth must be positive")
    if t > horizon:
        raise DomainError("t must not exceed the horizon")
    mu_eff = mu - params.rebalance_cost
    excess = fee_rate - profitability_threshold(params.sigma, mu_eff, params.margin)
    if t == horizon:
        return math.log(wealth)
    if isinstance(params.drift, ConstantDrift):
        c_val, e_val, f_val = value_functionals(params, mu, t, horizon, quad_tol)
    else:
        c_val, e_val, f_val = _stochastic_drift_functionals(
            params, mu, t, horizon, mc_paths, grid_steps, seed
        )
    return math.log(wealth) + c_val * excess * excess + e_val * excess + f_val


def hjb_residual(
    evaluator: Callable[[float, np.ndarray, float], np.ndarray] | None,
    params: ModelParams,
    horizon: float,
    t_grid: Sequence[float] | None = None,
    excess_grid: Sequence[float] | None = None,
    mu_grid: Sequence[float] | None = None,
    n_points: int = 20,
    fd_step: float | None = None,
    quad_tol: float = 1e-12,
) -> float:
    """Max absolute dynamic-programming residual of a candidate value surface.

    ``evaluator(t, excess_array, mu)`` returns the candidate value net of
    log-wealth on an array of fee-rate excess levels; None selects the
    built-in quadrature evaluator.  Time and excess derivatives are taken by
    finite differences, so a wrong candidate (e.g. a perturbed coefficient)
    shows up as a large residual rather than cancelling.
    """
    G = params.mean_reversion
    psi2 = params.fee_vol * params.fee_vol
    pibar = params.fee_mean
    eps = params.margin
    s2 = params.sigma * params.sigma
    T = horizon
    h = fd_step if fd_step is not None else 5e-4 * T

    if t_grid is None:
        t_grid = np.linspace(2 * h, T - 2 * h, n_points)
    if excess_grid is None:
        excess_grid = np.linspace(0.0, 0.01, n_points)
    if mu_grid is None:
        mu_grid = np.linspace(-0.5, 0.5, n_points)
    excess_grid = np.asarray(excess_grid, dtype=float)

    cache: dict[tuple[float, float], tuple[float, float, float]] = {}

    def default_eval(tt: float, excess: np.ndarray, mu: float) -> np.ndarray:
        key = (tt, mu)
        if key not in cache:
            cache[key] = value_functionals(params, mu, tt, horizon, quad_tol)
        c_val, e_val, f_val = cache[key]
        return c_val * excess * excess + e_val * excess + f_val

    theta = evaluator if evaluator is not None else default_eval

    pe_step = max(1e-4, 0.05 * (excess_grid.max() - excess_grid.min() or 1.0))
    worst = 0.0
    for mu in mu_grid:
        mu_eff = mu - params.rebalance_cost
        num = 2 * params.concentration_cost + mu_eff * mu_eff * s2
        if num <= 0:
            raise DomainError("grid contains mu with 2*gamma + mu^2 sigma^2 <= 0")
        for tt in t_grid:
            if tt - 2 * h < 0 or tt + 2 * h > T:
                raise DomainError("t grid too close to the boundary for the FD stencil")
            th_m2 = theta(tt - 2 * h, excess_grid, mu)
            th_m1 = theta(tt - h, excess_grid, mu)
            th_0 = theta(tt, excess_grid, mu)
            th_p1 = theta(tt + h, excess_grid, mu)
            th_p2 = theta(tt + 2 * h, excess_grid, mu)
            d_t = (-th_p2 + 8 * th_p1 - 8 * th_m1 + th_m2) / (12 * h)
            th_up = theta(tt, excess_grid + pe_step, mu)
            th_dn = theta(tt, excess_grid - pe_step, mu)
            d_p = (th_up - th_dn) / (2 * pe_step)
            d_pp = (th_up - 2 * th_0 + th_dn) / (pe_step * pe_step)
            sup_term = 0.5 * (4 * excess_grid + eps) ** 2 / num
            residual = (
                d_t
                + G * (pibar - excess_grid) * d_p
                + 0.5 * psi2 * excess_grid * d_pp
                + mu_eff / 2
                - s2 / 8
                + sup_term
            )
            worst = max(worst, float(np.abs(residual).max()))
    return worst
