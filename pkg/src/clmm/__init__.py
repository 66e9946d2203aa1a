"""Concentrated-liquidity market making toolkit.

Pool algebra, path simulation, the closed-form provisioning policy, parameter
estimation, and an event-driven backtester with a market benchmark.
"""

from . import backtest, estimation, events, pool, stochastics, strategy
from .backtest import BacktestConfig, run_backtest
from .events import EventLog
from .stochastics import ConstantDrift, ModelParams, OUDrift, TimeGrid
from .strategy import PolicyInputs, PolicyOutput, evaluate_policy

__version__ = "0.1.0"

__all__ = [
    "backtest",
    "estimation",
    "events",
    "pool",
    "stochastics",
    "strategy",
    "BacktestConfig",
    "run_backtest",
    "EventLog",
    "ConstantDrift",
    "OUDrift",
    "ModelParams",
    "TimeGrid",
    "PolicyInputs",
    "PolicyOutput",
    "evaluate_policy",
]
