"""Adaptive state-action space partitioning Q-learners (AQL, SPAQL, SPAQL-TS)
with Pendulum and CartPole benchmarks."""

from .agents import AqlAgent, RandomAgent, SpaqlAgent, TerminalStateConfig
from .environments import Environment
from .experiments import RunConfig, RunResult, train_run, xi_sweep
from .partition import Ball, PartitionTree

__all__ = [
    "AqlAgent",
    "Ball",
    "Environment",
    "PartitionTree",
    "RandomAgent",
    "RunConfig",
    "RunResult",
    "SpaqlAgent",
    "TerminalStateConfig",
    "train_run",
    "xi_sweep",
]
