"""Adaptive Q-learning (AQL), single-partition AQL (SPAQL) and SPAQL with
terminal state (SPAQL-TS).

The per-step work (lookup, selection, simulation, update, split) runs inside
compiled episode kernels; the agent classes only keep the bookkeeping that
happens between episodes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .environments import Environment, env_observe, env_reset, env_step
from .partition import (
    Ball,
    Forest,
    PartitionTree,
    collect_leaves,
    greedy_leaf,
    max_children,
    sample_action_kernel,
    split_due,
    split_kernel,
    value_upper_kernel,
)

NORM_SHIFT = 0
NORM_SCALE = 1

TS_OFF = 0
TS_NEXT = 1  # weight V(x_{h+1}) by the distance of x_{h+1}
TS_CURRENT = 2  # weight V(x_{h+1}) by the distance of x_h


def ucb_bonus(xi: float, v: int) -> float:
    if v < 1:
        raise ValueError("the bonus needs at least one visit")
    return xi / math.sqrt(v)


def learning_rate(H: int, v: int) -> float:
    if v < 1:
        raise ValueError("the learning rate needs at least one visit")
    return (H + 1) / (H + v)


@njit(cache=True)
def _q_step(q, r, v_next, H, xi, v):
    alpha = (H + 1.0) / (H + v)
    return (1.0 - alpha) * q + alpha * (r + v_next + xi / math.sqrt(v))


def q_update(ball: Ball, r: float, v_next: float, H: int, xi: float) -> float:
    """Apply the optimistic Q-learning update to ``ball``; its visit count
    must already include the current visit."""
    v = ball.visit_count
    if v < 1:
        raise ValueError("record the visit before updating")
    ball.q_estimate = _q_step(ball.q_estimate, r, v_next, H, xi, v)
    return ball.q_estimate


def theoretical_xi(H: int, K: int, delta: float, L: float, d_max: float = 1.0) -> float:
    """Bonus scale from the high-probability regret bound of AQL."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return 2 * math.sqrt(H**3 * math.log(4 * H * K / delta)) + 4 * L * d_max


@dataclass(frozen=True)
class TerminalStateConfig:
    x_ref: np.ndarray
    lam: float = 1.2

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")

    def weight(self, x) -> float:
        d = float(np.max(np.abs(np.asarray(x, dtype=float) - self.x_ref)))
        return math.exp(-((d / self.lam) ** 2))


def spaql_ts_value(tree: PartitionTree, x_next, H: int, ts: TerminalStateConfig, x_weight=None) -> float:
    """Value of ``x_next`` damped by a Gaussian of its distance to the reference.

    ``x_weight`` overrides the state whose distance is used.
    """
    w = ts.weight(x_next if x_weight is None else x_weight)
    return w * tree.value_upper(x_next, H)


@njit(cache=True)
def _ts_weight(x, x_ref, lam):
    d = 0.0
    for i in range(len(x_ref)):
        e = abs(x[i] - x_ref[i])
        if e > d:
            d = e
    z = d / lam
    return math.exp(-z * z)


@njit(cache=True)
def _boltzmann_pick(qs, tau, norm, u):
    """Index drawn with probability proportional to exp(q / tau) given one
    uniform draw ``u``.  ``norm`` selects max-subtraction or division by
    the maximum before exponentiation."""
    n = len(qs)
    m = qs[0]
    for i in range(1, n):
        if qs[i] > m:
            m = qs[i]
    w = np.empty(n)
    if norm == NORM_SCALE and m != 0.0:
        zmax = -np.inf
        for i in range(n):
            w[i] = qs[i] / m
            if w[i] > zmax:
                zmax = w[i]
        for i in range(n):
            w[i] = math.exp((w[i] - zmax) / tau)
    else:
        for i in range(n):
            w[i] = math.exp((qs[i] - m) / tau)
    total = 0.0
    for i in range(n):
        total += w[i]
    target = u * total
    acc = 0.0
    for i in range(n):
        acc += w[i]
        if target < acc:
            return i
    return n - 1


@njit(cache=True)
def boltzmann_leaf(nodes, root, x, S, tau, norm, rng):
    n = collect_leaves(nodes, root, x, S)
    if n == 1:
        return nodes.out[0]
    qs = np.empty(n)
    for i in range(n):
        qs[i] = nodes.q[nodes.out[i]]
    return nodes.out[_boltzmann_pick(qs, tau, norm, rng.random())]


def boltzmann_probabilities(qs: Sequence[float], tau: float, norm: str = "shift") -> np.ndarray:
    qs = np.asarray(qs, dtype=float)
    if norm == "scale" and qs.max() != 0.0:
        z = qs / qs.max()
    else:
        z = qs
    w = np.exp((z - z.max()) / tau)
    return w / w.sum()


def boltzmann_select(leaves: Sequence[Ball], tau: float, rng: np.random.Generator, norm: str = "shift") -> Ball:
    """Sample a leaf with probability proportional to exp(Q / tau)."""
    if not leaves:
        raise ValueError("no leaves to select from")
    if not tau > 0:
        raise ValueError("temperature must be positive")
    if len(leaves) == 1:
        return leaves[0]
    qs = np.array([b.q_estimate for b in leaves])
    return leaves[_boltzmann_pick(qs, tau, NORM_SCALE if norm == "scale" else NORM_SHIFT, rng.random())]


# ---------------------------------------------------------------------------
# episode kernels


@njit(cache=True)
def _to_env_action(a, categorical, avals, ascale):
    if categorical:
        return avals[int(a)]
    return ascale * a


@njit(cache=True)
def rollout_kernel(nodes, roots, time_variant, S, H, kind, scaled, categorical, avals, ascale, rng, st, obs):
    env_reset(kind, st, rng)
    env_observe(kind, st, obs)
    total = 0.0
    for h in range(H):
        root = roots[h] if time_variant else roots[0]
        b = greedy_leaf(nodes, root, obs, S)
        a = sample_action_kernel(nodes, b, S, rng)
        r, done = env_step(kind, scaled, st, _to_env_action(a, categorical, avals, ascale))
        total += r
        if done:
            break
        env_observe(kind, st, obs)
    return total


@njit(cache=True)
def evaluate_kernel(nodes, roots, time_variant, S, H, kind, scaled, categorical, avals, ascale, rng, n_rollouts):
    st = np.zeros(4)
    obs = np.zeros(4)
    out = np.empty(n_rollouts)
    for i in range(n_rollouts):
        out[i] = rollout_kernel(nodes, roots, time_variant, S, H, kind, scaled, categorical, avals, ascale, rng, st, obs)
    return out


@njit(cache=True)
def aql_episode_kernel(nodes, roots, S, H, kind, scaled, categorical, avals, ascale, rng, xi, zero_on_done):
    st = np.zeros(4)
    obs = np.zeros(4)
    nxt = np.zeros(4)
    env_reset(kind, st, rng)
    env_observe(kind, st, obs)
    total = 0.0
    for h in range(H):
        b = greedy_leaf(nodes, roots[h], obs, S)
        a = sample_action_kernel(nodes, b, S, rng)
        r, done = env_step(kind, scaled, st, _to_env_action(a, categorical, avals, ascale))
        total += r
        env_observe(kind, st, nxt)
        if h == H - 1 or (done and zero_on_done):
            v_next = 0.0
        else:
            v_next = value_upper_kernel(nodes, roots[h + 1], nxt, S, H)
        nodes.visits[b] += 1
        v = nodes.visits[b]
        nodes.q[b] = _q_step(nodes.q[b], r, v_next, H, xi, v)
        if split_due(nodes, b):
            split_kernel(nodes, b, S, h)
        if done:
            break
        for i in range(4):
            obs[i] = nxt[i]
    return total


@njit(cache=True)
def spaql_episode_kernel(
    nodes, root, S, H, kind, scaled, categorical, avals, ascale, rng, xi, tau, norm, ts_mode, x_ref, lam, zero_on_done
):
    st = np.zeros(4)
    obs = np.zeros(4)
    nxt = np.zeros(4)
    env_reset(kind, st, rng)
    env_observe(kind, st, obs)
    total = 0.0
    splits = 0
    for h in range(H):
        b = boltzmann_leaf(nodes, root, obs, S, tau, norm, rng)
        a = sample_action_kernel(nodes, b, S, rng)
        r, done = env_step(kind, scaled, st, _to_env_action(a, categorical, avals, ascale))
        total += r
        env_observe(kind, st, nxt)
        if done and zero_on_done:
            v_next = 0.0
        else:
            v_next = value_upper_kernel(nodes, root, nxt, S, H)
            if ts_mode == TS_NEXT:
                v_next *= _ts_weight(nxt, x_ref, lam)
            elif ts_mode == TS_CURRENT:
                v_next *= _ts_weight(obs, x_ref, lam)
        nodes.visits[b] += 1
        v = nodes.visits[b]
        nodes.q[b] = _q_step(nodes.q[b], r, v_next, H, xi, v)
        if split_due(nodes, b):
            split_kernel(nodes, b, S, 0)
            splits += 1
        if done:
            break
        for i in range(4):
            obs[i] = nxt[i]
    return total, splits


# ---------------------------------------------------------------------------
# agents


TERMINAL_VALUES = ("bootstrap", "zero")


def _zero_on_done(terminal_value: str) -> bool:
    """``"zero"`` ends the value backup at a simulator termination;
    ``"bootstrap"`` treats the terminal observation like any other state."""
    if terminal_value not in TERMINAL_VALUES:
        raise ValueError(f"terminal_value must be one of {TERMINAL_VALUES}")
    return terminal_value == "zero"


def _env_args(env: Environment):
    return (env.kind, env.scaled, env.spec.categorical, env.action_values, float(env.action_scale))


def evaluate_returns(tree: PartitionTree, env: Environment, n: int, rng: np.random.Generator) -> np.ndarray:
    """Returns of ``n`` greedy rollouts of a single (time-invariant) partition."""
    if n < 1:
        raise ValueError("at least one rollout is required")
    roots = np.array([tree.root_index], dtype=np.int64)
    return evaluate_kernel(tree.nodes, roots, False, tree.S, env.horizon, *_env_args(env), rng, n)


def evaluate(tree: PartitionTree, env: Environment, n: int, rng: np.random.Generator) -> float:
    return float(np.mean(evaluate_returns(tree, env, n, rng)))


def greedy_rollout(tree: PartitionTree, env: Environment, rng: np.random.Generator) -> float:
    return float(evaluate_returns(tree, env, 1, rng)[0])


class RandomAgent:
    """A single-ball partition that is never trained: uniform random actions."""

    def __init__(self, env: Environment):
        self.env = env
        self.tree = PartitionTree(env.spec, env.horizon)

    def evaluate_returns(self, rng, n: int) -> np.ndarray:
        return evaluate_returns(self.tree, self.env, n, rng)

    def arm_count(self) -> int:
        return 1

    def policy_trees(self) -> list[PartitionTree]:
        return [self.tree]


class AqlAgent:
    """One partition per timestep, greedy selection with a UCB bonus."""

    def __init__(self, env: Environment, xi: float, terminal_value: str = "bootstrap"):
        if xi < 0:
            raise ValueError("xi must be non-negative")
        self.env = env
        self.xi = float(xi)
        self.zero_on_done = _zero_on_done(terminal_value)
        self.H = env.horizon
        self.forest = Forest(env.spec, self.H, self.H)

    @property
    def trees(self) -> list[PartitionTree]:
        return self.forest.trees

    def episode(self, rng: np.random.Generator) -> float:
        """One training episode; returns the cumulative reward."""
        self.forest.reserve(self.H * max_children(self.env.spec))
        return float(
            aql_episode_kernel(
                self.forest.nodes, self.forest.roots, self.env.spec.state_dims, self.H,
                *_env_args(self.env), rng, self.xi, self.zero_on_done,
            )
        )

    def evaluate_returns(self, rng, n: int) -> np.ndarray:
        return evaluate_kernel(
            self.forest.nodes, self.forest.roots, True, self.env.spec.state_dims, self.H,
            *_env_args(self.env), rng, n,
        )

    def arm_count(self) -> int:
        return self.forest.arm_count()

    def policy_trees(self) -> list[PartitionTree]:
        return self.trees


class SpaqlAgent:
    """Single time-invariant partition trained with Boltzmann exploration and
    a cyclic temperature; ``ts`` switches on the terminal-state weighting."""

    def __init__(
        self,
        env: Environment,
        xi: float,
        tau_min: float = 0.01,
        u: float = 2.0,
        d: float = 0.8,
        ts: TerminalStateConfig | None = None,
        boltzmann_norm: str = "shift",
        split_reset_at: int = 2,
        ts_weight_current: bool = False,
        terminal_value: str = "bootstrap",
    ):
        if not tau_min > 0:
            raise ValueError("tau_min must be positive")
        if not u > 1:
            raise ValueError("u must exceed 1")
        if not 0 < d < 1:
            raise ValueError("d must lie in (0, 1)")
        if boltzmann_norm not in ("shift", "scale"):
            raise ValueError(f"unknown boltzmann normalisation {boltzmann_norm!r}")
        self.env = env
        self.H = env.horizon
        self.xi = float(xi)
        self.zero_on_done = _zero_on_done(terminal_value)
        self.tau_min = float(tau_min)
        self.tau = float(tau_min)
        self.u_factor = float(u)
        self.d_factor = float(d)
        self.ts = ts
        self.norm = NORM_SCALE if boltzmann_norm == "scale" else NORM_SHIFT
        self.split_reset_at = int(split_reset_at)
        self.ts_mode = TS_OFF if ts is None else (TS_CURRENT if ts_weight_current else TS_NEXT)
        self.best = PartitionTree(env.spec, self.H)
        self.trainee = PartitionTree(env.spec, self.H)
        self.best_score: float | None = None
        self.best_returns: np.ndarray | None = None
        self.splits_since_accept = 0

    def initialize(self, rng: np.random.Generator, n: int) -> float:
        self.best_returns = evaluate_returns(self.best, self.env, n, rng)
        self.best_score = float(self.best_returns.mean())
        return self.best_score

    def train_episode(self, rng: np.random.Generator) -> tuple[float, int]:
        tree = self.trainee
        tree.reserve(self.H * max_children(self.env.spec))
        x_ref = self.ts.x_ref if self.ts is not None else np.zeros(self.env.spec.state_dims)
        lam = self.ts.lam if self.ts is not None else 1.0
        total, splits = spaql_episode_kernel(
            tree.nodes, tree.root_index, tree.S, self.H, *_env_args(self.env), rng,
            self.xi, self.tau, self.norm, self.ts_mode, np.asarray(x_ref, dtype=float), lam,
            self.zero_on_done,
        )
        return float(total), int(splits)

    def iteration(self, rng: np.random.Generator, n: int) -> tuple[bool, float]:
        """Train the trainee for one episode, evaluate it, and keep it if it
        beats the best partition so far."""
        if self.best_score is None:
            self.initialize(rng, n)
        _, splits = self.train_episode(rng)
        self.splits_since_accept += splits
        returns = evaluate_returns(self.trainee, self.env, n, rng)
        score = float(returns.mean())
        if score > self.best_score:
            self.best.copy_from(self.trainee)
            self.best_score = score
            self.best_returns = returns
            self.tau = self.tau_min
            self.u_factor = self.u_factor**self.d_factor
            self.splits_since_accept = 0
            return True, score
        self.tau *= self.u_factor
        if self.splits_since_accept >= self.split_reset_at:
            self.trainee.copy_from(self.best)
            self.tau = self.tau_min
            self.splits_since_accept = 0
        return False, score

    def evaluate_returns(self, rng, n: int) -> np.ndarray:
        return evaluate_returns(self.best, self.env, n, rng)

    def arm_count(self) -> int:
        return self.best.arm_count()

    def policy_trees(self) -> list[PartitionTree]:
        return [self.best]
