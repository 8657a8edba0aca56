"""Pendulum and CartPole simulators.

The dynamics live in small jitted kernels so that the learners' episode
loops can call them without leaving compiled code.  The classes below wrap
the same kernels for library use and testing.

State buffers are float64 arrays of length 4:
  pendulum  -> (theta, theta_dot, 0, 0)
  cartpole  -> (x, x_dot, theta, theta_dot)
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .metric_space import (
    CARTPOLE_SPEC,
    CARTPOLE_THETA_RANGE,
    CARTPOLE_THETADOT_SLOPE,
    CARTPOLE_X_RANGE,
    CARTPOLE_XDOT_SLOPE,
    PENDULUM_DISCRETE_SPEC,
    PENDULUM_MAX_SPEED,
    PENDULUM_MAX_TORQUE,
    PENDULUM_SPEC,
    SpaceSpec,
)

PENDULUM = 0
CARTPOLE = 1

HORIZON = 200

# pendulum
PEND_G = 10.0
PEND_M = 1.0
PEND_L = 1.0
PEND_DT = 0.05
PEND_WORST_REWARD = -(math.pi**2 + 0.1 * PENDULUM_MAX_SPEED**2 + 0.001 * PENDULUM_MAX_TORQUE**2)

# cartpole
CP_G = 9.8
CP_CART_MASS = 1.0
CP_POLE_MASS = 0.1
CP_TOTAL_MASS = CP_CART_MASS + CP_POLE_MASS
CP_HALF_LENGTH = 0.5
CP_POLEMASS_LENGTH = CP_POLE_MASS * CP_HALF_LENGTH
CP_FORCE = 10.0
CP_DT = 0.02
CP_X_LIMIT = 2.4
CP_THETA_LIMIT = 12 * math.pi / 180


@njit(cache=True)
def _normalize_angle(theta):
    t = np.fmod(theta + math.pi, 2 * math.pi)
    if t <= 0.0:
        t += 2 * math.pi
    return t - math.pi


@njit(cache=True)
def pendulum_reset_kernel(st, rng):
    st[0] = rng.uniform(-math.pi, math.pi)
    st[1] = rng.uniform(-1.0, 1.0)
    st[2] = 0.0
    st[3] = 0.0


@njit(cache=True)
def pendulum_step_kernel(st, u):
    """Advance one step in place; returns the reward of the pre-step state."""
    u = min(PENDULUM_MAX_TORQUE, max(-PENDULUM_MAX_TORQUE, u))
    th = st[0]
    thdot = st[1]
    nth = _normalize_angle(th)
    cost = nth * nth + 0.1 * thdot * thdot + 0.001 * u * u
    acc = 3.0 * PEND_G / (2.0 * PEND_L) * math.sin(th) + 3.0 / (PEND_M * PEND_L * PEND_L) * u
    thdot = thdot + acc * PEND_DT
    th = th + thdot * PEND_DT
    st[0] = th
    st[1] = min(PENDULUM_MAX_SPEED, max(-PENDULUM_MAX_SPEED, thdot))
    return -cost


@njit(cache=True)
def cartpole_reset_kernel(st, rng):
    for i in range(4):
        st[i] = rng.uniform(-0.05, 0.05)


@njit(cache=True)
def cartpole_accelerations(st, action):
    force = CP_FORCE if action == 1 else -CP_FORCE
    theta = st[2]
    theta_dot = st[3]
    cos_t = math.cos(theta)
    sin_t = math.sin(theta)
    temp = (force + CP_POLEMASS_LENGTH * theta_dot * theta_dot * sin_t) / CP_TOTAL_MASS
    theta_acc = (CP_G * sin_t - cos_t * temp) / (
        CP_HALF_LENGTH * (4.0 / 3.0 - CP_POLE_MASS * cos_t * cos_t / CP_TOTAL_MASS)
    )
    x_acc = temp - CP_POLEMASS_LENGTH * theta_acc * cos_t / CP_TOTAL_MASS
    return x_acc, theta_acc


@njit(cache=True)
def cartpole_step_kernel(st, action):
    """Advance one step in place; returns whether the episode terminated."""
    x_acc, theta_acc = cartpole_accelerations(st, action)
    st[0] = st[0] + CP_DT * st[1]
    st[1] = st[1] + CP_DT * x_acc
    st[2] = st[2] + CP_DT * st[3]
    st[3] = st[3] + CP_DT * theta_acc
    return (
        st[0] < -CP_X_LIMIT
        or st[0] > CP_X_LIMIT
        or st[2] < -CP_THETA_LIMIT
        or st[2] > CP_THETA_LIMIT
    )


@njit(cache=True)
def env_reset(kind, st, rng):
    if kind == PENDULUM:
        pendulum_reset_kernel(st, rng)
    else:
        cartpole_reset_kernel(st, rng)


@njit(cache=True)
def env_observe(kind, st, obs):
    """Write the standard-space observation of ``st`` into ``obs``."""
    if kind == PENDULUM:
        obs[0] = math.cos(st[0])
        obs[1] = math.sin(st[0])
        obs[2] = min(1.0, max(-1.0, st[1] / PENDULUM_MAX_SPEED))
    else:
        obs[0] = min(1.0, max(-1.0, st[0] / CARTPOLE_X_RANGE))
        obs[1] = math.tanh(CARTPOLE_XDOT_SLOPE * st[1])
        obs[2] = min(1.0, max(-1.0, st[2] / CARTPOLE_THETA_RANGE))
        obs[3] = math.tanh(CARTPOLE_THETADOT_SLOPE * st[3])


@njit(cache=True)
def env_step(kind, scaled, st, action):
    """Step with an environment-level action; returns (reward, done)."""
    if kind == PENDULUM:
        r = pendulum_step_kernel(st, action)
        if scaled:
            r = min(1.0, max(0.0, 1.0 + r / -PEND_WORST_REWARD))
        return r, False
    done = cartpole_step_kernel(st, int(action))
    return 1.0, done


def pendulum_reward_scaled(r: float) -> float:
    """Affine map of a raw pendulum reward onto [0, 1]."""
    return min(1.0, max(0.0, 1.0 + r / abs(PEND_WORST_REWARD)))


def pendulum_discrete_actions() -> tuple[float, ...]:
    return PENDULUM_DISCRETE_SPEC.actions


@dataclass
class PendulumState:
    theta: float
    theta_dot: float


@dataclass
class CartPoleState:
    x: float
    x_dot: float
    theta: float
    theta_dot: float


@dataclass
class StepOutcome:
    observation: np.ndarray
    reward: float
    done: bool


def pendulum_reset(rng: np.random.Generator) -> PendulumState:
    st = np.zeros(4)
    pendulum_reset_kernel(st, rng)
    return PendulumState(st[0], st[1])


def pendulum_step(s: PendulumState, u: float) -> tuple[PendulumState, float]:
    if not (math.isfinite(s.theta) and math.isfinite(s.theta_dot)):
        raise ValueError("pendulum state must be finite")
    st = np.array([s.theta, s.theta_dot, 0.0, 0.0])
    r = pendulum_step_kernel(st, float(u))
    return PendulumState(st[0], st[1]), r


def cartpole_reset(rng: np.random.Generator) -> CartPoleState:
    st = np.zeros(4)
    cartpole_reset_kernel(st, rng)
    return CartPoleState(*st)


def cartpole_step(s: CartPoleState, a: int) -> tuple[CartPoleState, StepOutcome]:
    if a not in (0, 1):
        raise ValueError(f"cartpole action must be 0 or 1, got {a!r}")
    st = np.array([s.x, s.x_dot, s.theta, s.theta_dot], dtype=float)
    done = cartpole_step_kernel(st, a)
    obs = np.zeros(4)
    env_observe(CARTPOLE, st, obs)
    return CartPoleState(*st), StepOutcome(obs, 1.0, bool(done))


ENV_NAMES = ("pendulum", "pendulum-scaled", "pendulum-discrete", "cartpole")


class Environment:
    """One benchmark instance with a standard-space interface.

    ``action_values`` translates a categorical index into the simulator's
    action; continuous standard actions are multiplied by ``action_scale``.
    """

    def __init__(self, name: str):
        if name not in ENV_NAMES:
            raise ValueError(f"unknown environment {name!r}; choose from {', '.join(ENV_NAMES)}")
        self.name = name
        self.horizon = HORIZON
        self.scaled = name == "pendulum-scaled"
        if name == "cartpole":
            self.kind = CARTPOLE
            self.spec: SpaceSpec = CARTPOLE_SPEC
            self.x_ref = np.zeros(4)
        else:
            self.kind = PENDULUM
            self.spec = PENDULUM_DISCRETE_SPEC if name == "pendulum-discrete" else PENDULUM_SPEC
            self.x_ref = np.array([1.0, 0.0, 0.0])
        self.action_values = np.array(self.spec.actions if self.spec.categorical else [0.0], dtype=float)
        self.action_scale = PENDULUM_MAX_TORQUE if self.kind == PENDULUM else 1.0
        self.state = np.zeros(4)

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        env_reset(self.kind, self.state, rng)
        return self.observe()

    def observe(self) -> np.ndarray:
        obs = np.zeros(self.spec.state_dims)
        env_observe(self.kind, self.state, obs)
        return obs

    def env_action(self, action) -> float:
        if self.spec.categorical:
            return float(self.action_values[int(action)])
        return self.action_scale * min(1.0, max(-1.0, float(action)))

    def step(self, action) -> StepOutcome:
        """Apply a standard-space action (index or value in [-1, 1])."""
        if self.spec.categorical and not 0 <= int(action) < self.spec.n_actions:
            raise ValueError(f"invalid action index {action!r}")
        r, done = env_step(self.kind, self.scaled, self.state, self.env_action(action))
        return StepOutcome(self.observe(), float(r), bool(done))
