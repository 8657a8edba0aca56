"""Standard space, the infinity product metric and observation mappings.

Every learner works in a rescaled space where each state coordinate lives
in [-1, 1].  Continuous actions are rescaled to [-1, 1] as well; finite
action sets are represented by their index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

PENDULUM_MAX_SPEED = 8.0
PENDULUM_MAX_TORQUE = 2.0
CARTPOLE_X_RANGE = 4.8
CARTPOLE_THETA_RANGE = 24 * math.pi / 180
CARTPOLE_XDOT_SLOPE = 1 / 240
CARTPOLE_THETADOT_SLOPE = 1 / 21

# distance between two distinct categorical actions (the space diameter)
CATEGORICAL_GAP = 2.0


def squash(m: float, y: float) -> float:
    """Shifted and rescaled sigmoid mapping the real line onto (-1, 1).

    ``2 / (1 + exp(-2 m y)) - 1`` is algebraically ``tanh(m y)``; tanh is
    used because it stays accurate for large ``|m y|``.
    """
    if not m > 0:
        raise ValueError(f"slope must be positive, got {m}")
    return math.tanh(m * y)


def normalize_angle(theta: float) -> float:
    """Map an angle onto its principal argument in (-pi, pi]."""
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta}")
    t = math.fmod(theta + math.pi, 2 * math.pi)
    if t <= 0.0:
        t += 2 * math.pi
    return t - math.pi


@dataclass(frozen=True)
class Transform:
    """Maps one raw state coordinate into [-1, 1]."""

    kind: str  # "linear" or "sigmoid"
    param: float  # divisor for linear, slope for sigmoid

    def __post_init__(self):
        if self.kind not in ("linear", "sigmoid"):
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if not self.param > 0:
            raise ValueError(f"transform parameter must be positive, got {self.param}")

    def __call__(self, y: float) -> float:
        if self.kind == "sigmoid":
            return squash(self.param, y)
        return min(1.0, max(-1.0, y / self.param))


@dataclass(frozen=True)
class SpaceSpec:
    """Per-dimension description of a standard state-action space.

    ``actions`` holds the environment-level values of a finite action set;
    an empty tuple means the action is a continuous coordinate in [-1, 1].
    """

    transforms: tuple[Transform, ...]
    actions: tuple = ()

    def __post_init__(self):
        if not self.transforms:
            raise ValueError("at least one state coordinate is required")
        if len(set(self.actions)) != len(self.actions):
            raise ValueError("categorical action set has duplicates")
        if len(self.actions) > 62:
            raise ValueError("at most 62 categorical actions are supported")

    @property
    def state_dims(self) -> int:
        return len(self.transforms)

    @property
    def categorical(self) -> bool:
        return len(self.actions) > 0

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def n_coords(self) -> int:
        """Number of coordinates stored for a ball center (state + continuous action)."""
        return self.state_dims + (0 if self.categorical else 1)

    def to_standard(self, raw: Sequence[float]) -> np.ndarray:
        if len(raw) != self.state_dims:
            raise ValueError(f"expected {self.state_dims} coordinates, got {len(raw)}")
        return np.array([t(y) for t, y in zip(self.transforms, raw)], dtype=float)


@dataclass
class StandardPoint:
    """A point of the standard space; coordinates are clamped on construction."""

    coords: np.ndarray
    action: float | int | None = None

    def __post_init__(self):
        self.coords = np.clip(np.asarray(self.coords, dtype=float), -1.0, 1.0)
        if isinstance(self.action, float):
            self.action = min(1.0, max(-1.0, self.action))


def distance(spec: SpaceSpec, p: StandardPoint, q: StandardPoint) -> float:
    """Infinity product metric between two standard points."""
    if len(p.coords) != spec.state_dims or len(q.coords) != spec.state_dims:
        raise ValueError("point dimension does not match the space")
    d = float(np.max(np.abs(p.coords - q.coords)))
    if p.action is None or q.action is None:
        return d
    if spec.categorical:
        if p.action != q.action:
            d = max(d, CATEGORICAL_GAP)
    else:
        d = max(d, abs(float(p.action) - float(q.action)))
    return d


def state_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Infinity metric restricted to the state coordinates."""
    return float(np.max(np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float))))


PENDULUM_STATE = (
    Transform("linear", 1.0),
    Transform("linear", 1.0),
    Transform("linear", PENDULUM_MAX_SPEED),
)
CARTPOLE_STATE = (
    Transform("linear", CARTPOLE_X_RANGE),
    Transform("sigmoid", CARTPOLE_XDOT_SLOPE),
    Transform("linear", CARTPOLE_THETA_RANGE),
    Transform("sigmoid", CARTPOLE_THETADOT_SLOPE),
)

PENDULUM_SPEC = SpaceSpec(PENDULUM_STATE)
PENDULUM_DISCRETE_SPEC = SpaceSpec(PENDULUM_STATE, actions=(-2.0, -1.0, 0.0, 1.0, 2.0))
CARTPOLE_SPEC = SpaceSpec(CARTPOLE_STATE, actions=(0, 1))


def pendulum_to_standard(obs: Sequence[float]) -> StandardPoint:
    """(cos, sin, angular velocity) -> standard point; velocity divided by 8."""
    return StandardPoint(PENDULUM_SPEC.to_standard(obs))


def standard_to_torque(a: float) -> float:
    return PENDULUM_MAX_TORQUE * min(1.0, max(-1.0, a))


def cartpole_to_standard(state: Sequence[float]) -> StandardPoint:
    """(x, x_dot, theta, theta_dot) -> standard point.

    Position and angle are scaled by twice their termination bounds and
    clamped; velocities are squashed.
    """
    return StandardPoint(CARTPOLE_SPEC.to_standard(state))
