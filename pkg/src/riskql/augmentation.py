"""State augmentation: bookkeeping states that make risk-sensitive control Markovian.

The base environment is extended with two scalar states: ``b0`` accumulates
the discounted running reward and ``b1`` carries the discount factor.  Their
dynamics are deterministic (zero diffusion rows):

    db0 = b1 * r(t, x, a) dt        db1 = -delta * b1 dt

so the pair is a function of the action path alone.  The terminal payoff of
the augmented problem is phi(b0 + b1 * h(x)), which is where the risk
measure's utility enters; the running reward of the augmented problem is
identically zero.

Integration detail that callers rely on: ``b1`` is advanced by the exact
exponential (it solves a linear ODE; Euler would bias the state every policy
and value evaluation conditions on), and ``b0`` is carried internally as
b0_init + b1_init * Y with Y the left-endpoint quadrature of the discounted
reward.  That factoring makes the identity between the augmented b0 path and
``cumulative_reward_path`` exact in floating point, not just to rounding,
which the budget module's joint-simulation contract depends on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .engine import ActionSpace, ControlledSde, TimeGrid, brownian_increments, euler_step
from .errors import TrajectoryDivergenceError
from .oce import UtilityFunction, utility_eval
from .streams import ACTIONS, BROWNIAN, RandomStream

__all__ = [
    "RewardSpec",
    "AugmentedState",
    "AugmentedSde",
    "AugmentedPolicy",
    "AugmentedTrajectory",
    "StateOnlyPolicy",
    "augment",
    "terminal_payoff",
    "cumulative_reward_path",
    "simulate_augmented",
    "discount_factor",
]


def discount_factor(delta: float, elapsed: float) -> float:
    """e^(-delta * elapsed); the single shared rounding for b1 everywhere.

    Both the augmented simulator and the lifted-policy simulator must call
    this helper (same expression, same floats) so their b1 inputs to the
    policy agree bitwise.
    """
    return math.exp(-delta * elapsed)


@dataclass(frozen=True)
class RewardSpec:
    """Running reward r(t, x, a), terminal reward h(x), discount delta >= 0."""

    running: Callable[[float, np.ndarray, np.ndarray], float]
    terminal: Callable[[np.ndarray], float]
    delta: float = 0.0

    def __post_init__(self) -> None:
        if not self.delta >= 0.0:
            raise ValueError(f"discount delta must be >= 0, got {self.delta}")


@dataclass(frozen=True)
class AugmentedState:
    x: np.ndarray
    b0: float
    b1: float

    def __post_init__(self) -> None:
        if not self.b1 > 0.0:
            raise ValueError(f"b1 must be positive, got {self.b1}")


class AugmentedPolicy(Protocol):
    """Action sampler conditioned on the augmented state."""

    def sample(
        self, t: float, x: np.ndarray, b0: float, b1: float, rng: np.random.Generator
    ) -> np.ndarray: ...


@dataclass(frozen=True)
class StateOnlyPolicy:
    """Adapter running a base-state policy on the augmented environment."""

    base: object  # engine.Policy

    def sample(
        self, t: float, x: np.ndarray, b0: float, b1: float, rng: np.random.Generator
    ) -> np.ndarray:
        return self.base.sample(t, x, rng)


@dataclass(frozen=True)
class AugmentedSde:
    """Base dynamics plus the (b0, b1) bookkeeping rows.

    ``drift``/``diffusion`` expose the augmented coefficient functions for
    generator-based diagnostics; simulation goes through
    :func:`simulate_augmented`, which uses the exact b1 update instead of
    Euler on the last row.
    """

    base: ControlledSde
    reward: RewardSpec
    utility: UtilityFunction

    @property
    def state_dim(self) -> int:
        return self.base.state_dim + 2

    @property
    def noise_dim(self) -> int:
        return self.base.noise_dim

    @property
    def actions(self) -> ActionSpace:
        return self.base.actions

    def drift(self, t: float, aug_x: np.ndarray, a: np.ndarray) -> np.ndarray:
        d = self.base.state_dim
        x, b0, b1 = aug_x[:d], aug_x[d], aug_x[d + 1]
        out = np.empty(d + 2)
        out[:d] = self.base.drift(t, x, a)
        out[d] = b1 * self.reward.running(t, x, a)
        out[d + 1] = -self.reward.delta * b1
        return out

    def diffusion(self, t: float, aug_x: np.ndarray, a: np.ndarray) -> np.ndarray:
        d, n = self.base.state_dim, self.base.noise_dim
        out = np.zeros((d + 2, n))
        out[:d] = self.base.diffusion(t, aug_x[:d], a)
        return out


def augment(base: ControlledSde, reward: RewardSpec, utility: UtilityFunction) -> AugmentedSde:
    probe = reward.terminal(np.zeros(base.state_dim))
    if not isinstance(probe, (int, float, np.floating)):
        raise TypeError("terminal reward must return a scalar")
    return AugmentedSde(base=base, reward=reward, utility=utility)


def terminal_payoff(aug: AugmentedSde, x: np.ndarray, b0: float, b1: float) -> float:
    """phi(b0 + b1 * h(x)); the utility applied directly, no supremum."""
    if not b1 > 0.0:
        raise ValueError(f"b1 must be positive, got {b1}")
    return utility_eval(aug.utility, b0 + b1 * float(aug.reward.terminal(np.asarray(x))))


@dataclass(frozen=True)
class AugmentedTrajectory:
    """One augmented episode.

    ``y`` is the discounted cumulative reward path; ``b0``/``b1`` are the
    bookkeeping paths derived from it (b0 = b0_init + b1_init * y).
    """

    grid: TimeGrid
    states: np.ndarray  # (K+1, d) base states
    b0: np.ndarray  # (K+1,)
    b1: np.ndarray  # (K+1,)
    y: np.ndarray  # (K+1,)
    actions: np.ndarray  # (K, m)
    increments: np.ndarray  # (K, n)

    @property
    def terminal_state(self) -> AugmentedState:
        return AugmentedState(self.states[-1], float(self.b0[-1]), float(self.b1[-1]))


def cumulative_reward_path(traj, reward: RewardSpec) -> np.ndarray:
    """Discounted cumulative reward Y along a base trajectory.

    Left-endpoint quadrature: Y_{k+1} = Y_k + e^(-delta (t_k - t_0)) *
    r(t_k, x_k, a_k) * dt_k, with Y_0 = 0.  The operation order here is the
    contract: the augmented simulator runs the identical recursion.
    """
    pts = traj.grid.points
    states = traj.states
    actions = traj.actions
    t0 = pts[0]
    dt = traj.grid.dt  # uniform; differencing pts would reintroduce rounding
    y = np.zeros(len(pts))
    acc = 0.0
    for k in range(len(actions)):
        decay = discount_factor(reward.delta, pts[k] - t0)
        acc = acc + decay * reward.running(pts[k], states[k], actions[k]) * dt
        y[k + 1] = acc
    return y


def simulate_augmented(
    aug: AugmentedSde,
    policy: AugmentedPolicy,
    grid: TimeGrid,
    x0: np.ndarray,
    b0_init: float = 0.0,
    b1_init: float = 1.0,
    stream: RandomStream | None = None,
    episode: int = 0,
    increments: np.ndarray | None = None,
    action_rng: np.random.Generator | None = None,
) -> AugmentedTrajectory:
    """Roll out one episode under an augmented-state policy.

    Noise and action randomness come from per-(episode, purpose) substreams
    of ``stream``; pass ``increments``/``action_rng`` explicitly instead to
    share them with another simulator (the joint-simulation tests do this).
    The action is sampled before the step it drives, at the left endpoint.
    """
    if not b1_init > 0.0:
        raise ValueError(f"b1_init must be positive, got {b1_init}")
    sde = aug.base
    K = grid.num_steps
    dt = grid.dt
    pts = grid.points
    t0 = pts[0]

    if increments is None:
        if stream is None:
            raise ValueError("need either a RandomStream or explicit increments")
        increments = brownian_increments(stream.episode(episode, BROWNIAN), K, dt, sde.noise_dim)
    if action_rng is None:
        if stream is None:
            raise ValueError("need either a RandomStream or an explicit action generator")
        action_rng = stream.episode(episode, ACTIONS).generator()

    x = np.array(x0, dtype=float).reshape(sde.state_dim)
    states = np.empty((K + 1, sde.state_dim))
    actions = np.empty((K, sde.actions.dim))
    b0_path = np.empty(K + 1)
    b1_path = np.empty(K + 1)
    y_path = np.empty(K + 1)
    states[0] = x
    acc = 0.0

    for k in range(K):
        t = pts[k]
        decay = discount_factor(aug.reward.delta, t - t0)
        b1 = b1_init * decay
        b0 = b0_init + b1_init * acc
        y_path[k], b0_path[k], b1_path[k] = acc, b0, b1

        a = np.asarray(policy.sample(t, x, b0, b1, action_rng), dtype=float).reshape(
            sde.actions.dim
        )
        actions[k] = a
        acc = acc + decay * aug.reward.running(t, x, a) * dt
        x = euler_step(sde, t, x, a, dt, increments[k])
        if not np.all(np.isfinite(x)):
            raise TrajectoryDivergenceError("augmented state became non-finite", step=k)
        states[k + 1] = x

    y_path[K] = acc
    b1_path[K] = b1_init * discount_factor(aug.reward.delta, pts[K] - t0)
    b0_path[K] = b0_init + b1_init * acc
    return AugmentedTrajectory(
        grid=grid,
        states=states,
        b0=b0_path,
        b1=b1_path,
        y=y_path,
        actions=actions,
        increments=increments,
    )
