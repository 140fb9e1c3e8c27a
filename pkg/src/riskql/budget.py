"""Recovering the original problem from its augmented solution.

The augmented problem solves for J*(t, x, b0, b1) on the extended state; the
original risk-sensitive value is a scalar optimization on top of it,

    J0*(t, x) = max_b { b + J*(t, x, -b, 1) },

and the original optimal policy is the augmented one driven along the
deterministic bookkeeping path (b0, b1) = (Y_s - b*, e^{-delta (s-t)}).  This
module provides the budget search, the value read-out, and the lifted policy
plus its simulator.

The simulator here and :func:`riskql.augmentation.simulate_augmented` are
required to produce bit-identical base-state paths when fed the same noise
and action generators.  Both therefore share :func:`discount_factor`, the
left-endpoint reward quadrature in the same association order, and the same
Euler step call; do not "simplify" the arithmetic in one without the other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._optim import maximize_scalar
from .augmentation import AugmentedPolicy, RewardSpec, discount_factor
from .engine import ControlledSde, TimeGrid, brownian_increments, euler_step
from .errors import TrajectoryDivergenceError
from .qlearning import ParametricFunctionFamily
from .streams import ACTIONS, BROWNIAN, RandomStream

__all__ = [
    "LiftedPolicy",
    "LiftedTrajectory",
    "optimal_budget",
    "optimal_value",
    "lift_policy",
    "simulate_lifted",
]

_BRACKET = (-1.0, 1.0)
_MAX_ABS_BUDGET = 1.0e6


def optimal_budget(
    jstar: ParametricFunctionFamily,
    t: float,
    x: float,
    tol: float = 1e-8,
) -> float:
    """Maximize g(b) = b + jstar(t, x, -b, 1) over the budget b.

    The bracket starts at [-1, 1] and doubles outward while the maximum sits
    on an edge; golden section then refines to width ``tol``.  A flat
    objective (constant to within ``tol``, the case for translation-invariant
    utilities whose value absorbs b exactly) returns 0.0 by convention.

    Raises :class:`~riskql.errors.UnboundedObjectiveError` when g is still
    increasing at |b| = 1e6, which signals a value family that is not concave
    in b0 or has the wrong sign convention.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")

    def g(b: float) -> float:
        return b + float(jstar.value(t, x, -b, 1.0))

    result = maximize_scalar(
        g, _BRACKET[0], _BRACKET[1], tol=tol, max_abs=_MAX_ABS_BUDGET, flat_tol=tol
    )
    if result.flat:
        return 0.0
    return result.x


def optimal_value(jstar: ParametricFunctionFamily, t: float, x: float, b_star: float) -> float:
    """Original-problem value b* + jstar(t, x, -b*, 1)."""
    return b_star + float(jstar.value(t, x, -b_star, 1.0))


@dataclass(frozen=True)
class LiftedPolicy:
    """Base-state policy obtained by pinning the budget in an augmented policy.

    The policy itself is stateless: the discounted cumulative reward ``y`` is
    owned by whoever simulates (see :func:`simulate_lifted`) and passed in per
    call, so one policy object can drive any number of concurrent
    trajectories.
    """

    augmented: AugmentedPolicy
    b_star: float
    reward: RewardSpec
    start_time: float = 0.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.b_star):
            raise ValueError(f"b_star must be finite, got {self.b_star}")

    def bookkeeping(self, s: float, y: float) -> tuple[float, float]:
        """(b0, b1) the augmented policy sees at time s given cumulative reward y."""
        b0 = y - self.b_star
        b1 = discount_factor(self.reward.delta, s - self.start_time)
        return b0, b1

    def sample(self, s: float, x: np.ndarray, y: float, rng: np.random.Generator) -> np.ndarray:
        b0, b1 = self.bookkeeping(s, y)
        return self.augmented.sample(s, x, b0, b1, rng)


def lift_policy(
    pi_aug: AugmentedPolicy,
    b_star: float,
    reward: RewardSpec,
    t: float = 0.0,
) -> LiftedPolicy:
    """Wrap an augmented policy as a base-state policy anchored at time t."""
    return LiftedPolicy(augmented=pi_aug, b_star=b_star, reward=reward, start_time=t)


@dataclass(frozen=True)
class LiftedTrajectory:
    """One base episode under a lifted policy, with its reward path ``y``."""

    grid: TimeGrid
    states: np.ndarray  # (K+1, d)
    y: np.ndarray  # (K+1,)
    actions: np.ndarray  # (K, m)
    increments: np.ndarray  # (K, n)


def simulate_lifted(
    sde: ControlledSde,
    policy: LiftedPolicy,
    grid: TimeGrid,
    x0: np.ndarray,
    stream: RandomStream | None = None,
    episode: int = 0,
    increments: np.ndarray | None = None,
    action_rng: np.random.Generator | None = None,
) -> LiftedTrajectory:
    """Roll out the base SDE under a lifted policy, tracking y online.

    The grid must start at the policy's anchor time: y and the discount both
    measure elapsed time from there, and allowing a mismatch would silently
    change what (b0, b1) the augmented policy is evaluated at.

    With ``increments``/``action_rng`` shared, the returned ``states`` equal
    those of ``simulate_augmented`` started at (x0, -b_star, 1) exactly, not
    just approximately; tests pin that equality bitwise.
    """
    pts = grid.points
    if pts[0] != policy.start_time:
        raise ValueError(
            f"grid starts at {pts[0]}, but the policy was lifted at t={policy.start_time}"
        )
    K = grid.num_steps
    dt = grid.dt
    t0 = pts[0]
    delta = policy.reward.delta

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
    y_path = np.empty(K + 1)
    states[0] = x
    acc = 0.0

    for k in range(K):
        t = pts[k]
        decay = discount_factor(delta, t - t0)
        y_path[k] = acc
        a = np.asarray(policy.sample(t, x, acc, action_rng), dtype=float).reshape(
            sde.actions.dim
        )
        actions[k] = a
        acc = acc + decay * policy.reward.running(t, x, a) * dt
        x = euler_step(sde, t, x, a, dt, increments[k])
        if not np.all(np.isfinite(x)):
            raise TrajectoryDivergenceError("lifted state became non-finite", step=k)
        states[k + 1] = x

    y_path[K] = acc
    return LiftedTrajectory(
        grid=grid, states=states, y=y_path, actions=actions, increments=increments
    )
