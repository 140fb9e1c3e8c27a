"""Euler-Maruyama simulation of controlled SDEs on a fixed time mesh.

The engine is deliberately minimal: explicit Euler only, uniform meshes by
default, immutable inputs, and reproducible randomness via
:class:`~riskql.streams.RandomStream`.  Action draws and Brownian draws come
from separate substreams so that changing the policy never shifts the driving
noise of a trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol, runtime_checkable

import numpy as np

from .errors import NumericDomainError, TrajectoryDivergenceError
from .streams import ACTIONS, BROWNIAN, RandomStream

__all__ = [
    "TimeGrid",
    "ActionSpace",
    "ControlledSde",
    "Trajectory",
    "Policy",
    "ConstantPolicy",
    "brownian_increments",
    "euler_step",
    "simulate",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform mesh t_0 < t_1 < ... < t_K on [start, horizon].

    Points are computed as ``start + k * dt`` with ``dt = (horizon - start)/K``
    rather than by repeated addition, so ``points[-1]`` lands on the horizon
    without floating-point drift.
    """

    start: float
    horizon: float
    num_steps: int

    def __post_init__(self) -> None:
        if self.num_steps < 1 or int(self.num_steps) != self.num_steps:
            raise ValueError(f"num_steps must be a positive integer, got {self.num_steps}")
        if not self.horizon > self.start:
            raise ValueError(f"horizon {self.horizon} must exceed start {self.start}")

    @property
    def dt(self) -> float:
        return (self.horizon - self.start) / self.num_steps

    @property
    def points(self) -> np.ndarray:
        k = np.arange(self.num_steps + 1, dtype=np.float64)
        pts = self.start + k * self.dt
        pts[-1] = self.horizon
        return pts


@dataclass(frozen=True)
class ActionSpace:
    """Descriptor of the admissible action set for scalar or vector actions.

    ``lower``/``upper`` of None means unbounded on that side.  The engine does
    not clip; the descriptor exists so samplers (e.g. the Gibbs policy) know
    whether a normalizable density needs a bounded range.
    """

    dim: int = 1
    lower: float | None = None
    upper: float | None = None

    @property
    def bounded(self) -> bool:
        return self.lower is not None and self.upper is not None

    def __post_init__(self) -> None:
        if self.bounded and not self.lower < self.upper:  # type: ignore[operator]
            raise ValueError(f"empty action interval [{self.lower}, {self.upper}]")


@dataclass(frozen=True)
class ControlledSde:
    """dX = drift(t, x, a) dt + diffusion(t, x, a) dW.

    drift returns a length-d vector and diffusion a d x n matrix; both must be
    total functions of their declared domain and never mutate their inputs.
    """

    state_dim: int
    noise_dim: int
    drift: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    diffusion: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    actions: ActionSpace = field(default_factory=ActionSpace)


@dataclass(frozen=True)
class Trajectory:
    grid: TimeGrid
    states: np.ndarray  # (K+1, d)
    actions: np.ndarray  # (K, m)
    increments: np.ndarray  # (K, n)

    def __post_init__(self) -> None:
        k = self.grid.num_steps
        if self.states.shape[0] != k + 1 or self.actions.shape[0] != k or self.increments.shape[0] != k:
            raise ValueError("trajectory arrays inconsistent with grid")


@runtime_checkable
class Policy(Protocol):
    """Sampling rule (t, state, generator) -> action vector.

    Deterministic policies simply ignore the generator; they must still accept
    it so simulate can keep action and noise substreams aligned.
    """

    def sample(self, t: float, x: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...


@dataclass(frozen=True)
class ConstantPolicy:
    action: float

    def sample(self, t: float, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return np.array([self.action], dtype=np.float64)


def brownian_increments(stream: RandomStream, num_steps: int, dt: float, noise_dim: int) -> np.ndarray:
    """K x n array of independent Normal(0, dt) draws, deterministic in stream."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if num_steps < 1:
        raise ValueError(f"num_steps must be positive, got {num_steps}")
    gen = stream.generator()
    return gen.standard_normal((num_steps, noise_dim)) * np.sqrt(dt)


def euler_step(
    sde: ControlledSde,
    t: float,
    x: np.ndarray,
    a: np.ndarray,
    dt: float,
    dw: np.ndarray,
) -> np.ndarray:
    """One explicit Euler-Maruyama step: x + mu*dt + sigma @ dW."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    mu = np.asarray(sde.drift(t, x, a), dtype=np.float64)
    if not np.all(np.isfinite(mu)):
        raise NumericDomainError(f"non-finite value at t={t}", component="drift")
    sigma = np.asarray(sde.diffusion(t, x, a), dtype=np.float64)
    if not np.all(np.isfinite(sigma)):
        raise NumericDomainError(f"non-finite value at t={t}", component="diffusion")
    return x + mu * dt + sigma.reshape(sde.state_dim, sde.noise_dim) @ dw


def simulate(
    sde: ControlledSde,
    policy: Policy,
    grid: TimeGrid,
    x0: np.ndarray,
    stream: RandomStream,
    episode: int = 0,
) -> Trajectory:
    """Simulate one trajectory; the action at step k is drawn before stepping.

    Brownian increments come from the (episode, BROWNIAN) substream and action
    draws from (episode, ACTIONS), so reruns are bitwise reproducible and a
    policy change leaves the noise untouched.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=np.float64)).copy()
    if x.shape != (sde.state_dim,):
        raise ValueError(f"x0 shape {x.shape} does not match state_dim {sde.state_dim}")
    if not np.all(np.isfinite(x)):
        raise NumericDomainError("non-finite initial state", component="x0")

    k_steps = grid.num_steps
    dt = grid.dt
    dw = brownian_increments(stream.episode(episode, BROWNIAN), k_steps, dt, sde.noise_dim)
    action_rng = stream.episode(episode, ACTIONS).generator()
    times = grid.points

    states = np.empty((k_steps + 1, sde.state_dim), dtype=np.float64)
    states[0] = x
    actions: list[np.ndarray] = []

    for k in range(k_steps):
        a = np.atleast_1d(np.asarray(policy.sample(times[k], states[k], action_rng), dtype=np.float64))
        actions.append(a)
        try:
            nxt = euler_step(sde, times[k], states[k], a, dt, dw[k])
        except NumericDomainError as exc:
            raise TrajectoryDivergenceError(str(exc), step=k) from exc
        if not np.all(np.isfinite(nxt)):
            raise TrajectoryDivergenceError("state became non-finite", step=k)
        states[k + 1] = nxt

    return Trajectory(grid=grid, states=states, actions=np.asarray(actions), increments=dw)
