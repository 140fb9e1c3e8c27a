"""On-policy q-learning for the augmented environment.

The trainer follows the martingale characterization: the parameterized value
function J^theta and q-function q^psi are updated once per episode by
gradient-weighted sums of temporal-difference increments

    delta_k = J(t_{k+1}, .) - J(t_k, .) - q(t_k, ., a_k) * dt,

with actions drawn from the Gibbs policy pi ~ exp{ q / (tau * b1) }.  There
is no explicit entropy term in delta_k; the q-function is supposed to absorb
it through the normalization constraint integral exp{q/(tau b1)} da = 1.

A config flag selects whether delta_k uses the raw q^psi or the normalized
q~ = q - tau*b1*log Z.  The default is raw.  Rationale, worked out on the
portfolio benchmark where everything is closed-form: the reference parameter
values are the zero-temperature optimum, whose q equals the generator of J
pointwise in the action, so raw-q TD increments are mean-zero under any
sampling policy (up to Euler bias).  Subtracting tau*b1*log Z from a q whose
Gibbs density is not normalized shifts every increment by tau*b1*log Z*dt
and the updates pick up a systematic O(tau) drift instead of removing one.
Normalized mode remains available for families that do satisfy the
constraint at their optimum.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .augmentation import AugmentedSde, AugmentedTrajectory, simulate_augmented, terminal_payoff
from .engine import ActionSpace, TimeGrid
from .errors import GibbsNormalizationError, NumericDomainError, TrainingDivergedError
from .streams import RandomStream

__all__ = [
    "ParametricFunctionFamily",
    "GibbsPolicy",
    "TrainingConfig",
    "TrainingLog",
    "gibbs_sample",
    "log_partition",
    "normalize_q",
    "td_delta",
    "episode_update",
    "train",
]

# Cells used by the grid inverse-CDF sampler on bounded action spaces.
_GRID_CELLS = 4096


class ParametricFunctionFamily(ABC):
    """A named-parameter function with analytic parameter gradients.

    Value families take (t, x, b0, b1); q families take (t, x, b0, b1, a).
    ``param_gradient`` must agree with central finite differences of
    ``value`` (diagnostics.gradient_check enforces 1e-5 relative).

    Families that are quadratic in the action with negative curvature set
    ``quadratic_in_action`` and provide the argmax/curvature accessors; the
    Gibbs sampler then uses the exact Gaussian instead of a grid.  The flag
    is declared, never inferred.
    """

    param_names: tuple[str, ...] = ()
    quadratic_in_action: bool = False

    def __init__(self, params: Sequence[float]):
        values = np.asarray(params, dtype=float).copy()
        if values.shape != (len(self.param_names),):
            raise ValueError(
                f"expected {len(self.param_names)} parameters {self.param_names}, "
                f"got shape {values.shape}"
            )
        self._params = values

    @property
    def params(self) -> np.ndarray:
        return self._params.copy()

    @params.setter
    def params(self, values: Sequence[float]) -> None:
        arr = np.asarray(values, dtype=float)
        if arr.shape != self._params.shape:
            raise ValueError(f"parameter shape {arr.shape} != {self._params.shape}")
        self._params = arr.copy()

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    @abstractmethod
    def value(self, *inputs: float) -> float: ...

    @abstractmethod
    def param_gradient(self, *inputs: float) -> np.ndarray: ...

    # Quadratic-action capability (q families only).

    def action_argmax(self, t: float, x: float, b0: float, b1: float) -> float:
        raise NotImplementedError(f"{type(self).__name__} is not quadratic in the action")

    def action_curvature(self, t: float, x: float, b0: float, b1: float) -> float:
        raise NotImplementedError(f"{type(self).__name__} is not quadratic in the action")


@dataclass(frozen=True)
class GibbsPolicy:
    """Samples a ~ exp{ q(t, x, b0, b1, a) / (tau * b1) }.

    Exact Gaussian when the family declares quadratic action structure on an
    unbounded space; otherwise inverse-CDF over a bounded grid.
    """

    q: ParametricFunctionFamily
    tau: float
    actions: ActionSpace = field(default_factory=ActionSpace)

    def __post_init__(self) -> None:
        if not self.tau > 0.0:
            raise ValueError(f"temperature must be positive, got {self.tau}")

    def gaussian_parameters(self, t: float, x, b0: float, b1: float) -> tuple[float, float]:
        """(mean, std) of the exact sampler; only for quadratic families."""
        kappa = self.q.action_curvature(t, x, b0, b1)
        if not kappa < 0.0:
            raise GibbsNormalizationError(
                f"action curvature {kappa:g} is not negative; density not normalizable"
            )
        mean = self.q.action_argmax(t, x, b0, b1)
        return mean, math.sqrt(self.tau * b1 / (2.0 * -kappa))

    def sample(
        self, t: float, x, b0: float, b1: float, rng: np.random.Generator
    ) -> np.ndarray:
        if self.q.quadratic_in_action and not self.actions.bounded:
            mean, std = self.gaussian_parameters(t, x, b0, b1)
            return np.array([mean + std * rng.standard_normal()])
        if not self.actions.bounded:
            raise GibbsNormalizationError(
                "sampling needs a bounded action range or declared quadratic structure"
            )
        lo, hi = self.actions.lower, self.actions.upper
        width = (hi - lo) / _GRID_CELLS
        mids = lo + (np.arange(_GRID_CELLS) + 0.5) * width
        logw = np.array(
            [self.q.value(t, x, b0, b1, a) for a in mids], dtype=float
        ) / (self.tau * b1)
        logw -= logw.max()
        cdf = np.cumsum(np.exp(logw))
        u = rng.random() * cdf[-1]
        i = int(np.searchsorted(cdf, u, side="right"))
        i = min(i, _GRID_CELLS - 1)
        prev = cdf[i - 1] if i > 0 else 0.0
        frac = (u - prev) / (cdf[i] - prev) if cdf[i] > prev else 0.5
        return np.array([lo + (i + frac) * width])


def gibbs_sample(
    policy: GibbsPolicy, t: float, x, b0: float, b1: float, stream: RandomStream
) -> np.ndarray:
    """One action draw using a fresh generator from ``stream``."""
    return policy.sample(t, x, b0, b1, stream.generator())


def log_partition(
    qfam: ParametricFunctionFamily,
    t: float,
    x,
    b0: float,
    b1: float,
    tau: float,
    actions: ActionSpace | None = None,
) -> float:
    """log integral exp{ q(a) / (tau * b1) } da.

    Closed form (Gaussian integral) for quadratic families; log-sum-exp
    quadrature over the declared bounded range otherwise.
    """
    if qfam.quadratic_in_action:
        kappa = qfam.action_curvature(t, x, b0, b1)
        if not kappa < 0.0:
            raise GibbsNormalizationError(
                f"action curvature {kappa:g} is not negative; density not normalizable"
            )
        a0 = qfam.action_argmax(t, x, b0, b1)
        qmax = qfam.value(t, x, b0, b1, a0)
        return qmax / (tau * b1) + 0.5 * math.log(math.pi * tau * b1 / -kappa)
    if actions is None or not actions.bounded:
        raise GibbsNormalizationError(
            "log partition needs quadratic structure or a bounded action range"
        )
    lo, hi = actions.lower, actions.upper
    width = (hi - lo) / _GRID_CELLS
    mids = lo + (np.arange(_GRID_CELLS) + 0.5) * width
    logw = np.array([qfam.value(t, x, b0, b1, a) for a in mids], dtype=float) / (tau * b1)
    m = logw.max()
    return m + math.log(np.exp(logw - m).sum() * width)


def normalize_q(
    qfam: ParametricFunctionFamily,
    t: float,
    x,
    b0: float,
    b1: float,
    tau: float,
    actions: ActionSpace | None = None,
):
    """Return q~(a) = q(a) - tau*b1*log Z, which satisfies the unit-integral
    constraint integral exp{q~/(tau b1)} da = 1 by construction."""
    shift = tau * b1 * log_partition(qfam, t, x, b0, b1, tau, actions)

    def q_tilde(a: float) -> float:
        return qfam.value(t, x, b0, b1, a) - shift

    return q_tilde


def td_delta(j_next: float, j_curr: float, q_curr: float, dt: float) -> float:
    """The martingale increment J_{k+1} - J_k - q_k * dt."""
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    return j_next - j_curr - q_curr * dt


def episode_update(
    traj: AugmentedTrajectory,
    value_family: ParametricFunctionFamily,
    q_family: ParametricFunctionFamily,
    tau: float | None = None,
    normalize: bool = False,
    actions: ActionSpace | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Batch parameter updates for one completed episode.

    Delta_theta = sum_k xi_k * delta_k and Delta_psi = sum_k zeta_k * delta_k
    with xi/zeta the parameter gradients at the visited points and delta_k
    the TD increment; everything is evaluated at the pre-update parameters.
    The test functions are always the raw q^psi gradients; ``normalize``
    only changes the q values entering delta_k.
    """
    if normalize and tau is None:
        raise ValueError("normalized updates need the temperature")
    grid = traj.grid
    dt = grid.dt
    pts = grid.points
    num_steps = grid.num_steps

    d_theta = np.zeros(value_family.n_params)
    d_psi = np.zeros(q_family.n_params)
    j_curr = value_family.value(pts[0], traj.states[0], traj.b0[0], traj.b1[0])
    for k in range(num_steps):
        t, xk, b0, b1 = pts[k], traj.states[k], traj.b0[k], traj.b1[k]
        a = traj.actions[k]
        j_next = value_family.value(pts[k + 1], traj.states[k + 1], traj.b0[k + 1], traj.b1[k + 1])
        q_here = q_family.value(t, xk, b0, b1, a)
        if normalize:
            q_here -= tau * b1 * log_partition(q_family, t, xk, b0, b1, tau, actions)
        delta = td_delta(j_next, j_curr, q_here, dt)
        xi = value_family.param_gradient(t, xk, b0, b1)
        zeta = q_family.param_gradient(t, xk, b0, b1, a)
        if not (np.all(np.isfinite(xi)) and np.all(np.isfinite(zeta))):
            raise NumericDomainError(
                f"non-finite parameter gradient at step {k}", component="episode_update"
            )
        d_theta += xi * delta
        d_psi += zeta * delta
        j_curr = j_next
    return d_theta, d_psi


def _as_schedule(rate, episodes: int) -> np.ndarray:
    arr = np.asarray(rate, dtype=float)
    if arr.ndim == 0:
        arr = np.full(episodes, float(arr))
    if arr.shape != (episodes,):
        raise ValueError(f"learning-rate schedule must be scalar or length {episodes}")
    if not np.all(arr >= 0.0):
        raise ValueError("learning rates must be nonnegative")
    return arr


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters for :func:`train`.

    ``lr_theta``/``lr_psi`` accept a scalar (constant schedule) or one value
    per episode.  ``divergence_bound`` aborts training when any parameter
    leaves [-bound, bound].
    """

    episodes: int
    grid: TimeGrid
    lr_theta: float | np.ndarray = 5e-3
    lr_psi: float | np.ndarray = 5e-3
    tau: float = 0.05
    normalize_q: bool = False
    x0: float | np.ndarray = 1.0
    b0_init: float = 0.0
    b1_init: float = 1.0
    divergence_bound: float = 1e6
    theta_init: np.ndarray | None = None
    psi_init: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.episodes < 1:
            raise ValueError("need at least one episode")
        if not self.tau > 0.0:
            raise ValueError("temperature must be positive")
        if not self.divergence_bound > 0.0:
            raise ValueError("divergence bound must be positive")
        _as_schedule(self.lr_theta, self.episodes)
        _as_schedule(self.lr_psi, self.episodes)


@dataclass(frozen=True)
class TrainingLog:
    """Per-episode record of a training run.

    ``params`` holds the concatenated (theta, psi) snapshot after each
    episode's update; ``terminal_payoff`` is the realized phi(b0 + b1 h(x))
    of the episode that produced the update.
    """

    param_names: tuple[str, ...]
    n_theta: int
    params: np.ndarray  # (N, n_theta + n_psi)
    delta_norm_theta: np.ndarray  # (N,)
    delta_norm_psi: np.ndarray  # (N,)
    terminal_payoff: np.ndarray  # (N,)

    @property
    def episodes(self) -> int:
        return self.params.shape[0]

    @property
    def final_theta(self) -> np.ndarray:
        return self.params[-1, : self.n_theta].copy()

    @property
    def final_psi(self) -> np.ndarray:
        return self.params[-1, self.n_theta :].copy()


def train(
    env: AugmentedSde,
    value_family: ParametricFunctionFamily,
    q_family: ParametricFunctionFamily,
    config: TrainingConfig,
    stream: RandomStream,
) -> TrainingLog:
    """Run the on-policy training loop; families are updated in place.

    Episode j simulates under the Gibbs policy at the current q parameters,
    computes the batch update, applies the learning rates, and logs.  The
    (episode, purpose) substream convention makes runs bitwise reproducible.
    """
    if config.theta_init is not None:
        value_family.params = config.theta_init
    if config.psi_init is not None:
        q_family.params = config.psi_init

    lr_theta = _as_schedule(config.lr_theta, config.episodes)
    lr_psi = _as_schedule(config.lr_psi, config.episodes)
    policy = GibbsPolicy(q=q_family, tau=config.tau, actions=env.actions)
    x0 = np.atleast_1d(np.asarray(config.x0, dtype=float))

    n_theta = value_family.n_params
    snapshots = np.empty((config.episodes, n_theta + q_family.n_params))
    dn_theta = np.empty(config.episodes)
    dn_psi = np.empty(config.episodes)
    payoff = np.empty(config.episodes)

    for j in range(config.episodes):
        traj = simulate_augmented(
            env,
            policy,
            config.grid,
            x0,
            b0_init=config.b0_init,
            b1_init=config.b1_init,
            stream=stream,
            episode=j,
        )
        d_theta, d_psi = episode_update(
            traj,
            value_family,
            q_family,
            tau=config.tau,
            normalize=config.normalize_q,
            actions=env.actions,
        )
        value_family.params = value_family.params + lr_theta[j] * d_theta
        q_family.params = q_family.params + lr_psi[j] * d_psi

        term = traj.terminal_state
        snapshots[j, :n_theta] = value_family.params
        snapshots[j, n_theta:] = q_family.params
        dn_theta[j] = float(np.linalg.norm(d_theta))
        dn_psi[j] = float(np.linalg.norm(d_psi))
        payoff[j] = terminal_payoff(env, term.x, term.b0, term.b1)

        bad = np.abs(snapshots[j]) > config.divergence_bound
        if np.any(bad):
            names = tuple(value_family.param_names) + tuple(q_family.param_names)
            which = [names[i] for i in np.flatnonzero(bad)]
            raise TrainingDivergedError(
                f"parameters {which} left the divergence bound {config.divergence_bound:g}",
                episode=j,
            )

    return TrainingLog(
        param_names=tuple(value_family.param_names) + tuple(q_family.param_names),
        n_theta=n_theta,
        params=snapshots,
        delta_norm_theta=dn_theta,
        delta_norm_psi=dn_psi,
        terminal_payoff=payoff,
    )
