"""Empirical checks for the identities the learner is built on.

Training is only sound if a bundle of identities actually holds: the value/q
pair compensates into a martingale under the behavior policy, the value
solves the market's HJB equation, q equals the generator applied to the
value, the normalized q integrates to zero against its own Gibbs density,
and each family's analytic parameter gradient matches finite differences.
Every function here turns one of those statements into either a number with
an error bar (Monte Carlo statements, reported as z-scores) or a pointwise
residual (PDE and algebraic statements).

The Monte Carlo checks deliberately run the generic scalar simulator and
evaluate the supplied families point by point.  That makes them accept any
family/policy combination at a few milliseconds per episode; callers choose
episode counts accordingly (a few thousand episodes separate a correct pair
from the planted defects used in the test suite).

All martingale statistics use discretized increments
dM_k = J(t_{k+1}, .) - J(t_k, .) - q(t_k, ., a_k) dt and therefore carry an
O(dt) bias; assert on z-scores at moderate episode counts rather than
pushing the episode count until the bias surfaces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .augmentation import AugmentedSde, discount_factor, simulate_augmented
from .engine import TimeGrid, brownian_increments, euler_step
from .errors import GibbsNormalizationError, SingularControlError
from .portfolio import MarketConstants, MarketParams
from .qlearning import GibbsPolicy, ParametricFunctionFamily
from .streams import BROWNIAN, RandomStream

__all__ = [
    "MartingaleReport",
    "ExpansionReport",
    "default_test_functions",
    "martingale_residual",
    "hjb_residual",
    "generator_residual",
    "qdt_expansion_check",
    "q_mean_check",
    "gradient_check",
]

_QUAD_CELLS = 4096

# An adapted test process: evaluated on information available at t_k only.
TestFunction = Callable[[float, np.ndarray, float, float], float]


@dataclass(frozen=True)
class MartingaleReport:
    """Per-test-function orthogonality statistics E[sum_k xi_k dM_k]."""

    names: tuple[str, ...]
    estimates: np.ndarray
    stderrs: np.ndarray
    episodes: int

    @property
    def z_scores(self) -> np.ndarray:
        out = np.empty_like(self.estimates)
        for i, (est, se) in enumerate(zip(self.estimates, self.stderrs)):
            if se > 0.0:
                out[i] = est / se
            else:
                out[i] = 0.0 if est == 0.0 else math.copysign(math.inf, est)
        return out

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z_scores)))

    def rows(self):
        """(name, estimate, stderr, z) per test function, report order."""
        return list(zip(self.names, self.estimates, self.stderrs, self.z_scores))


def default_test_functions(jfam) -> tuple[tuple[str, TestFunction], ...]:
    """The adapted set {1, t, X, B0, J}: cheap and spanning what the
    training gradients correlate the increments against."""
    return (
        ("one", lambda t, x, b0, b1: 1.0),
        ("time", lambda t, x, b0, b1: t),
        ("state", lambda t, x, b0, b1: float(x[0])),
        ("reward_acc", lambda t, x, b0, b1: b0),
        ("value", lambda t, x, b0, b1: float(jfam.value(t, x, b0, b1))),
    )


def martingale_residual(
    jfam,
    qfam,
    policy,
    env: AugmentedSde,
    grid: TimeGrid,
    x0,
    episodes: int,
    stream: RandomStream,
    test_functions: Sequence[tuple[str, TestFunction]] | None = None,
    b0_init: float = 0.0,
    b1_init: float = 1.0,
) -> MartingaleReport:
    """Estimate E[sum_k xi(t_k) dM_k] for each test process xi.

    dM_k uses the supplied pair (jfam, qfam); the trajectories come from
    ``policy``, which does not have to be the pair's own policy — the
    compensated process is a martingale under any behavior policy exactly
    when q is the generator of J, so foreign policies are a feature, not an
    error.  Base-state policies must be wrapped
    (:class:`riskql.augmentation.StateOnlyPolicy`) first.
    """
    if episodes < 2:
        raise ValueError("need at least 2 episodes for a standard error")
    pts = grid.points
    dt = grid.dt
    K = grid.num_steps
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))

    builtin = test_functions is None
    tfs = default_test_functions(jfam) if builtin else tuple(test_functions)
    names = tuple(name for name, _ in tfs)
    sums = np.empty((episodes, len(tfs)))

    for j in range(episodes):
        traj = simulate_augmented(
            env, policy, grid, x0, b0_init, b1_init, stream=stream, episode=j
        )
        states, b0p, b1p, acts = traj.states, traj.b0, traj.b1, traj.actions
        jpath = np.array(
            [jfam.value(pts[k], states[k], b0p[k], b1p[k]) for k in range(K + 1)]
        )
        qpath = np.array(
            [qfam.value(pts[k], states[k], b0p[k], b1p[k], acts[k]) for k in range(K)]
        )
        dm = jpath[1:] - jpath[:-1] - qpath * dt
        if builtin:
            xi = np.stack(
                [np.ones(K), pts[:K], states[:K, 0], b0p[:K], jpath[:K]]
            )
        else:
            xi = np.array(
                [[fn(pts[k], states[k], b0p[k], b1p[k]) for k in range(K)] for _, fn in tfs]
            )
        sums[j] = xi @ dm

    estimates = sums.mean(axis=0)
    stderrs = sums.std(axis=0, ddof=1) / math.sqrt(episodes)
    return MartingaleReport(
        names=names, estimates=estimates, stderrs=stderrs, episodes=episodes
    )


def _value_derivatives(
    jfam, t: float, x: float, b0: float, b1: float, h1: float, h2: float, force_fd: bool
) -> tuple[float, float, float]:
    """(dJ/dt, dJ/dx, d2J/dx2), analytic when the family provides them."""
    if not force_fd and hasattr(jfam, "derivatives"):
        return jfam.derivatives(t, x, b0, b1)
    st = h1 * max(1.0, abs(t))
    sx = h1 * max(1.0, abs(x))
    sxx = h2 * max(1.0, abs(x))
    dj_dt = (jfam.value(t + st, x, b0, b1) - jfam.value(t - st, x, b0, b1)) / (2.0 * st)
    dj_dx = (jfam.value(t, x + sx, b0, b1) - jfam.value(t, x - sx, b0, b1)) / (2.0 * sx)
    dj_dxx = (
        jfam.value(t, x + sxx, b0, b1)
        - 2.0 * jfam.value(t, x, b0, b1)
        + jfam.value(t, x - sxx, b0, b1)
    ) / (sxx * sxx)
    return dj_dt, dj_dx, dj_dxx


def hjb_residual(
    jfam,
    mc: MarketConstants,
    points: Sequence[tuple[float, float, float, float]],
    derivatives: str = "analytic",
    h1: float = 1e-5,
    h2: float = 1e-4,
) -> np.ndarray:
    """Residual of the optimized (sup over actions) equation at each point:

        dJ/dt + Px x dJ/dx + Pxx x^2 d2J/dx2 - Pnl (dJ/dx)^2 / d2J/dx2.

    The three market constants already aggregate the action optimization, so
    this is the tau = 0 equation; entropy-regularized values do not satisfy
    it and should not be asserted against it.  ``derivatives`` selects
    "analytic" (family-provided, falling back to finite differences when the
    family has no accessor) or "fd" (force central differences; expect 1e-4
    truncation-level residuals instead of 1e-8).
    """
    if derivatives not in ("analytic", "fd"):
        raise ValueError(f"derivatives must be 'analytic' or 'fd', got {derivatives!r}")
    out = np.empty(len(points))
    for i, (t, x, b0, b1) in enumerate(points):
        dj_dt, dj_dx, dj_dxx = _value_derivatives(
            jfam, t, x, b0, b1, h1, h2, force_fd=derivatives == "fd"
        )
        if not dj_dxx < 0.0:
            raise SingularControlError(
                f"d2J/dx2 = {dj_dxx:g} at (t={t:g}, x={x:g}); the optimized "
                "equation divides by it and needs strict concavity"
            )
        out[i] = (
            dj_dt
            + mc.Px * x * dj_dx
            + mc.Pxx * x * x * dj_dxx
            - mc.Pnl * dj_dx * dj_dx / dj_dxx
        )
    return out


def generator_residual(
    jfam,
    qfam,
    m: MarketParams,
    points: Sequence[tuple[float, float, float, float, float]],
    derivatives: str = "analytic",
    h1: float = 1e-5,
    h2: float = 1e-4,
) -> np.ndarray:
    """Pointwise residual of (generator of J at action a) - q(a).

    The identity q = L^a J is what makes the TD increments mean-zero at any
    action, so it is checked per (t, x, b0, b1, a) point rather than under
    any particular policy.  Wealth dynamics generator:
    L^a J = dJ/dt + x (a r1 + (1-a) r2) dJ/dx
          + 1/2 x^2 (a^2 s1^2 + (1-a)^2 s2^2) d2J/dx2.
    """
    out = np.empty(len(points))
    for i, (t, x, b0, b1, a) in enumerate(points):
        dj_dt, dj_dx, dj_dxx = _value_derivatives(
            jfam, t, x, b0, b1, h1, h2, force_fd=derivatives == "fd"
        )
        drift = x * (a * m.r1 + (1.0 - a) * m.r2)
        var = x * x * (a * a * m.sigma1 * m.sigma1 + (1.0 - a) * (1.0 - a) * m.sigma2 * m.sigma2)
        gen = dj_dt + drift * dj_dx + 0.5 * var * dj_dxx
        out[i] = gen - float(qfam.value(t, x, b0, b1, a))
    return out


@dataclass(frozen=True)
class ExpansionReport:
    """Slopes (Q_dt - J)/dt with their extrapolated dt -> 0 limit."""

    dts: np.ndarray
    slopes: np.ndarray
    stderrs: np.ndarray
    extrapolated: float
    extrapolated_stderr: float
    reference: float

    @property
    def gap(self) -> float:
        return self.extrapolated - self.reference


def qdt_expansion_check(
    jfam,
    qfam,
    env: AugmentedSde,
    t: float,
    x: float,
    b0: float,
    b1: float,
    action: float,
    dt_list: Sequence[float],
    sim_dt: float,
    episodes: int,
    stream: RandomStream,
    antithetic: bool = True,
) -> ExpansionReport:
    """First-order expansion check: (E[J after holding ``action`` for dt] - J)/dt.

    Each dt in the (strictly decreasing) list must be an integer multiple of
    ``sim_dt``.  The limit of the slopes is the generator at the held
    action, i.e. q(t, x, b0, b1, action); the report carries a weighted
    linear-in-dt extrapolation and compares it against the q-family.

    Variance control: one Brownian draw per episode covers the largest dt,
    and every smaller dt reuses its leading rows, so the slope curve is
    evaluated on common noise and its shape is far tighter than the
    individual levels.  Antithetic pairing (on by default) additionally
    mirrors the draw and averages, cancelling the O(sqrt(dt)) term for
    values smooth in x.  Because the per-dt slopes share noise, the dt -> 0
    extrapolation is done per episode (ordinary least-squares intercept, a
    fixed linear combination of the slopes) and its standard error taken
    across episodes, which stays valid under that correlation.
    """
    if episodes < 2:
        raise ValueError("need at least 2 episodes for a standard error")
    dts = [float(d) for d in dt_list]
    if any(d2 >= d1 for d1, d2 in zip(dts, dts[1:])):
        raise ValueError(f"dt_list must be strictly decreasing, got {dts}")
    steps = []
    for d in dts:
        m_steps = round(d / sim_dt)
        if m_steps < 1 or abs(m_steps * sim_dt - d) > 1e-9 * d:
            raise ValueError(f"dt {d} is not a positive multiple of sim_dt {sim_dt}")
        steps.append(m_steps)

    sde = env.base
    delta = env.reward.delta
    a_vec = np.array([float(action)])
    j0 = float(jfam.value(t, np.array([x]), b0, b1))
    max_steps = steps[0]
    by_steps = {m_steps: i for i, m_steps in enumerate(steps)}

    slope_samples = np.empty((episodes, len(dts)))
    for j in range(episodes):
        dw = brownian_increments(stream.episode(j, BROWNIAN), max_steps, sim_dt, sde.noise_dim)
        ends = np.zeros(len(dts))
        signs = (1.0, -1.0) if antithetic else (1.0,)
        for sign in signs:
            xs = np.array([x])
            acc = 0.0
            for k in range(max_steps):
                tk = t + k * sim_dt
                decay = discount_factor(delta, tk - t)
                acc = acc + decay * env.reward.running(tk, xs, a_vec) * sim_dt
                xs = euler_step(sde, tk, xs, a_vec, sim_dt, sign * dw[k])
                i = by_steps.get(k + 1)
                if i is not None:
                    d = dts[i]
                    b1_end = b1 * discount_factor(delta, d)
                    b0_end = b0 + b1 * acc
                    ends[i] += float(jfam.value(t + d, xs, b0_end, b1_end))
        slope_samples[j] = (ends / len(signs) - j0) / np.array(dts)

    slopes = slope_samples.mean(axis=0)
    stderrs = slope_samples.std(axis=0, ddof=1) / math.sqrt(episodes)

    if len(dts) >= 2:
        design = np.column_stack([np.array(dts), np.ones(len(dts))])
        # intercept row of the OLS hat matrix: extrapolation as a fixed
        # linear combination of the per-episode slopes
        weights = np.linalg.solve(design.T @ design, design.T)[1]
        extrap_samples = slope_samples @ weights
        extrapolated = float(extrap_samples.mean())
        extrapolated_se = float(extrap_samples.std(ddof=1) / math.sqrt(episodes))
    else:
        extrapolated = float(slopes[0])
        extrapolated_se = float(stderrs[0])

    reference = float(qfam.value(t, np.array([x]), b0, b1, float(action)))
    return ExpansionReport(
        dts=np.array(dts),
        slopes=slopes,
        stderrs=stderrs,
        extrapolated=extrapolated,
        extrapolated_stderr=extrapolated_se,
        reference=reference,
    )


def q_mean_check(
    q_fn: Callable[[float], float],
    policy: GibbsPolicy,
    tau: float,
    t: float,
    x,
    b0: float,
    b1: float,
) -> float:
    """Residual of the mean identity: integral of (q - tau b1 log pi) d pi.

    For a q normalized against its own Gibbs density the residual is zero;
    for an unnormalized q it returns tau*b1*log Z, so it doubles as a
    measurement of the missing normalizer.  ``q_fn`` must share the
    quadratic structure of ``policy.q`` (the contract of
    :func:`riskql.qlearning.normalize_q`, whose output differs from the raw
    family by an action-independent shift only).
    """
    if policy.q.quadratic_in_action and not policy.actions.bounded:
        mean, std = policy.gaussian_parameters(t, x, b0, b1)
        kappa = policy.q.action_curvature(t, x, b0, b1)
        e_q = q_fn(mean) + kappa * std * std
        e_log_pi = -(math.log(std) + 0.5 * math.log(2.0 * math.pi)) - 0.5
        return e_q - tau * b1 * e_log_pi
    if not policy.actions.bounded:
        raise GibbsNormalizationError(
            "mean identity needs quadratic action structure or a bounded range"
        )
    lo, hi = policy.actions.lower, policy.actions.upper
    width = (hi - lo) / _QUAD_CELLS
    mids = lo + (np.arange(_QUAD_CELLS) + 0.5) * width
    qv = np.array([q_fn(a) for a in mids], dtype=float)
    logw = qv / (tau * b1)
    m = logw.max()
    log_z = m + math.log(np.exp(logw - m).sum() * width)
    log_pi = logw - log_z
    pi = np.exp(log_pi)
    return float(np.sum((qv - tau * b1 * log_pi) * pi) * width)


def gradient_check(
    family: ParametricFunctionFamily,
    points: Sequence[tuple],
    h: float = 1e-6,
) -> float:
    """Max over points and parameters of |analytic - central FD| / (1 + |analytic|).

    The step is ``h`` scaled by each parameter's magnitude (floored at 1).
    The family's parameters are restored afterwards even if evaluation
    raises.
    """
    if not h > 0.0:
        raise ValueError("h must be positive")
    saved = family.params
    worst = 0.0
    try:
        for point in points:
            analytic = family.param_gradient(*point)
            for i in range(family.n_params):
                step = h * max(1.0, abs(saved[i]))
                bumped = saved.copy()
                bumped[i] = saved[i] + step
                family.params = bumped
                f_plus = family.value(*point)
                bumped[i] = saved[i] - step
                family.params = bumped
                f_minus = family.value(*point)
                family.params = saved
                fd = (f_plus - f_minus) / (2.0 * step)
                err = abs(analytic[i] - fd) / (1.0 + abs(analytic[i]))
                if err > worst:
                    worst = err
    finally:
        family.params = saved
    return worst
