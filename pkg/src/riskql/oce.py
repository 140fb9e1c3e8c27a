"""Optimized certainty equivalents: utility functions and the variational program.

A risk measure in this family is defined by a concave utility ``phi`` through

    U(W) = sup over eta of { eta + E[phi(W - eta)] },

evaluated here on empirical samples.  The module ships the standard utility
catalogue (linear, exponential, power, logarithm, CVaR, mean-variance,
monotone mean-variance) plus a custom escape hatch, a sample-based estimator
``oce_estimate`` for the supremum above, and ``oce_closed_form`` with the
textbook plug-in formulas for the kinds that have one.

Two catalogue entries need care.  The power and logarithm utilities are
defined through an inner infimum over a scale parameter delta; that infimum
is attained only in the limit at a bracket edge, and the resulting piecewise
utility does not reproduce the certainty-equivalent formulas usually quoted
for those kinds.  For power and logarithm, ``oce_closed_form`` is therefore
the authoritative value and ``oce_estimate`` is a diagnostic.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._optim import maximize_scalar
from .errors import NumericDomainError, UnsupportedKindError

__all__ = [
    "KINDS",
    "UtilityFunction",
    "OceEstimate",
    "utility_eval",
    "oce_estimate",
    "oce_closed_form",
    "expected_shortfall",
]

KINDS = (
    "linear",
    "exponential",
    "power",
    "logarithm",
    "cvar",
    "mean_variance",
    "monotone_mean_variance",
    "custom",
)

# Default width tolerance on eta for the variational program.
DEFAULT_TOL = 1e-9

# Exponent range probed by the inner infimum over delta (log-spaced grid).
_DELTA_LOG_RANGE = (-16.0, 8.0)
_DELTA_GRID_POINTS = 49


@dataclass(frozen=True)
class UtilityFunction:
    """A concave utility ``phi`` with phi(0) = 0 for the built-in kinds.

    Use the classmethod constructors rather than filling fields by hand;
    they validate parameter ranges and run the zero-at-zero check.  The one
    deliberate exception is ``monotone_mean_variance``, whose standard form
    min{1, t} - (beta/2) max{1, t}^2 takes the value -beta/2 at zero; it is
    kept as printed rather than recentred, and the check skips it.
    """

    kind: str
    alpha: float | None = None
    beta: float | None = None
    gamma: float | None = None
    phi: Callable[[float], float] | None = None
    domain: tuple[float, float] = (-math.inf, math.inf)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise UnsupportedKindError(
                f"unknown utility kind {self.kind!r}; expected one of {KINDS}"
            )
        if self.kind == "exponential" and not (self.alpha is not None and self.alpha > 0):
            raise ValueError("exponential utility requires alpha > 0")
        if self.kind == "power" and not (self.gamma is not None and 0 < self.gamma < 1):
            raise ValueError("power utility requires gamma in (0, 1)")
        if self.kind == "cvar" and not (self.beta is not None and 0 < self.beta <= 1):
            raise ValueError("cvar requires beta in (0, 1]")
        if self.kind in ("mean_variance", "monotone_mean_variance") and not (
            self.beta is not None and self.beta > 0
        ):
            raise ValueError(f"{self.kind} requires beta > 0")
        if self.kind == "custom":
            if self.phi is None:
                raise ValueError("custom utility requires a phi callable")
            lo, hi = self.domain
            if not lo < hi:
                raise ValueError(f"empty custom domain ({lo}, {hi})")
        elif self.kind != "monotone_mean_variance":
            at_zero = utility_eval(self, 0.0)
            if abs(at_zero) > 1e-12:
                raise ValueError(
                    f"built-in utility {self.kind!r} evaluated to {at_zero:g} at 0"
                )

    # -- constructors ------------------------------------------------------

    @classmethod
    def linear(cls) -> "UtilityFunction":
        return cls("linear")

    @classmethod
    def exponential(cls, alpha: float) -> "UtilityFunction":
        return cls("exponential", alpha=float(alpha))

    @classmethod
    def power(cls, gamma: float) -> "UtilityFunction":
        return cls("power", gamma=float(gamma))

    @classmethod
    def logarithm(cls) -> "UtilityFunction":
        return cls("logarithm")

    @classmethod
    def cvar(cls, beta: float) -> "UtilityFunction":
        return cls("cvar", beta=float(beta))

    @classmethod
    def mean_variance(cls, beta: float) -> "UtilityFunction":
        return cls("mean_variance", beta=float(beta))

    @classmethod
    def monotone_mean_variance(cls, beta: float) -> "UtilityFunction":
        return cls("monotone_mean_variance", beta=float(beta))

    @classmethod
    def custom(
        cls,
        phi: Callable[[float], float],
        domain: tuple[float, float] = (-math.inf, math.inf),
    ) -> "UtilityFunction":
        return cls("custom", phi=phi, domain=(float(domain[0]), float(domain[1])))

    def __call__(self, t: float) -> float:
        return utility_eval(self, t)


@dataclass(frozen=True)
class OceEstimate:
    """Result of the variational program on a fixed sample set.

    ``value`` equals ``eta_star`` plus the sample mean of phi(W - eta_star),
    up to the optimizer tolerance; ``bracket`` is the final search interval.
    """

    value: float
    eta_star: float
    iterations: int
    bracket: tuple[float, float]


def _inner_infimum(objective: Callable[[float], float], edge: float) -> float:
    """Numerically minimize over delta in (edge, infinity).

    Probes a log-spaced grid of offsets above ``edge`` and refines around the
    best point with golden section.  The infima arising here sit at a bracket
    edge and are approached, not attained, so the returned value is accurate
    only to roughly the grid's smallest offset raised to the utility's
    curvature exponent; callers treating this as an oracle should prefer the
    closed forms.
    """
    scale = max(1.0, abs(edge))
    lo_exp, hi_exp = _DELTA_LOG_RANGE
    offsets = np.logspace(lo_exp, hi_exp, _DELTA_GRID_POINTS) * scale
    deltas = edge + offsets
    values = np.array([objective(d) for d in deltas])
    j = int(np.nanargmin(values))
    lo = deltas[max(j - 1, 0)]
    hi = deltas[min(j + 1, len(deltas) - 1)]
    # maximize_scalar maximizes, so flip the sign.
    result = maximize_scalar(
        lambda d: -objective(d), lo, hi, tol=1e-12 * scale, max_abs=10.0 * deltas[-1]
    )
    return min(float(values[j]), -result.value)


def _power_phi(gamma: float, t: float) -> float:
    if t == 0.0:
        return 0.0

    def objective(delta: float) -> float:
        # Algebraically delta^g ((delta+t)^(1-g) - delta^(1-g)) / (1-g), but
        # the direct form cancels catastrophically once |t| << delta; the
        # expm1/log1p form stays accurate down to t of a few ulps.
        if delta <= 0.0 or delta + t <= 0.0:
            return math.inf
        return delta * math.expm1((1.0 - gamma) * math.log1p(t / delta)) / (1.0 - gamma)

    return _inner_infimum(objective, max(0.0, -t))


def _log_phi(t: float) -> float:
    if t < 0.0:
        raise NumericDomainError(
            "logarithm utility is unbounded below for negative arguments",
            component="utility",
        )
    if t == 0.0:
        return 0.0

    def objective(delta: float) -> float:
        if delta <= 0.0:
            return math.inf
        return delta * math.log1p(t / delta)

    return _inner_infimum(objective, 0.0)


def utility_eval(u: UtilityFunction, t: float) -> float:
    """Evaluate phi(t) for the given utility.

    Power and logarithm go through the numeric inner infimum over delta; the
    remaining kinds are direct formulas.
    """
    t = float(t)
    kind = u.kind
    if kind == "linear":
        return t
    if kind == "exponential":
        a = u.alpha
        z = -a * t
        if z > 700.0:  # exp would overflow; the true value is below float range
            return -math.inf
        return -math.expm1(z) / a
    if kind == "mean_variance":
        return t - 0.5 * u.beta * t * t
    if kind == "monotone_mean_variance":
        lo = min(1.0, t)
        hi = max(1.0, t)
        return lo - 0.5 * u.beta * hi * hi
    if kind == "cvar":
        return min(0.0, t) / u.beta
    if kind == "power":
        return _power_phi(u.gamma, t)
    if kind == "logarithm":
        return _log_phi(t)
    # custom
    lo, hi = u.domain
    if not lo <= t <= hi:
        raise NumericDomainError(
            f"argument {t:g} outside custom utility domain [{lo:g}, {hi:g}]",
            component="utility",
        )
    return float(u.phi(t))


def _phi_vector(u: UtilityFunction, ts: np.ndarray) -> np.ndarray:
    """phi applied elementwise, mapping domain violations to -inf.

    Inside the variational program a domain violation just means eta has
    left the effective domain of the concave objective, so -inf is the
    correct extended value rather than an error.
    """
    if u.kind == "linear":
        return ts.astype(float)
    if u.kind == "exponential":
        with np.errstate(over="ignore"):
            return -np.expm1(-u.alpha * ts) / u.alpha
    if u.kind == "mean_variance":
        return ts - 0.5 * u.beta * ts * ts
    if u.kind == "monotone_mean_variance":
        return np.minimum(1.0, ts) - 0.5 * u.beta * np.maximum(1.0, ts) ** 2
    if u.kind == "cvar":
        return np.minimum(0.0, ts) / u.beta
    out = np.empty(ts.shape, dtype=float)
    for i, t in enumerate(ts):
        try:
            out[i] = utility_eval(u, float(t))
        except NumericDomainError:
            out[i] = -math.inf
    return out


def _check_samples(samples) -> np.ndarray:
    w = np.asarray(samples, dtype=float).ravel()
    if w.size == 0:
        raise ValueError("need at least one sample")
    if not np.all(np.isfinite(w)):
        raise ValueError("samples must be finite")
    return w


def _concavity_spot_check(g: Callable[[float], float], lo: float, hi: float) -> None:
    """Warn when finite differences of g increase (custom phi only)."""
    if not hi > lo:
        return
    xs = np.linspace(lo, hi, 9)
    vals = np.array([g(float(x)) for x in xs])
    finite = np.isfinite(vals)
    if finite.sum() < 3:
        return
    diffs = np.diff(vals[finite])
    if np.any(np.diff(diffs) > 1e-9 * max(1.0, np.abs(vals[finite]).max())):
        warnings.warn(
            "custom utility produced a non-concave objective; "
            "the maximizer may be local",
            stacklevel=3,
        )


def oce_estimate(u: UtilityFunction, samples, tol: float = DEFAULT_TOL) -> OceEstimate:
    """Maximize g(eta) = eta + mean phi(W - eta) over eta.

    The search starts from the bracket [min W, max W] (which contains a
    maximizer for every built-in kind since phi' crosses 1 there), expands it
    if needed, and refines by golden section to width ``tol``.  Two
    documented tie-breaks: a flat objective returns eta_star = sample mean,
    and for CVaR the maximizer snaps to the empirical quantile when that does
    not lower g.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    w = _check_samples(samples)

    def g(eta: float) -> float:
        return eta + float(np.mean(_phi_vector(u, w - eta)))

    lo = float(w.min())
    hi = float(w.max())
    if u.kind == "custom":
        _concavity_spot_check(g, lo, hi)
    cap = 1e6 * max(1.0, abs(lo), abs(hi))
    result = maximize_scalar(g, lo, hi, tol=tol, max_abs=cap, flat_tol=tol)

    if result.flat:
        eta_star = float(w.mean())
    else:
        eta_star = result.x
    value = g(eta_star)

    if u.kind == "cvar":
        k = math.ceil(u.beta * w.size)
        eta_snap = float(np.partition(w, k - 1)[k - 1])
        snapped = g(eta_snap)
        if snapped >= value:
            eta_star, value = eta_snap, snapped

    return OceEstimate(
        value=value,
        eta_star=eta_star,
        iterations=result.iterations,
        bracket=result.bracket,
    )


def expected_shortfall(w: np.ndarray, beta: float) -> float:
    """Mean of the lowest beta-fraction of w, with fractional tail weight.

    This is the exact optimum of the variational program for the CVaR
    utility on the empirical measure: for m = beta*n, average the k = floor(m)
    smallest values plus weight (m - k) on the next one.
    """
    w = np.sort(np.asarray(w, dtype=float).ravel())
    n = w.size
    m = beta * n
    k = int(math.floor(m))
    if k >= n:
        return float(w.mean())
    total = w[:k].sum() + (m - k) * w[k]
    return float(total / m)


def oce_closed_form(u: UtilityFunction, samples) -> float:
    """Plug-in formula on the empirical distribution, for kinds that have one.

    Monotone mean-variance has no explicit form and is rejected, as is the
    custom kind.  Mean-variance uses the population (divide-by-count)
    variance so it agrees exactly with the variational program on the same
    empirical measure.
    """
    w = _check_samples(samples)
    kind = u.kind
    if kind == "linear":
        return float(w.mean())
    if kind == "exponential":
        # -(1/alpha) log mean exp(-alpha W), stabilized around the max exponent.
        z = -u.alpha * w
        m = float(z.max())
        return -(m + math.log(float(np.mean(np.exp(z - m))))) / u.alpha
    if kind == "power":
        if np.any(w <= 0.0):
            raise NumericDomainError(
                "power certainty equivalent needs strictly positive samples",
                component="oce",
            )
        p = 1.0 - u.gamma
        return float(np.mean(w**p) ** (1.0 / p))
    if kind == "logarithm":
        if np.any(w <= 0.0):
            raise NumericDomainError(
                "logarithm certainty equivalent needs strictly positive samples",
                component="oce",
            )
        return float(np.exp(np.mean(np.log(w))))
    if kind == "cvar":
        return expected_shortfall(w, u.beta)
    if kind == "mean_variance":
        return float(w.mean() - 0.5 * u.beta * w.var())
    raise UnsupportedKindError(f"no explicit certainty-equivalent formula for {kind!r}")
