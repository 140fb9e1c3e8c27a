"""One-dimensional maximization used by the OCE estimator and the budget search.

The contract in both call sites is the same: expand the initial bracket by
doubling outward while the running argmax sits at an edge, then golden-section
down to a requested width.  Flat objectives are flagged so callers can apply
their documented tie-break rules.  Objectives are concave in every use here,
which keeps both phases well defined.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .errors import UnboundedObjectiveError

__all__ = ["ScalarMaxResult", "golden_section_max", "expand_bracket", "maximize_scalar"]

_INVPHI = 0.6180339887498949  # 1/phi
_INVPHI2 = 0.3819660112501051  # 1/phi^2


@dataclass(frozen=True)
class ScalarMaxResult:
    x: float
    value: float
    iterations: int
    bracket: tuple[float, float]
    flat: bool


def expand_bracket(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    max_abs: float,
) -> tuple[float, float, int]:
    """Double [lo, hi] outward until the argmax is interior.

    Probes lo, mid, hi; while an edge strictly dominates the midpoint the
    bracket is doubled in that direction, stopping with
    :class:`UnboundedObjectiveError` once the edge passes ``max_abs`` while
    still dominating.
    """
    if not lo <= hi:
        raise ValueError(f"empty bracket [{lo}, {hi}]")
    lo, hi = float(lo), float(hi)
    if lo == hi:
        return lo, hi, 0
    mid = 0.5 * (lo + hi)
    f_lo, f_mid, f_hi = f(lo), f(mid), f(hi)
    steps = 0
    while True:
        width = hi - lo
        if f_hi > f_mid and f_hi >= f_lo:
            if hi >= max_abs:
                raise UnboundedObjectiveError(
                    f"objective still increasing at upper bracket edge {hi:g}"
                )
            lo, f_lo = mid, f_mid
            mid, f_mid = hi, f_hi
            hi = min(hi + width, max_abs)
            f_hi = f(hi)
        elif f_lo > f_mid and f_lo > f_hi:
            if lo <= -max_abs:
                raise UnboundedObjectiveError(
                    f"objective still increasing at lower bracket edge {lo:g}"
                )
            hi, f_hi = mid, f_mid
            mid, f_mid = lo, f_lo
            lo = max(lo - width, -max_abs)
            f_lo = f(lo)
        else:
            return lo, hi, steps
        steps += 1


def golden_section_max(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float,
    flat_tol: float = 0.0,
) -> ScalarMaxResult:
    """Golden-section maximization of a unimodal f on [lo, hi].

    ``flat`` is reported when the four initial probes agree to within
    ``flat_tol``, the callers' signal for a constant objective.
    """
    if not lo <= hi:
        raise ValueError(f"empty bracket [{lo}, {hi}]")
    a, b = float(lo), float(hi)
    h = b - a
    if h <= tol:
        x = 0.5 * (a + b)
        return ScalarMaxResult(x, f(x), 0, (a, b), False)

    c = a + _INVPHI2 * h
    d = a + _INVPHI * h
    fc, fd = f(c), f(d)
    probes = (f(a), fc, fd, f(b))
    flat = max(probes) - min(probes) <= flat_tol

    iterations = 0
    while h > tol:
        prev = h
        if fc >= fd:
            b, d, fd = d, c, fc
            h = b - a
            c = a + _INVPHI2 * h
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            h = b - a
            d = a + _INVPHI * h
            fd = f(d)
        iterations += 1
        if h >= prev:
            # The width is pinned at the floating-point grain of the edges
            # (possible whenever tol is below one ulp of a or b); a tighter
            # interval does not exist, so stop instead of spinning.
            break

    x = 0.5 * (a + b)
    return ScalarMaxResult(x, f(x), iterations, (a, b), flat)


def maximize_scalar(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float,
    max_abs: float,
    flat_tol: float = 0.0,
) -> ScalarMaxResult:
    """Bracket expansion followed by golden-section refinement."""
    lo, hi, steps = expand_bracket(f, lo, hi, max_abs)
    result = golden_section_max(f, lo, hi, tol, flat_tol=flat_tol)
    return ScalarMaxResult(
        result.x, result.value, result.iterations + steps, result.bracket, result.flat
    )
