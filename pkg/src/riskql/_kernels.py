"""Compiled hot loops for the portfolio benchmark.

The generic simulator and trainer (engine/augmentation/qlearning) are a few
microseconds per step of Python, which puts a 20,000-episode benchmark run
at hours.  This module specializes the three expensive workloads to the
wealth SDE and the quadratic families:

* ``evaluate_paths``   -- policy rollouts for the evaluation tables/curves
* ``sweep_updates``    -- TD-update statistics at frozen parameters
* ``train_episodes``   -- the full training loop

Two interchangeable backends implement each workload.  The default is numba
(JIT-compiled per-episode loops); ``RISKQL_BACKEND=numpy`` selects plain
numpy, which vectorizes evaluation and sweeps across episodes but runs
training as an ordinary Python loop (correct, roughly two orders of
magnitude slower than numba; fine for small episode counts and as a
fallback where numba is unavailable).

Every arithmetic expression here is written with the same operation order
as the scalar reference path in ``portfolio``/``qlearning``, and episodes
consume the same (episode, purpose) substreams, so results agree with the
generic implementations to round-off and reruns are bitwise reproducible
within a backend.  Time-dependent coefficients are precomputed with
``math.exp`` in the driver (frozen parameters) or recomputed per episode in
the kernel (training), again with the expressions used by the families.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .errors import (
    ConfigError,
    GibbsNormalizationError,
    NumericDomainError,
    SingularControlError,
    TrainingDivergedError,
    TrajectoryDivergenceError,
)
from .oce import UtilityFunction, utility_eval
from .streams import ACTIONS, BROWNIAN, RandomStream

__all__ = ["active_backend", "set_backend", "available_backends"]

_CHUNK = 256

_EVAL_KINDS = {"const": 0, "psi_det": 1, "psi_gibbs": 2}

_backend: str | None = None


def available_backends() -> tuple[str, ...]:
    try:
        import numba  # noqa: F401

        return ("numba", "numpy")
    except ImportError:
        return ("numpy",)


def active_backend() -> str:
    """Resolve the backend once per process (env var RISKQL_BACKEND)."""
    global _backend
    if _backend is None:
        choice = os.environ.get("RISKQL_BACKEND", "").strip().lower()
        if choice not in ("", "numba", "numpy"):
            raise ConfigError(
                f"RISKQL_BACKEND must be 'numba' or 'numpy', got {choice!r}"
            )
        if choice == "numpy":
            _backend = "numpy"
        elif "numba" in available_backends():
            _backend = "numba"
        elif choice == "numba":
            raise ConfigError("RISKQL_BACKEND=numba but numba is not importable")
        else:
            _backend = "numpy"
    return _backend


def set_backend(name: str) -> None:
    """Process-wide backend override, mainly for tests and benchmarks."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ConfigError(f"unknown backend {name!r}")
    if name == "numba" and "numba" not in available_backends():
        raise ConfigError("numba is not importable")
    _backend = name


def _raise_status(status: int, episode: int, step: int) -> None:
    if status == 0:
        return
    if status == 1:
        raise TrainingDivergedError(
            "parameters left the divergence bound", episode=episode
        )
    if status == 2:
        raise GibbsNormalizationError(
            f"action curvature not negative in episode {episode}, step {step}"
        )
    if status == 4:
        raise SingularControlError(f"zero wealth in episode {episode}, step {step}")
    if status == 5:
        raise NumericDomainError(
            f"non-finite parameter update in episode {episode}",
            component="train_episodes",
        )
    raise TrajectoryDivergenceError(
        f"non-finite wealth in episode {episode}", step=step
    )


# ---------------------------------------------------------------------------
# Driver-side precomputation (CPython math.exp, mirroring the families).
# ---------------------------------------------------------------------------


def _psi_coeff_arrays(psi, alpha: float, pts, horizon: float, b0: float, b1: float):
    """c1psi_k, c2psi_k on the grid, as PsiQFamily._pieces computes them."""
    a0, a1, sv, c1e, c2e = (float(v) for v in psi)
    n = len(pts)
    c1p = np.empty(n)
    c2p = np.empty(n)
    for k in range(n):
        u = horizon - pts[k]
        c1p[k] = (1.0 - alpha * b0) * b1 * math.exp(c1e * u)
        c2p[k] = -0.5 * alpha * b1 * b1 * math.exp(c2e * u)
    return c1p, c2p


def _theta_coeff_arrays(theta, alpha: float, pts, horizon: float, b0: float, b1: float):
    """c0/c1/c2 and the two c0 partials on the grid, as ThetaValueFamily does."""
    px, pxx, pnl = (float(v) for v in theta)
    s = pxx + pnl
    base = 1.0 - alpha * b0
    amp = base * base / (2.0 * alpha)
    n = len(pts)
    c0t = np.empty(n)
    c1t = np.empty(n)
    c2t = np.empty(n)
    dxx = np.empty(n)
    dnl = np.empty(n)
    uarr = np.empty(n)
    for k in range(n):
        u = horizon - pts[k]
        uarr[k] = u
        e0 = math.exp(-2.0 * s * u)
        c0t[k] = b0 * (1.0 - 0.5 * alpha * b0) + amp * pnl * (1.0 - e0) / s
        c1t[k] = (1.0 - alpha * b0) * b1 * math.exp((px - 2.0 * pnl) * u)
        c2t[k] = -0.5 * alpha * b1 * b1 * math.exp(2.0 * (px + pxx - pnl) * u)
        dxx[k] = amp * pnl * (2.0 * u * e0 * s - (1.0 - e0)) / (s * s)
        dnl[k] = amp * ((1.0 - e0) * pxx + 2.0 * u * e0 * s * pnl) / (s * s)
    return c0t, c1t, c2t, dxx, dnl, uarr


def _fill_noise(stream: RandomStream, first: int, count: int, num_steps: int, dt: float,
                dw_out: np.ndarray, za_out: np.ndarray | None) -> None:
    root_dt = math.sqrt(dt)
    for i in range(count):
        gw = stream.episode(first + i, BROWNIAN).generator()
        dw_out[i] = gw.standard_normal((num_steps, 2)) * root_dt
        if za_out is not None:
            ga = stream.episode(first + i, ACTIONS).generator()
            za_out[i] = ga.standard_normal(num_steps)


def _first_bad_step(row: np.ndarray) -> int:
    bad = np.flatnonzero(~np.isfinite(row))
    return int(bad[0]) - 1 if bad.size else -1


# ---------------------------------------------------------------------------
# Evaluation rollouts.
# ---------------------------------------------------------------------------


def _eval_chunk_np(kind, const_a, a0, a1, sv, tau, b1c, c1p, c2p,
                   r1, r2, s1, s2, dt, x0, dw, za, paths, terminal):
    count, num_steps = dw.shape[0], dw.shape[1]
    x = np.full(count, x0)
    paths[:, 0] = x
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        for k in range(num_steps):
            if kind == 0:
                a = const_a
            else:
                r = c1p[k] / (2.0 * c2p[k] * x)
                a = a0 - a1 * (1.0 + r)
                if kind == 2:
                    xx = x * x
                    kappa = sv * c2p[k] * xx
                    std = np.sqrt(tau * b1c / (2.0 * -kappa))
                    a = a + std * za[:, k]
            mu_dt = x * (a * r1 + (1.0 - a) * r2) * dt
            diff = x * a * s1 * dw[:, k, 0] + x * (1.0 - a) * s2 * dw[:, k, 1]
            x = x + mu_dt + diff
            paths[:, k + 1] = x
    terminal[:] = x
    bad = np.flatnonzero(~np.isfinite(x))
    if bad.size:
        i = int(bad[0])
        return 3, i, _first_bad_step(paths[i])
    return 0, -1, -1


def _make_eval_chunk_nb():
    from numba import njit

    @njit(cache=True)
    def eval_chunk(kind, const_a, a0, a1, sv, tau, b1c, c1p, c2p,
                   r1, r2, s1, s2, dt, x0, dw, za, paths, terminal):
        count, num_steps = dw.shape[0], dw.shape[1]
        for i in range(count):
            x = x0
            paths[i, 0] = x
            for k in range(num_steps):
                if kind == 0:
                    a = const_a
                else:
                    if x == 0.0:
                        return 4, i, k
                    r = c1p[k] / (2.0 * c2p[k] * x)
                    a = a0 - a1 * (1.0 + r)
                    if kind == 2:
                        xx = x * x
                        kappa = sv * c2p[k] * xx
                        if kappa >= 0.0:
                            return 2, i, k
                        std = math.sqrt(tau * b1c / (2.0 * -kappa))
                        a = a + std * za[i, k]
                mu_dt = x * (a * r1 + (1.0 - a) * r2) * dt
                diff = x * a * s1 * dw[i, k, 0] + x * (1.0 - a) * s2 * dw[i, k, 1]
                x = x + mu_dt + diff
                paths[i, k + 1] = x
                if not math.isfinite(x):
                    return 3, i, k
            terminal[i] = x
        return 0, -1, -1

    return eval_chunk


_nb_cache: dict[str, object] = {}


def _nb(name: str):
    if name not in _nb_cache:
        builders = {
            "eval": _make_eval_chunk_nb,
            "sweep": _make_sweep_chunk_nb,
            "train": _make_train_chunk_nb,
        }
        _nb_cache[name] = builders[name]()
    return _nb_cache[name]


def evaluate_paths(kind: str, const_action: float, psi, tau: float, b0: float,
                   b1: float, m, grid, episodes: int, stream: RandomStream):
    """Roll ``episodes`` wealth paths under one of the known policy shapes.

    Returns (terminal values (N,), per-step sums of x (K+1,), of x^2 (K+1,)).
    """
    kind_code = _EVAL_KINDS[kind]
    num_steps = grid.num_steps
    pts = grid.points
    dt = grid.dt
    if kind_code == 0:
        a0 = a1 = sv = 0.0
        c1p = np.zeros(1)
        c2p = np.zeros(1)
    else:
        if not b1 > 0.0:
            raise ValueError(f"b1 must be positive, got {b1}")
        a0, a1, sv = float(psi[0]), float(psi[1]), float(psi[2])
        c1p, c2p = _psi_coeff_arrays(psi, m.alpha, pts, m.horizon, b0, b1)
        if kind_code == 2 and not sv > 0.0:
            raise GibbsNormalizationError(
                f"psi_sv must be positive for a Gibbs policy, got {sv:g}"
            )

    terminal = np.empty(episodes)
    sum_x = np.zeros(num_steps + 1)
    sum_x2 = np.zeros(num_steps + 1)
    paths = np.empty((_CHUNK, num_steps + 1))
    dw = np.empty((_CHUNK, num_steps, 2))
    # Deterministic action noise is only drawn for the Gibbs kind, matching
    # the generic simulator, which never touches the action generator for
    # deterministic policies.
    za = np.zeros((_CHUNK, num_steps if kind_code == 2 else 1))
    fn = _nb("eval") if active_backend() == "numba" else _eval_chunk_np

    for start in range(0, episodes, _CHUNK):
        count = min(_CHUNK, episodes - start)
        _fill_noise(stream, start, count, num_steps, dt, dw[:count],
                    za[:count] if kind_code == 2 else None)
        status, i, k = fn(
            kind_code, float(const_action), a0, a1, sv, float(tau), float(b1),
            c1p, c2p, m.r1, m.r2, m.sigma1, m.sigma2, dt, m.x0,
            dw[:count], za[:count], paths[:count], terminal[start:start + count],
        )
        _raise_status(status, start + i, k)
        sum_x += paths[:count].sum(axis=0)
        sum_x2 += (paths[:count] * paths[:count]).sum(axis=0)
    return terminal, sum_x, sum_x2


# ---------------------------------------------------------------------------
# TD-update statistics at frozen parameters (stability sweeps).
# ---------------------------------------------------------------------------


def _sweep_chunk_np(a0, a1, sv, tau, b0c, b1c, c1p, c2p, c0t, c1t, c2t, dxx, dnl,
                    uarr, r1, r2, s1, s2, dt, x0, normalize, dw, za, upd):
    count, num_steps = dw.shape[0], dw.shape[1]
    x = np.full(count, x0)
    acc = np.zeros((count, 8))
    jc = c0t[0] + c1t[0] * x + c2t[0] * x * x
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        for k in range(num_steps):
            u = uarr[k]
            r = c1p[k] / (2.0 * c2p[k] * x)
            vertex = a0 - a1 * (1.0 + r)
            xx = x * x
            kappa = sv * c2p[k] * xx
            std = np.sqrt(tau * b1c / (2.0 * -kappa))
            a = vertex + std * za[:, k]
            dev = a - vertex
            q = sv * c2p[k] * xx * dev * dev
            if normalize:
                logz = 0.5 * np.log(math.pi * tau * b1c / -kappa)
                qd = q - tau * b1c * logz
            else:
                qd = q
            mu_dt = x * (a * r1 + (1.0 - a) * r2) * dt
            diff = x * a * s1 * dw[:, k, 0] + x * (1.0 - a) * s2 * dw[:, k, 1]
            xn = x + mu_dt + diff
            jn = c0t[k + 1] + c1t[k + 1] * xn + c2t[k + 1] * xn * xn
            delta = jn - jc - qd * dt
            q2 = 2.0 * sv * c2p[k] * xx * dev
            acc[:, 0] += (c1t[k] * u * x + 2.0 * u * c2t[k] * xx) * delta
            acc[:, 1] += (dxx[k] + 2.0 * u * c2t[k] * xx) * delta
            acc[:, 2] += (dnl[k] - 2.0 * u * c1t[k] * x - 2.0 * u * c2t[k] * xx) * delta
            acc[:, 3] += -q2 * delta
            acc[:, 4] += q2 * (1.0 + r) * delta
            acc[:, 5] += c2p[k] * xx * dev * dev * delta
            acc[:, 6] += q2 * a1 * r * u * delta
            acc[:, 7] += (u * q - q2 * a1 * r * u) * delta
            x = xn
            jc = jn
    upd[:] = acc
    bad = np.flatnonzero(~np.isfinite(acc).all(axis=1))
    if bad.size:
        return 3, int(bad[0]), -1
    return 0, -1, -1


def _make_sweep_chunk_nb():
    from numba import njit

    @njit(cache=True)
    def sweep_chunk(a0, a1, sv, tau, b0c, b1c, c1p, c2p, c0t, c1t, c2t, dxx, dnl,
                    uarr, r1, r2, s1, s2, dt, x0, normalize, dw, za, upd):
        count, num_steps = dw.shape[0], dw.shape[1]
        for i in range(count):
            x = x0
            jc = c0t[0] + c1t[0] * x + c2t[0] * x * x
            d0 = 0.0; d1 = 0.0; d2 = 0.0
            d3 = 0.0; d4 = 0.0; d5 = 0.0; d6 = 0.0; d7 = 0.0
            for k in range(num_steps):
                u = uarr[k]
                if x == 0.0:
                    return 4, i, k
                r = c1p[k] / (2.0 * c2p[k] * x)
                vertex = a0 - a1 * (1.0 + r)
                xx = x * x
                kappa = sv * c2p[k] * xx
                if kappa >= 0.0:
                    return 2, i, k
                std = math.sqrt(tau * b1c / (2.0 * -kappa))
                a = vertex + std * za[i, k]
                dev = a - vertex
                q = sv * c2p[k] * xx * dev * dev
                if normalize:
                    logz = 0.5 * math.log(math.pi * tau * b1c / -kappa)
                    qd = q - tau * b1c * logz
                else:
                    qd = q
                mu_dt = x * (a * r1 + (1.0 - a) * r2) * dt
                diff = x * a * s1 * dw[i, k, 0] + x * (1.0 - a) * s2 * dw[i, k, 1]
                xn = x + mu_dt + diff
                if not math.isfinite(xn):
                    return 3, i, k
                jn = c0t[k + 1] + c1t[k + 1] * xn + c2t[k + 1] * xn * xn
                delta = jn - jc - qd * dt
                q2 = 2.0 * sv * c2p[k] * xx * dev
                d0 = d0 + (c1t[k] * u * x + 2.0 * u * c2t[k] * xx) * delta
                d1 = d1 + (dxx[k] + 2.0 * u * c2t[k] * xx) * delta
                d2 = d2 + (dnl[k] - 2.0 * u * c1t[k] * x - 2.0 * u * c2t[k] * xx) * delta
                d3 = d3 + -q2 * delta
                d4 = d4 + q2 * (1.0 + r) * delta
                d5 = d5 + c2p[k] * xx * dev * dev * delta
                d6 = d6 + q2 * a1 * r * u * delta
                d7 = d7 + (u * q - q2 * a1 * r * u) * delta
                x = xn
                jc = jn
            upd[i, 0] = d0; upd[i, 1] = d1; upd[i, 2] = d2
            upd[i, 3] = d3; upd[i, 4] = d4; upd[i, 5] = d5
            upd[i, 6] = d6; upd[i, 7] = d7
        return 0, -1, -1

    return sweep_chunk


def sweep_updates(theta, psi, m, grid, episodes: int, stream: RandomStream,
                  tau: float, normalize: bool):
    """Mean and standard error of the 8 TD-update components, no learning."""
    if not float(psi[2]) > 0.0:
        raise GibbsNormalizationError(
            f"psi_sv must be positive for a Gibbs policy, got {float(psi[2]):g}"
        )
    num_steps = grid.num_steps
    pts = grid.points
    dt = grid.dt
    b0c, b1c = 0.0, 1.0
    c1p, c2p = _psi_coeff_arrays(psi, m.alpha, pts, m.horizon, b0c, b1c)
    c0t, c1t, c2t, dxx, dnl, uarr = _theta_coeff_arrays(
        theta, m.alpha, pts, m.horizon, b0c, b1c
    )
    a0, a1, sv = float(psi[0]), float(psi[1]), float(psi[2])

    updates = np.empty((episodes, 8))
    dw = np.empty((_CHUNK, num_steps, 2))
    za = np.empty((_CHUNK, num_steps))
    fn = _nb("sweep") if active_backend() == "numba" else _sweep_chunk_np
    for start in range(0, episodes, _CHUNK):
        count = min(_CHUNK, episodes - start)
        _fill_noise(stream, start, count, num_steps, dt, dw[:count], za[:count])
        status, i, k = fn(
            a0, a1, sv, float(tau), b0c, b1c, c1p, c2p, c0t, c1t, c2t, dxx, dnl,
            uarr, m.r1, m.r2, m.sigma1, m.sigma2, dt, m.x0, normalize,
            dw[:count], za[:count], updates[start:start + count],
        )
        _raise_status(status, start + i, k)
    mean = updates.mean(axis=0)
    stderr = updates.std(axis=0, ddof=1) / math.sqrt(episodes)
    return mean, stderr


# ---------------------------------------------------------------------------
# Training.
# ---------------------------------------------------------------------------


def _train_chunk_np(theta, psi, pts, alpha, horizon, b0c, b1c, tau, dt,
                    r1, r2, s1, s2, bound, normalize, x0,
                    dw, za, lrt, lrp, snaps, dnt, dnp, xterm):
    count, num_steps = dw.shape[0], dw.shape[1]
    n = num_steps + 1
    pts_l = pts.tolist()
    for i in range(count):
        px, pxx, pnl = theta[0], theta[1], theta[2]
        a0, a1, sv, c1e, c2e = psi[0], psi[1], psi[2], psi[3], psi[4]
        s = pxx + pnl
        base = 1.0 - alpha * b0c
        amp = base * base / (2.0 * alpha)
        c0t = [0.0] * n
        c1t = [0.0] * n
        c2t = [0.0] * n
        dxxl = [0.0] * n
        dnll = [0.0] * n
        ul = [0.0] * n
        c1pl = [0.0] * n
        c2pl = [0.0] * n
        for k in range(n):
            u = horizon - pts_l[k]
            ul[k] = u
            e0 = math.exp(-2.0 * s * u)
            c0t[k] = b0c * (1.0 - 0.5 * alpha * b0c) + amp * pnl * (1.0 - e0) / s
            c1t[k] = (1.0 - alpha * b0c) * b1c * math.exp((px - 2.0 * pnl) * u)
            c2t[k] = -0.5 * alpha * b1c * b1c * math.exp(2.0 * (px + pxx - pnl) * u)
            dxxl[k] = amp * pnl * (2.0 * u * e0 * s - (1.0 - e0)) / (s * s)
            dnll[k] = amp * ((1.0 - e0) * pxx + 2.0 * u * e0 * s * pnl) / (s * s)
            c1pl[k] = (1.0 - alpha * b0c) * b1c * math.exp(c1e * u)
            c2pl[k] = -0.5 * alpha * b1c * b1c * math.exp(c2e * u)
        dw1 = dw[i, :, 0].tolist()
        dw2 = dw[i, :, 1].tolist()
        zal = za[i].tolist()

        x = x0
        jc = c0t[0] + c1t[0] * x + c2t[0] * x * x
        d0 = d1 = d2 = d3 = d4 = d5 = d6 = d7 = 0.0
        for k in range(num_steps):
            u = ul[k]
            if x == 0.0:
                return 4, i, k
            r = c1pl[k] / (2.0 * c2pl[k] * x)
            vertex = a0 - a1 * (1.0 + r)
            xx = x * x
            kappa = sv * c2pl[k] * xx
            if kappa >= 0.0:
                return 2, i, k
            std = math.sqrt(tau * b1c / (2.0 * -kappa))
            a = vertex + std * zal[k]
            dev = a - vertex
            q = sv * c2pl[k] * xx * dev * dev
            if normalize:
                logz = 0.5 * math.log(math.pi * tau * b1c / -kappa)
                qd = q - tau * b1c * logz
            else:
                qd = q
            mu_dt = x * (a * r1 + (1.0 - a) * r2) * dt
            diff = x * a * s1 * dw1[k] + x * (1.0 - a) * s2 * dw2[k]
            xn = x + mu_dt + diff
            if not math.isfinite(xn):
                return 3, i, k
            jn = c0t[k + 1] + c1t[k + 1] * xn + c2t[k + 1] * xn * xn
            delta = jn - jc - qd * dt
            q2 = 2.0 * sv * c2pl[k] * xx * dev
            d0 = d0 + (c1t[k] * u * x + 2.0 * u * c2t[k] * xx) * delta
            d1 = d1 + (dxxl[k] + 2.0 * u * c2t[k] * xx) * delta
            d2 = d2 + (dnll[k] - 2.0 * u * c1t[k] * x - 2.0 * u * c2t[k] * xx) * delta
            d3 = d3 + -q2 * delta
            d4 = d4 + q2 * (1.0 + r) * delta
            d5 = d5 + c2pl[k] * xx * dev * dev * delta
            d6 = d6 + q2 * a1 * r * u * delta
            d7 = d7 + (u * q - q2 * a1 * r * u) * delta
            x = xn
            jc = jn
        if not (math.isfinite(d0 + d1 + d2) and math.isfinite(d3 + d4 + d5 + d6 + d7)):
            return 5, i, -1
        lt = lrt[i]
        lp = lrp[i]
        theta[0] = theta[0] + lt * d0
        theta[1] = theta[1] + lt * d1
        theta[2] = theta[2] + lt * d2
        psi[0] = psi[0] + lp * d3
        psi[1] = psi[1] + lp * d4
        psi[2] = psi[2] + lp * d5
        psi[3] = psi[3] + lp * d6
        psi[4] = psi[4] + lp * d7
        snaps[i, 0] = theta[0]; snaps[i, 1] = theta[1]; snaps[i, 2] = theta[2]
        snaps[i, 3] = psi[0]; snaps[i, 4] = psi[1]; snaps[i, 5] = psi[2]
        snaps[i, 6] = psi[3]; snaps[i, 7] = psi[4]
        dnt[i] = math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
        dnp[i] = math.sqrt(d3 * d3 + d4 * d4 + d5 * d5 + d6 * d6 + d7 * d7)
        xterm[i] = x
        for jj in range(8):
            if abs(snaps[i, jj]) > bound:
                return 1, i, -1
    return 0, -1, -1


def _make_train_chunk_nb():
    from numba import njit

    @njit(cache=True)
    def train_chunk(theta, psi, pts, alpha, horizon, b0c, b1c, tau, dt,
                    r1, r2, s1, s2, bound, normalize, x0,
                    dw, za, lrt, lrp, snaps, dnt, dnp, xterm):
        count, num_steps = dw.shape[0], dw.shape[1]
        n = num_steps + 1
        c0t = np.empty(n); c1t = np.empty(n); c2t = np.empty(n)
        dxxl = np.empty(n); dnll = np.empty(n); ul = np.empty(n)
        c1pl = np.empty(n); c2pl = np.empty(n)
        for i in range(count):
            px = theta[0]; pxx = theta[1]; pnl = theta[2]
            a0 = psi[0]; a1 = psi[1]; sv = psi[2]; c1e = psi[3]; c2e = psi[4]
            s = pxx + pnl
            base = 1.0 - alpha * b0c
            amp = base * base / (2.0 * alpha)
            for k in range(n):
                u = horizon - pts[k]
                ul[k] = u
                e0 = math.exp(-2.0 * s * u)
                c0t[k] = b0c * (1.0 - 0.5 * alpha * b0c) + amp * pnl * (1.0 - e0) / s
                c1t[k] = (1.0 - alpha * b0c) * b1c * math.exp((px - 2.0 * pnl) * u)
                c2t[k] = -0.5 * alpha * b1c * b1c * math.exp(2.0 * (px + pxx - pnl) * u)
                dxxl[k] = amp * pnl * (2.0 * u * e0 * s - (1.0 - e0)) / (s * s)
                dnll[k] = amp * ((1.0 - e0) * pxx + 2.0 * u * e0 * s * pnl) / (s * s)
                c1pl[k] = (1.0 - alpha * b0c) * b1c * math.exp(c1e * u)
                c2pl[k] = -0.5 * alpha * b1c * b1c * math.exp(c2e * u)

            x = x0
            jc = c0t[0] + c1t[0] * x + c2t[0] * x * x
            d0 = 0.0; d1 = 0.0; d2 = 0.0
            d3 = 0.0; d4 = 0.0; d5 = 0.0; d6 = 0.0; d7 = 0.0
            for k in range(num_steps):
                u = ul[k]
                if x == 0.0:
                    return 4, i, k
                r = c1pl[k] / (2.0 * c2pl[k] * x)
                vertex = a0 - a1 * (1.0 + r)
                xx = x * x
                kappa = sv * c2pl[k] * xx
                if kappa >= 0.0:
                    return 2, i, k
                std = math.sqrt(tau * b1c / (2.0 * -kappa))
                a = vertex + std * za[i, k]
                dev = a - vertex
                q = sv * c2pl[k] * xx * dev * dev
                if normalize:
                    logz = 0.5 * math.log(math.pi * tau * b1c / -kappa)
                    qd = q - tau * b1c * logz
                else:
                    qd = q
                mu_dt = x * (a * r1 + (1.0 - a) * r2) * dt
                diff = x * a * s1 * dw[i, k, 0] + x * (1.0 - a) * s2 * dw[i, k, 1]
                xn = x + mu_dt + diff
                if not math.isfinite(xn):
                    return 3, i, k
                jn = c0t[k + 1] + c1t[k + 1] * xn + c2t[k + 1] * xn * xn
                delta = jn - jc - qd * dt
                q2 = 2.0 * sv * c2pl[k] * xx * dev
                d0 = d0 + (c1t[k] * u * x + 2.0 * u * c2t[k] * xx) * delta
                d1 = d1 + (dxxl[k] + 2.0 * u * c2t[k] * xx) * delta
                d2 = d2 + (dnll[k] - 2.0 * u * c1t[k] * x - 2.0 * u * c2t[k] * xx) * delta
                d3 = d3 + -q2 * delta
                d4 = d4 + q2 * (1.0 + r) * delta
                d5 = d5 + c2pl[k] * xx * dev * dev * delta
                d6 = d6 + q2 * a1 * r * u * delta
                d7 = d7 + (u * q - q2 * a1 * r * u) * delta
                x = xn
                jc = jn
            if not (math.isfinite(d0 + d1 + d2) and math.isfinite(d3 + d4 + d5 + d6 + d7)):
                return 5, i, -1
            lt = lrt[i]
            lp = lrp[i]
            theta[0] = theta[0] + lt * d0
            theta[1] = theta[1] + lt * d1
            theta[2] = theta[2] + lt * d2
            psi[0] = psi[0] + lp * d3
            psi[1] = psi[1] + lp * d4
            psi[2] = psi[2] + lp * d5
            psi[3] = psi[3] + lp * d6
            psi[4] = psi[4] + lp * d7
            snaps[i, 0] = theta[0]; snaps[i, 1] = theta[1]; snaps[i, 2] = theta[2]
            snaps[i, 3] = psi[0]; snaps[i, 4] = psi[1]; snaps[i, 5] = psi[2]
            snaps[i, 6] = psi[3]; snaps[i, 7] = psi[4]
            dnt[i] = math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
            dnp[i] = math.sqrt(d3 * d3 + d4 * d4 + d5 * d5 + d6 * d6 + d7 * d7)
            xterm[i] = x
            for jj in range(8):
                if abs(snaps[i, jj]) > bound:
                    return 1, i, -1
        return 0, -1, -1

    return train_chunk


def train_episodes(theta0, psi0, m, config, stream: RandomStream):
    """The benchmark training loop on the active backend.

    Mutates nothing passed in; returns (snapshots (N,8), update norms for
    theta and psi (N,), realized terminal payoffs (N,)).  Raises the same
    error types as the generic trainer on divergence.
    """
    from .qlearning import _as_schedule

    episodes = config.episodes
    grid = config.grid
    num_steps = grid.num_steps
    pts = grid.points
    lrt = _as_schedule(config.lr_theta, episodes)
    lrp = _as_schedule(config.lr_psi, episodes)
    x0 = float(np.atleast_1d(np.asarray(config.x0, dtype=float))[0])
    theta = np.array(theta0, dtype=float)
    psi = np.array(psi0, dtype=float)
    if not psi[2] > 0.0:
        raise GibbsNormalizationError(
            f"psi_sv must be positive for a Gibbs policy, got {psi[2]:g}"
        )

    snapshots = np.empty((episodes, 8))
    dn_theta = np.empty(episodes)
    dn_psi = np.empty(episodes)
    xterm = np.empty(episodes)
    dw = np.empty((_CHUNK, num_steps, 2))
    za = np.empty((_CHUNK, num_steps))
    fn = _nb("train") if active_backend() == "numba" else _train_chunk_np

    for start in range(0, episodes, _CHUNK):
        count = min(_CHUNK, episodes - start)
        _fill_noise(stream, start, count, num_steps, dt=grid.dt,
                    dw_out=dw[:count], za_out=za[:count])
        status, i, k = fn(
            theta, psi, pts, m.alpha, m.horizon, config.b0_init, config.b1_init,
            config.tau, grid.dt, m.r1, m.r2, m.sigma1, m.sigma2,
            config.divergence_bound, config.normalize_q, x0,
            dw[:count], za[:count], lrt[start:start + count], lrp[start:start + count],
            snapshots[start:start + count], dn_theta[start:start + count],
            dn_psi[start:start + count], xterm[start:start + count],
        )
        _raise_status(status, start + i, k)

    util = UtilityFunction.mean_variance(m.alpha)
    payoff = np.empty(episodes)
    b0c, b1c = config.b0_init, config.b1_init
    for j in range(episodes):
        payoff[j] = utility_eval(util, b0c + b1c * float(xterm[j]))
    return snapshots, dn_theta, dn_psi, payoff
