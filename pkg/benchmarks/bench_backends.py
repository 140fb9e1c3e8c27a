"""Timing comparison of the numba kernels against the pure-numpy fallback.

Runs the three kernel-backed drivers (policy evaluation, update statistics,
training) on both backends, checks that the results agree bitwise, and
prints per-driver timings.  The numba timings exclude JIT compilation (one
warmup call per driver).

Usage: python benchmarks/bench_backends.py [--episodes N] [--train-episodes N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from riskql import RandomStream, TimeGrid, available_backends, set_backend
from riskql import portfolio as pf


def run_all(episodes: int, train_episodes: int):
    m = pf.MarketParams()
    grid = TimeGrid(0.0, m.horizon, 1000)
    theta_star, psi_star = pf.optimal_params(m)

    out = {}
    t0 = time.perf_counter()
    res = pf.evaluate_policy(pf.ConstantPolicy(0.5), m, grid, episodes, RandomStream(1))
    out["evaluate"] = (
        time.perf_counter() - t0,
        np.array([res.mean_return, res.std_return, res.mv_objective]),
    )

    t0 = time.perf_counter()
    mean, stderr = pf.update_statistics(
        theta_star.as_array(), psi_star.as_array(), m, grid, episodes, RandomStream(2)
    )
    out["sweep"] = (time.perf_counter() - t0, np.concatenate([mean, stderr]))

    stream = RandomStream(3)
    theta0, psi0 = pf.perturbed_initialization(m, stream.child(999))
    cfg = pf.default_training_config(m)
    cfg = type(cfg)(**{**cfg.__dict__, "episodes": train_episodes})
    t0 = time.perf_counter()
    log = pf.train(m, cfg, stream, theta_init=theta0, psi_init=psi0)
    out["train"] = (
        time.perf_counter() - t0,
        np.concatenate([log.final_theta, log.final_psi]),
    )
    return out


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--episodes", type=int, default=10_000)
    parser.add_argument("--train-episodes", type=int, default=20_000)
    args = parser.parse_args()

    if "numba" not in available_backends():
        raise SystemExit("numba is not importable; nothing to compare")

    set_backend("numba")
    run_all(200, 200)  # JIT warmup, not timed
    numba_results = run_all(args.episodes, args.train_episodes)

    set_backend("numpy")
    numpy_results = run_all(args.episodes, args.train_episodes)

    print(f"{'driver':<10} {'numba':>10} {'numpy':>10} {'speedup':>9}  bitwise")
    for name in ("evaluate", "sweep", "train"):
        t_nb, v_nb = numba_results[name]
        t_np, v_np = numpy_results[name]
        same = bool(np.array_equal(v_nb, v_np))
        print(f"{name:<10} {t_nb:>9.2f}s {t_np:>9.2f}s {t_np / t_nb:>8.1f}x  {same}")
        if not same:
            raise SystemExit(f"backend mismatch in {name}: {v_nb} vs {v_np}")


if __name__ == "__main__":
    main()
