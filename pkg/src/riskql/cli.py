"""Deterministic experiment runner with CSV outputs.

Every subcommand is a pure function of (config, seed): rerunning with the
same inputs produces byte-identical files.  Configs are flat ``key = value``
text (UTF-8, ``#`` comments); unknown keys are rejected so a typo cannot
silently fall back to a default.  All CSVs are RFC-4180-style with a
versioned ``# riskql-csv <schema> v1`` comment as their first line and
floats printed to 17 significant digits, and files are written atomically
(temp file in the target directory, then rename).

Exit codes: 0 success, 2 config error, 3 numeric divergence, 4 diagnostic
failure (only when ``--assert`` is passed).
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import budget, diagnostics, portfolio
from .augmentation import StateOnlyPolicy
from .engine import TimeGrid
from .errors import (
    ConfigError,
    GibbsNormalizationError,
    NumericDomainError,
    RiskqlError,
    SingularControlError,
    TrainingDivergedError,
    TrajectoryDivergenceError,
    UnboundedObjectiveError,
)
from .oce import UtilityFunction, oce_estimate
from .qlearning import GibbsPolicy, TrainingConfig, log_partition
from .streams import RandomStream

__all__ = [
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "main",
    "cmd_oracle",
    "cmd_train",
    "cmd_evaluate",
    "cmd_sweep",
    "cmd_diagnose",
    "cmd_oce",
]

_DIVERGENCE_ERRORS = (
    TrainingDivergedError,
    TrajectoryDivergenceError,
    GibbsNormalizationError,
    UnboundedObjectiveError,
    SingularControlError,
    NumericDomainError,
)

_POLICY_CHOICES = ("baseline", "oracle", "trained", "lifted")
_DEFECT_CHOICES = ("none", "q_shift", "c1_scale")
_INIT_CHOICES = ("optimal", "perturbed")
_UTILITY_CHOICES = (
    "linear",
    "exponential",
    "power",
    "logarithm",
    "cvar",
    "mean_variance",
    "monotone_mean_variance",
)

# Substream ids for the per-command RandomStream children, so that adding a
# consumer never shifts the noise seen by an existing one.
_INIT_SUBSTREAM = 999


@dataclass(frozen=True)
class ExperimentConfig:
    """Typed view of a config file; defaults are the benchmark setting."""

    seed: int = 0
    # market
    r1: float = 0.15
    r2: float = 0.25
    sigma1: float = 0.1
    sigma2: float = 0.12
    alpha: float = 1.0
    horizon: float = 1.0
    x0: float = 1.0
    # grid
    num_steps: int = 1000
    # training
    episodes: int = 20_000
    tau: float = 0.05
    lr_theta: float = 1e-3
    lr_psi: float = 5e-4
    normalize_q: bool = False
    init_mode: str = "perturbed"
    init_relative: float = 0.2
    # evaluation
    eval_episodes: int = 10_000
    policies: tuple[str, ...] = ("baseline", "oracle")
    baseline_action: float = 0.5
    # sweep
    sweep_params: tuple[str, ...] = ("all",)
    sweep_offsets: tuple[float, ...] = (-0.1, -0.05, 0.0, 0.05, 0.1)
    sweep_episodes: int = 10_000
    # diagnostics
    diag_episodes: int = 400
    qdt_episodes: int = 2000
    z_threshold: float = 3.0
    defect: str = "none"
    defect_size: float = 0.0
    # oce
    utility: str = "linear"
    utility_alpha: float = 1.0
    utility_beta: float = 0.5
    utility_gamma: float = 0.5
    samples: str = ""

    def market(self) -> portfolio.MarketParams:
        return portfolio.MarketParams(
            r1=self.r1,
            r2=self.r2,
            sigma1=self.sigma1,
            sigma2=self.sigma2,
            alpha=self.alpha,
            horizon=self.horizon,
            x0=self.x0,
        )

    def grid(self) -> TimeGrid:
        return TimeGrid(0.0, self.horizon, self.num_steps)

    def training(self) -> TrainingConfig:
        return TrainingConfig(
            episodes=self.episodes,
            grid=self.grid(),
            lr_theta=self.lr_theta,
            lr_psi=self.lr_psi,
            tau=self.tau,
            normalize_q=self.normalize_q,
            x0=self.x0,
            b0_init=0.0,
            b1_init=1.0,
        )


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _parse_str_list(raw: str) -> tuple[str, ...]:
    items = tuple(part.strip() for part in raw.split(",") if part.strip())
    if not items:
        raise ValueError("expected a comma-separated list")
    return items


def _parse_float_list(raw: str) -> tuple[float, ...]:
    return tuple(float(part) for part in raw.split(",") if part.strip())


_PARSERS = {
    int: lambda raw: int(raw, 10),
    float: float,
    bool: _parse_bool,
    str: lambda raw: raw.strip(),
    tuple[str, ...]: _parse_str_list,
    tuple[float, ...]: _parse_float_list,
}


def parse_config(text: str) -> dict:
    """Parse flat ``key = value`` text into a typed dict; reject unknown keys."""
    known = {f.name: f.type for f in fields(ExperimentConfig)}
    # dataclass fields carry string annotations under `from __future__ import
    # annotations`; resolve them against the same table the parsers use.
    resolved = {
        "int": int,
        "float": float,
        "bool": bool,
        "str": str,
        "tuple[str, ...]": tuple[str, ...],
        "tuple[float, ...]": tuple[float, ...],
    }
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = body.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        ftype = resolved[known[key]] if isinstance(known[key], str) else known[key]
        try:
            out[key] = _PARSERS[ftype](raw)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    return out


def load_config(path: str | None, seed_override: int | None = None) -> ExperimentConfig:
    values: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        values = parse_config(text)
    if seed_override is not None:
        values["seed"] = seed_override
    cfg = ExperimentConfig(**values)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    try:
        cfg.market()
        cfg.grid()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    positive = {
        "episodes": cfg.episodes,
        "eval_episodes": cfg.eval_episodes,
        "sweep_episodes": cfg.sweep_episodes,
        "diag_episodes": cfg.diag_episodes,
        "qdt_episodes": cfg.qdt_episodes,
        "tau": cfg.tau,
        "z_threshold": cfg.z_threshold,
    }
    for name, value in positive.items():
        if not value > 0:
            raise ConfigError(f"{name} must be positive, got {value}")
    if cfg.lr_theta < 0 or cfg.lr_psi < 0:
        raise ConfigError("learning rates must be nonnegative")
    if cfg.init_mode not in _INIT_CHOICES:
        raise ConfigError(f"init_mode must be one of {_INIT_CHOICES}, got {cfg.init_mode!r}")
    if not 0 <= cfg.init_relative < 1:
        raise ConfigError(f"init_relative must be in [0, 1), got {cfg.init_relative}")
    for pol in cfg.policies:
        if pol not in _POLICY_CHOICES:
            raise ConfigError(f"unknown policy {pol!r}; expected one of {_POLICY_CHOICES}")
    if cfg.defect not in _DEFECT_CHOICES:
        raise ConfigError(f"defect must be one of {_DEFECT_CHOICES}, got {cfg.defect!r}")
    if cfg.utility not in _UTILITY_CHOICES:
        raise ConfigError(f"utility must be one of {_UTILITY_CHOICES}, got {cfg.utility!r}")
    if cfg.sweep_params != ("all",):
        for name in cfg.sweep_params:
            if name not in portfolio.PARAM_NAMES:
                raise ConfigError(
                    f"unknown sweep parameter {name!r}; expected 'all' or one of "
                    f"{portfolio.PARAM_NAMES}"
                )


def _fmt(value) -> str:
    if isinstance(value, float) or isinstance(value, np.floating):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path: Path, schema: str, header: list[str], rows) -> None:
    """Serialize rows (17-significant-digit floats) and rename into place."""
    buf = io.StringIO()
    buf.write(f"# riskql-csv {schema} v1\r\n")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(cell) for cell in row])
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(buf.getvalue(), encoding="utf-8", newline="")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# subcommands


def cmd_oracle(cfg: ExperimentConfig, out_dir: Path) -> list[Path]:
    m = cfg.market()
    mc = portfolio.market_constants(m)
    theta, psi = portfolio.optimal_params(m)

    rows = [("Px", mc.Px), ("Pxx", mc.Pxx), ("Pnl", mc.Pnl)]
    rows += list(zip(portfolio.PARAM_NAMES, np.concatenate([theta.as_array(), psi.as_array()])))
    params_path = out_dir / "oracle_params.csv"
    write_csv(params_path, "oracle-params", ["name", "value"], rows)

    table = []
    for t in np.linspace(0.0, m.horizon, 5):
        for x in (0.5, 1.0, 1.5, 2.0):
            a_star = portfolio.optimal_control(t, x, 0.0, 1.0, mc, m.alpha, m.horizon, m)
            j_star = portfolio.optimal_value(t, x, 0.0, 1.0, mc, m.alpha, m.horizon)
            q_lo = portfolio.optimal_q(t, x, 0.0, 1.0, a_star - 0.5, mc, m.alpha, m.horizon, m)
            q_hi = portfolio.optimal_q(t, x, 0.0, 1.0, a_star + 0.5, mc, m.alpha, m.horizon, m)
            table.append((t, x, a_star, j_star, q_lo, q_hi))
    table_path = out_dir / "oracle_table.csv"
    write_csv(
        table_path,
        "oracle-table",
        ["t", "x", "a_star", "j_star", "q_at_a_minus_half", "q_at_a_plus_half"],
        table,
    )
    return [params_path, table_path]


def _run_training(cfg: ExperimentConfig):
    m = cfg.market()
    stream = RandomStream(cfg.seed)
    if cfg.init_mode == "perturbed":
        theta0, psi0 = portfolio.perturbed_initialization(
            m, stream.child(_INIT_SUBSTREAM), relative=cfg.init_relative
        )
    else:
        theta_star, psi_star = portfolio.optimal_params(m)
        theta0, psi0 = theta_star.as_array(), psi_star.as_array()
    log = portfolio.train(m, cfg.training(), stream, theta_init=theta0, psi_init=psi0)
    return m, log


def cmd_train(cfg: ExperimentConfig, out_dir: Path) -> list[Path]:
    m, log = _run_training(cfg)
    theta_star, psi_star = portfolio.optimal_params(m)
    optimal = np.concatenate([theta_star.as_array(), psi_star.as_array()])

    log_path = out_dir / "training_log.csv"
    header = ["episode", *log.param_names, "delta_norm_theta", "delta_norm_psi", "terminal_payoff"]
    rows = (
        (
            ep,
            *log.params[ep],
            log.delta_norm_theta[ep],
            log.delta_norm_psi[ep],
            log.terminal_payoff[ep],
        )
        for ep in range(log.episodes)
    )
    write_csv(log_path, "training-log", header, rows)

    final = np.concatenate([log.final_theta, log.final_psi])
    params_path = out_dir / "trained_params.csv"
    write_csv(
        params_path,
        "trained-params",
        ["name", "value", "optimal", "rel_error"],
        [
            (name, final[i], optimal[i], abs(final[i] - optimal[i]) / abs(optimal[i]))
            for i, name in enumerate(log.param_names)
        ],
    )
    return [log_path, params_path]


@dataclass(frozen=True)
class _OptimalAugmentedPolicy:
    """Deterministic a*(t, x, b0, b1); the augmented half of the lifted row."""

    m: portfolio.MarketParams

    def sample(self, t: float, x: np.ndarray, b0: float, b1: float, rng) -> np.ndarray:
        mc = portfolio.market_constants(self.m)
        a = portfolio.optimal_control(t, x, b0, b1, mc, self.m.alpha, self.m.horizon, self.m)
        return np.array([a])


def _evaluate_lifted(cfg: ExperimentConfig, m: portfolio.MarketParams, grid: TimeGrid):
    """Oracle policy driven through the budget bookkeeping, episode by episode.

    This is the slow generic path on purpose: it exercises simulate_lifted
    rather than the kernel, so the summary row doubles as an end-to-end check
    of the reduction.  Expect roughly 20 ms per episode.
    """
    jstar, _ = portfolio.oracle_families(m)
    b_star = budget.optimal_budget(jstar, 0.0, m.x0)
    reward = portfolio.wealth_environment(m).reward
    policy = budget.lift_policy(_OptimalAugmentedPolicy(m), b_star, reward)
    sde = portfolio.wealth_sde(m)
    stream = RandomStream(cfg.seed)

    n = cfg.eval_episodes
    terminal = np.empty(n)
    sum_x = np.zeros(grid.num_steps + 1)
    sum_x2 = np.zeros(grid.num_steps + 1)
    for j in range(n):
        traj = budget.simulate_lifted(sde, policy, grid, np.array([m.x0]), stream, episode=j)
        path = traj.states[:, 0]
        terminal[j] = path[-1]
        sum_x += path
        sum_x2 += path * path
    mean_path = sum_x / n
    var_path = sum_x2 / n - mean_path * mean_path
    mean_terminal = float(terminal.mean())
    return portfolio.EvaluationResult(
        mean_return=mean_terminal - m.x0,
        std_return=float(terminal.std(ddof=1)),
        mv_objective=mean_terminal - 0.5 * m.alpha * float(terminal.var()),
        episodes=n,
        curve_mean_return=mean_path - m.x0,
        curve_mv=mean_path - 0.5 * m.alpha * var_path,
    )


def cmd_evaluate(cfg: ExperimentConfig, out_dir: Path) -> list[Path]:
    m = cfg.market()
    grid = cfg.grid()
    jstar, qstar = portfolio.oracle_families(m)
    b_star = budget.optimal_budget(jstar, 0.0, m.x0)

    results: dict[str, portfolio.EvaluationResult] = {}
    for name in cfg.policies:
        if name == "baseline":
            policy = portfolio.ConstantPolicy(cfg.baseline_action)
        elif name == "oracle":
            policy = portfolio.PsiControlPolicy(qstar, b0=-b_star, b1=1.0)
        elif name == "trained":
            _, log = _run_training(cfg)
            jhat = portfolio.theta_value_family(m.alpha, m.horizon, log.final_theta)
            qhat = portfolio.psi_q_family(m.alpha, m.horizon, log.final_psi)
            b_hat = budget.optimal_budget(jhat, 0.0, m.x0)
            policy = portfolio.PsiControlPolicy(qhat, b0=-b_hat, b1=1.0)
        else:
            results[name] = _evaluate_lifted(cfg, m, grid)
            continue
        results[name] = portfolio.evaluate_policy(
            policy, m, grid, cfg.eval_episodes, RandomStream(cfg.seed)
        )

    summary_path = out_dir / "evaluation_summary.csv"
    rows = []
    for name in cfg.policies:
        r = results[name]
        pop_var = r.std_return**2 * (r.episodes - 1) / r.episodes
        identity_error = r.mv_objective - (r.mean_return + m.x0 - 0.5 * m.alpha * pop_var)
        rows.append(
            (name, r.mean_return, r.std_return, r.mv_objective, r.episodes, identity_error)
        )
    write_csv(
        summary_path,
        "evaluation-summary",
        ["policy", "mean_return", "std_return", "mv_objective", "episodes", "mv_identity_error"],
        rows,
    )

    curves_path = out_dir / "evaluation_curves.csv"
    header = ["time"]
    columns = [grid.points]
    for name in cfg.policies:
        header += [f"{name}_mean_return", f"{name}_mv"]
        columns += [results[name].curve_mean_return, results[name].curve_mv]
    write_csv(curves_path, "evaluation-curves", header, zip(*columns))
    return [summary_path, curves_path]


def cmd_sweep(cfg: ExperimentConfig, out_dir: Path) -> list[Path]:
    m = cfg.market()
    grid = cfg.grid()
    theta_star, psi_star = portfolio.optimal_params(m)
    scale = np.abs(np.concatenate([theta_star.as_array(), psi_star.as_array()]))
    names = portfolio.PARAM_NAMES if cfg.sweep_params == ("all",) else cfg.sweep_params

    rows = []
    for name in names:
        idx = portfolio.PARAM_NAMES.index(name)
        absolute = [rel * scale[idx] for rel in cfg.sweep_offsets]
        points = portfolio.stability_sweep(
            name,
            absolute,
            m,
            grid,
            episodes=cfg.sweep_episodes,
            stream=RandomStream(cfg.seed),
            tau=cfg.tau,
            normalize=cfg.normalize_q,
        )
        for rel, pt in zip(cfg.sweep_offsets, points):
            rows.append((name, rel, pt.mean_update, pt.stderr))

    path = out_dir / "sweep.csv"
    write_csv(path, "sweep", ["parameter", "offset", "mean_update", "stderr"], rows)
    return [path]


class _ShiftedQ:
    """q with a constant planted offset; breaks the martingale drift."""

    def __init__(self, inner, shift: float):
        self.inner = inner
        self.shift = shift

    def value(self, t, x, b0, b1, a) -> float:
        return self.inner.value(t, x, b0, b1, a) + self.shift


class _ScaledC1J:
    """Value family with its linear-in-x coefficient scaled by a factor."""

    def __init__(self, inner, factor: float):
        self.inner = inner
        self.factor = factor

    def value(self, t, x, b0, b1) -> float:
        c0, c1, c2 = self.inner.coefficients(t, b0, b1)
        xv = float(x[0]) if hasattr(x, "__len__") else float(x)
        return c0 + self.factor * c1 * xv + c2 * xv * xv


def cmd_diagnose(cfg: ExperimentConfig, out_dir: Path) -> tuple[list[Path], bool]:
    m = cfg.market()
    grid = cfg.grid()
    mc = portfolio.market_constants(m)
    jfam, qfam = portfolio.oracle_families(m)
    env = portfolio.wealth_environment(m)

    # The behavior policies always come from the clean oracle; a planted
    # defect perturbs only the pair under test, which is the off-policy
    # reading of the martingale property.
    jtest, qtest = jfam, qfam
    if cfg.defect == "q_shift":
        qtest = _ShiftedQ(qfam, cfg.defect_size if cfg.defect_size else 0.1)
    elif cfg.defect == "c1_scale":
        jtest = _ScaledC1J(jfam, cfg.defect_size if cfg.defect_size else 1.01)

    zt = cfg.z_threshold
    rows: list[tuple] = []

    def det_row(name: str, estimate: float, tol: float) -> None:
        rows.append((name, estimate, "", "", tol, estimate <= tol))

    rng = np.random.default_rng(cfg.seed)
    pts4 = [
        (rng.uniform(0.0, m.horizon), rng.uniform(0.3, 2.5), rng.uniform(-1, 1), rng.uniform(0.5, 1.5))
        for _ in range(20)
    ]
    pts5 = [(t, x, b0, b1, rng.uniform(-1.0, 3.0)) for (t, x, b0, b1) in pts4]

    det_row("gradient_theta", diagnostics.gradient_check(jfam, pts4), 1e-5)
    det_row("gradient_psi", diagnostics.gradient_check(qfam, pts5), 1e-5)

    hjb = np.abs(diagnostics.hjb_residual(jtest, mc, pts4))
    det_row("hjb_max_residual", float(hjb.max()), 1e-8)
    gen = np.abs(diagnostics.generator_residual(jtest, qtest, m, pts5))
    det_row("generator_max_residual", float(gen.max()), 1e-8)

    gibbs = GibbsPolicy(q=qfam, tau=cfg.tau)
    tp, xp, b0p, b1p = 0.3, 1.2, -0.4, 0.9
    shift = cfg.tau * b1p * log_partition(qfam, tp, xp, b0p, b1p, cfg.tau)
    qm = diagnostics.q_mean_check(
        lambda a: qtest.value(tp, xp, b0p, b1p, a) - shift, gibbs, cfg.tau, tp, xp, b0p, b1p
    )
    det_row("q_mean_normalized", abs(qm), 1e-10)

    base = StateOnlyPolicy(portfolio.ConstantPolicy(cfg.baseline_action))
    for tag, policy, sub in (("gibbs", gibbs, 1), ("baseline", base, 2)):
        report = diagnostics.martingale_residual(
            jtest,
            qtest,
            policy,
            env,
            grid,
            np.array([m.x0]),
            cfg.diag_episodes,
            RandomStream(cfg.seed).child(sub),
        )
        for name, est, se, z in report.rows():
            rows.append((f"martingale_{tag}_{name}", est, se, z, zt, abs(z) < zt))

    expansion = diagnostics.qdt_expansion_check(
        jtest,
        qtest,
        env,
        t=0.0,
        x=m.x0,
        b0=0.0,
        b1=1.0,
        action=1.0,
        dt_list=(0.02, 0.01, 0.005),
        sim_dt=0.001,
        episodes=cfg.qdt_episodes,
        stream=RandomStream(cfg.seed).child(3),
    )
    gap_z = expansion.gap / expansion.extrapolated_stderr
    rows.append(
        ("qdt_expansion_gap", expansion.gap, expansion.extrapolated_stderr, gap_z, zt, abs(gap_z) < zt)
    )

    path = out_dir / "diagnostics.csv"
    write_csv(path, "diagnostics", ["test", "estimate", "stderr", "z", "threshold", "passed"], rows)
    failed = [r[0] for r in rows if not r[-1]]
    if failed:
        print(f"diagnose: {len(failed)} of {len(rows)} checks failed: {', '.join(failed)}")
    else:
        print(f"diagnose: all {len(rows)} checks passed")
    return [path], not failed


def cmd_oce(cfg: ExperimentConfig, out_dir: Path) -> list[Path]:
    if not cfg.samples:
        raise ConfigError("oce requires a 'samples' key pointing at a sample file")
    try:
        samples = np.loadtxt(cfg.samples, ndmin=1)
    except OSError as exc:
        raise ConfigError(f"cannot read samples {cfg.samples}: {exc}") from exc

    kind = cfg.utility
    if kind == "linear":
        u = UtilityFunction.linear()
    elif kind == "exponential":
        u = UtilityFunction.exponential(cfg.utility_alpha)
    elif kind == "power":
        u = UtilityFunction.power(cfg.utility_gamma)
    elif kind == "logarithm":
        u = UtilityFunction.logarithm()
    elif kind == "cvar":
        u = UtilityFunction.cvar(cfg.utility_beta)
    elif kind == "mean_variance":
        u = UtilityFunction.mean_variance(cfg.utility_beta)
    else:
        u = UtilityFunction.monotone_mean_variance(cfg.utility_beta)

    est = oce_estimate(u, samples)
    print(f"oce {_fmt(est.value)}")
    print(f"eta_star {_fmt(est.eta_star)}")
    return []


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="riskql",
        description="Deterministic risk-sensitive q-learning experiments with CSV outputs.",
    )
    parser.add_argument("--config", metavar="PATH", help="flat key = value config file")
    parser.add_argument("--seed", type=int, metavar="N", help="override the config seed")
    parser.add_argument("--out", metavar="DIR", default=".", help="output directory")
    parser.add_argument(
        "--threads",
        type=int,
        metavar="N",
        default=1,
        help="reserved; the bundled kernels are single-threaded",
    )
    parser.add_argument(
        "--assert",
        dest="assert_mode",
        action="store_true",
        help="exit 4 if any diagnostic check fails",
    )
    parser.add_argument(
        "command",
        choices=("oracle", "train", "evaluate", "sweep", "diagnose", "oce"),
    )
    args = parser.parse_args(argv)

    try:
        if args.threads < 1:
            raise ConfigError(f"--threads must be >= 1, got {args.threads}")
        cfg = load_config(args.config, args.seed)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)

        diag_ok = True
        if args.command == "oracle":
            written = cmd_oracle(cfg, out_dir)
        elif args.command == "train":
            written = cmd_train(cfg, out_dir)
        elif args.command == "evaluate":
            written = cmd_evaluate(cfg, out_dir)
        elif args.command == "sweep":
            written = cmd_sweep(cfg, out_dir)
        elif args.command == "diagnose":
            written, diag_ok = cmd_diagnose(cfg, out_dir)
        else:
            written = cmd_oce(cfg, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except _DIVERGENCE_ERRORS as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return 3

    for path in written:
        print(path)
    if args.command == "diagnose" and args.assert_mode and not diag_ok:
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
