"""Two-asset benchmark: closed forms, trainable families, evaluation, sweeps."""

import math

import numpy as np
import pytest

from riskql._kernels import active_backend, available_backends, set_backend
from riskql.engine import ConstantPolicy, TimeGrid
from riskql.errors import SingularControlError
from riskql.oce import UtilityFunction, utility_eval
from riskql.portfolio import (
    MarketConstants,
    MarketParams,
    PsiControlPolicy,
    PsiGibbsPolicy,
    PsiQFamily,
    SweepPoint,
    ThetaValueFamily,
    c_coefficients,
    default_training_config,
    evaluate_policy,
    market_constants,
    optimal_control,
    optimal_params,
    optimal_q,
    optimal_value,
    oracle_families,
    perturbed_initialization,
    stability_sweep,
    train,
    update_statistics,
    wealth_environment,
    wealth_sde,
)
from riskql.qlearning import TrainingConfig
from riskql.qlearning import train as generic_train
from riskql.streams import RandomStream

M = MarketParams()
MC = market_constants(M)

# Printed benchmark values, frozen at full precision from the defining formulas.
PX = 0.1909836065573771
PXX = 0.002950819672131148
PNL = 0.20491803278688528
PSI_STAR = (0.5901639344262295, -4.0983606557377055, 0.0244, -0.21885245901639346, -0.021967213114753723)
A_STAR_START = 1.3226029765963179
J_STAR_START = 0.4819631429389701
C_START = (0.1676590476786436, 0.8034402497739963, -0.4891361545136698)


def random_points(n, seed=321):
    """(t, x, b0, b1) tuples covering the region the experiments visit."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, M.horizon, n)
    x = rng.uniform(0.3, 2.5, n)
    b0 = rng.uniform(-1.0, 1.0, n)
    b1 = rng.uniform(0.2, 1.5, n)
    return np.stack([t, x, b0, b1], axis=1)


class TestMarketConstants:
    def test_benchmark_values(self):
        assert MC.Px == pytest.approx(PX, rel=1e-15)
        assert MC.Pxx == pytest.approx(PXX, rel=1e-15)
        assert MC.Pnl == pytest.approx(PNL, rel=1e-15)
        assert (round(MC.Px, 4), round(MC.Pxx, 4), round(MC.Pnl, 4)) == (0.1910, 0.0030, 0.2049)

    def test_formulas_from_first_principles(self):
        s = M.sigma1**2 + M.sigma2**2
        assert MC.Px == pytest.approx((M.r1 * M.sigma2**2 + M.r2 * M.sigma1**2) / s, rel=1e-15)
        assert MC.Pxx == pytest.approx(M.sigma1**2 * M.sigma2**2 / (2 * s), rel=1e-15)
        assert MC.Pnl == pytest.approx((M.r1 - M.r2) ** 2 / (2 * s), rel=1e-15)

    def test_equal_drifts_kill_the_nonlinear_term(self):
        mc = market_constants(MarketParams(r1=0.2, r2=0.2))
        assert mc.Pnl == 0.0

    def test_equal_volatilities_simplify_pxx(self):
        mc = market_constants(MarketParams(sigma1=0.3, sigma2=0.3))
        assert mc.Pxx == pytest.approx(0.09 / 4.0, rel=1e-15)

    def test_market_params_validation(self):
        with pytest.raises(ValueError):
            MarketParams(sigma1=0.0)
        with pytest.raises(ValueError):
            MarketParams(alpha=-1.0)
        with pytest.raises(ValueError):
            MarketParams(horizon=0.0)


class TestCCoefficients:
    def test_start_point_regression(self):
        c0, c1, c2 = c_coefficients(0.0, 0.0, 1.0, MC, M.alpha, M.horizon)
        assert (c0, c1, c2) == pytest.approx(C_START, rel=1e-14)

    def test_terminal_condition_is_mean_variance_utility(self):
        # at t = T the quadratic must collapse to w - (alpha/2) w^2, w = b0 + b1 x
        for b0, b1, x in [(0.0, 1.0, 1.3), (-0.4, 0.7, 0.9), (0.8, 1.2, 2.1)]:
            c0, c1, c2 = c_coefficients(M.horizon, b0, b1, MC, M.alpha, M.horizon)
            got = c0 + c1 * x + c2 * x * x
            w = b0 + b1 * x
            assert got == pytest.approx(utility_eval(UtilityFunction.mean_variance(M.alpha), w), rel=1e-14)

    def test_ode_residuals_by_central_differences(self):
        h = 1e-6
        for t, _, b0, b1 in random_points(25, seed=5):
            t = min(t, M.horizon - 2 * h)
            cm = c_coefficients(t - h, b0, b1, MC, M.alpha, M.horizon)
            c0, c1, c2 = c_coefficients(t, b0, b1, MC, M.alpha, M.horizon)
            cp = c_coefficients(t + h, b0, b1, MC, M.alpha, M.horizon)
            dc0, dc1, dc2 = ((p - m) / (2 * h) for p, m in zip(cp, cm))
            r0 = dc0 - MC.Pnl * c1 * c1 / (2.0 * c2)
            r1 = dc1 + (MC.Px - 2.0 * MC.Pnl) * c1
            r2 = dc2 + 2.0 * (MC.Px + MC.Pxx - MC.Pnl) * c2
            scale0 = max(1.0, abs(dc0))
            assert abs(r0) / scale0 <= 1e-6
            assert abs(r1) / max(1.0, abs(c1)) <= 1e-6
            assert abs(r2) / max(1.0, abs(c2)) <= 1e-6

    def test_wealth_curvature_always_negative(self):
        for t, _, b0, b1 in random_points(200, seed=9):
            assert c_coefficients(t, b0, b1, MC, M.alpha, M.horizon)[2] < 0.0


class TestOptimalControl:
    def test_start_point_value(self):
        assert optimal_control(0.0, 1.0, 0.0, 1.0, MC, M.alpha, M.horizon, M) == pytest.approx(
            A_STAR_START, rel=1e-14
        )

    def test_equal_drifts_constant_mix(self):
        m = MarketParams(r1=0.2, r2=0.2)
        mc = market_constants(m)
        s = m.sigma1**2 + m.sigma2**2
        for t, x in [(0.0, 1.0), (0.5, 0.4), (0.9, 2.0)]:
            assert optimal_control(t, x, 0.0, 1.0, mc, m.alpha, m.horizon, m) == pytest.approx(
                m.sigma2**2 / s, rel=1e-14
            )

    def test_large_wealth_limit(self):
        s = M.sigma1**2 + M.sigma2**2
        limit = M.sigma2**2 / s - (M.r1 - M.r2) / s
        got = optimal_control(0.0, 1e9, 0.0, 1.0, MC, M.alpha, M.horizon, M)
        assert got == pytest.approx(limit, abs=1e-7)

    def test_zero_wealth_is_a_structured_error(self):
        with pytest.raises(SingularControlError):
            optimal_control(0.5, 0.0, 0.0, 1.0, MC, M.alpha, M.horizon, M)

    def test_matches_grid_argmax_of_q(self):
        for t, x, b0, b1 in random_points(5, seed=77):
            astar = optimal_control(t, x, b0, b1, MC, M.alpha, M.horizon, M)
            grid = astar + np.linspace(-2.0, 2.0, 40_001)
            qv = [optimal_q(t, x, b0, b1, a, MC, M.alpha, M.horizon, M) for a in grid]
            assert abs(grid[int(np.argmax(qv))] - astar) <= 1.0e-4


class TestOptimalQ:
    def test_zero_at_the_optimal_action(self):
        for t, x, b0, b1 in random_points(20, seed=3):
            astar = optimal_control(t, x, b0, b1, MC, M.alpha, M.horizon, M)
            assert optimal_q(t, x, b0, b1, astar, MC, M.alpha, M.horizon, M) == 0.0

    def test_negative_away_from_it(self):
        for t, x, b0, b1 in random_points(20, seed=4):
            astar = optimal_control(t, x, b0, b1, MC, M.alpha, M.horizon, M)
            for da in (-0.5, 0.3, 1.7):
                assert optimal_q(t, x, b0, b1, astar + da, MC, M.alpha, M.horizon, M) < 0.0

    def test_value_at_start(self):
        assert optimal_value(0.0, 1.0, 0.0, 1.0, MC, M.alpha, M.horizon) == pytest.approx(
            J_STAR_START, rel=1e-14
        )


class TestOptimalParams:
    def test_benchmark_values(self):
        theta, psi = optimal_params(M)
        assert theta.as_array() == pytest.approx([PX, PXX, PNL], rel=1e-15)
        assert psi.as_array() == pytest.approx(PSI_STAR, rel=1e-14)
        printed = tuple(round(v, 4) for v in psi.as_array())
        assert printed == (0.5902, -4.0984, 0.0244, -0.2189, -0.0220)

    def test_sv_is_total_variance_exactly(self):
        _, psi = optimal_params(M)
        assert psi.psi_sv == M.sigma1**2 + M.sigma2**2


class TestFamilies:
    def test_theta_family_is_well_specified(self):
        jfam, _ = oracle_families(M)
        for t, x, b0, b1 in random_points(200):
            want = optimal_value(t, x, b0, b1, MC, M.alpha, M.horizon)
            got = jfam.value(t, x, b0, b1)
            assert abs(got - want) <= 1e-12 * max(1.0, abs(want))

    def test_psi_family_is_well_specified(self):
        _, qfam = oracle_families(M)
        rng = np.random.default_rng(8)
        for t, x, b0, b1 in random_points(200):
            a = rng.uniform(-2.0, 3.0)
            want = optimal_q(t, x, b0, b1, a, MC, M.alpha, M.horizon, M)
            got = qfam.value(t, x, b0, b1, a)
            assert abs(got - want) <= 1e-12 * max(1.0, abs(want))

    def test_theta_gradient_matches_finite_differences(self):
        jfam = ThetaValueFamily(M.alpha, M.horizon, [0.21, 0.004, 0.18])
        h = 1e-6
        for t, x, b0, b1 in random_points(10, seed=14):
            grad = jfam.param_gradient(t, x, b0, b1)
            base = jfam.params
            for i in range(3):
                up, dn = base.copy(), base.copy()
                up[i] += h
                dn[i] -= h
                fd = (
                    ThetaValueFamily(M.alpha, M.horizon, up).value(t, x, b0, b1)
                    - ThetaValueFamily(M.alpha, M.horizon, dn).value(t, x, b0, b1)
                ) / (2 * h)
                assert abs(fd - grad[i]) <= 1e-5 * max(1.0, abs(grad[i]))

    def test_psi_gradient_matches_finite_differences(self):
        qfam = PsiQFamily(M.alpha, M.horizon, [0.55, -3.9, 0.03, -0.2, -0.03])
        h = 1e-6
        rng = np.random.default_rng(15)
        for t, x, b0, b1 in random_points(10, seed=16):
            a = rng.uniform(-1.0, 2.5)
            grad = qfam.param_gradient(t, x, b0, b1, a)
            base = qfam.params
            for i in range(5):
                up, dn = base.copy(), base.copy()
                up[i] += h
                dn[i] -= h
                fd = (
                    PsiQFamily(M.alpha, M.horizon, up).value(t, x, b0, b1, a)
                    - PsiQFamily(M.alpha, M.horizon, dn).value(t, x, b0, b1, a)
                ) / (2 * h)
                assert abs(fd - grad[i]) <= 1e-5 * max(1.0, abs(grad[i]))

    def test_analytic_derivatives_match_finite_differences(self):
        jfam, _ = oracle_families(M)
        for t, x, b0, b1 in random_points(10, seed=17):
            t = float(np.clip(t, 1e-3, M.horizon - 1e-3))
            dt_an, dx_an, dxx_an = jfam.derivatives(t, x, b0, b1)
            h1, h2 = 1e-6, 1e-4
            fd_t = (jfam.value(t + h1, x, b0, b1) - jfam.value(t - h1, x, b0, b1)) / (2 * h1)
            fd_x = (jfam.value(t, x + h1, b0, b1) - jfam.value(t, x - h1, b0, b1)) / (2 * h1)
            fd_xx = (
                jfam.value(t, x + h2, b0, b1)
                - 2 * jfam.value(t, x, b0, b1)
                + jfam.value(t, x - h2, b0, b1)
            ) / (h2 * h2)
            assert fd_t == pytest.approx(dt_an, rel=1e-6, abs=1e-8)
            assert fd_x == pytest.approx(dx_an, rel=1e-6, abs=1e-8)
            assert fd_xx == pytest.approx(dxx_an, rel=1e-4, abs=1e-6)

    def test_psi_family_rejects_nonpositive_curvature_scale(self):
        with pytest.raises(ValueError):
            PsiQFamily(M.alpha, M.horizon, [0.5, -4.0, 0.0, -0.2, -0.02])

    def test_psi_family_singular_at_zero_wealth(self):
        _, qfam = oracle_families(M)
        with pytest.raises(SingularControlError):
            qfam.value(0.5, 0.0, 0.0, 1.0, 0.3)


class TestPolicies:
    def test_psi_control_policy_reproduces_closed_form(self):
        _, qfam = oracle_families(M)
        policy = PsiControlPolicy(qfam, b0=0.0, b1=1.0)
        rng = np.random.default_rng(0)
        for t, x in [(0.0, 1.0), (0.3, 1.2), (0.7, 0.8), (0.99, 2.0)]:
            got = policy.sample(t, np.array([x]), rng)[0]
            want = optimal_control(t, x, 0.0, 1.0, MC, M.alpha, M.horizon, M)
            assert got == pytest.approx(want, rel=1e-14)

    def test_psi_gibbs_policy_statistics(self):
        _, qfam = oracle_families(M)
        tau = 0.05
        policy = PsiGibbsPolicy(qfam, tau=tau)
        t, x = 0.2, np.array([1.1])
        mean = qfam.action_argmax(t, x, 0.0, 1.0)
        std = math.sqrt(tau / (2.0 * -qfam.action_curvature(t, x, 0.0, 1.0)))
        rng = np.random.default_rng(99)
        draws = np.array([policy.sample(t, x, rng)[0] for _ in range(3000)])
        assert draws.mean() == pytest.approx(mean, abs=4 * std / math.sqrt(3000))
        assert draws.std(ddof=1) == pytest.approx(std, rel=0.08)


class TestEvaluatePolicy:
    def test_constant_mix_against_exact_chain_moments(self):
        # Under constant a the Euler chain has exactly computable moments:
        # E X_K = (1 + mu dt)^K and E X_K^2 = ((1 + mu dt)^2 + s2 dt)^K.
        K, N, a = 500, 4000, 0.5
        dt = M.horizon / K
        mu = a * M.r1 + (1 - a) * M.r2
        s2 = a * a * M.sigma1**2 + (1 - a) ** 2 * M.sigma2**2
        mean_exact = (1 + mu * dt) ** K
        var_exact = ((1 + mu * dt) ** 2 + s2 * dt) ** K - mean_exact**2
        res = evaluate_policy(
            ConstantPolicy(a), M, TimeGrid(0.0, M.horizon, K), N, RandomStream(11)
        )
        assert res.mean_return == pytest.approx(
            mean_exact - M.x0, abs=4 * math.sqrt(var_exact / N)
        )
        assert res.std_return == pytest.approx(
            math.sqrt(var_exact), abs=6 * math.sqrt(var_exact / (2 * N))
        )

    def test_pure_asset_one_mean_growth(self):
        K, N = 400, 3000
        dt = M.horizon / K
        mean_exact = (1 + M.r1 * dt) ** K
        res = evaluate_policy(
            ConstantPolicy(1.0), M, TimeGrid(0.0, M.horizon, K), N, RandomStream(23)
        )
        sd = res.std_return
        assert res.mean_return + M.x0 == pytest.approx(mean_exact, abs=4 * sd / math.sqrt(N))

    def test_mv_identity(self):
        res = evaluate_policy(
            ConstantPolicy(0.5), M, TimeGrid(0.0, M.horizon, 50), 200, RandomStream(2)
        )
        n = res.episodes
        reconstructed = (
            M.x0 + res.mean_return - 0.5 * M.alpha * res.std_return**2 * (n - 1) / n
        )
        assert res.mv_objective == pytest.approx(reconstructed, abs=1e-12)

    def test_curves_end_at_summary_values(self):
        res = evaluate_policy(
            ConstantPolicy(0.5), M, TimeGrid(0.0, M.horizon, 50), 200, RandomStream(2)
        )
        assert res.curve_mean_return.shape == (51,)
        assert res.curve_mean_return[-1] == pytest.approx(res.mean_return, abs=1e-12)
        assert res.curve_mv[-1] == pytest.approx(res.mv_objective, abs=1e-12)
        assert res.curve_mean_return[0] == pytest.approx(0.0, abs=1e-15)

    def test_needs_two_episodes(self):
        with pytest.raises(ValueError):
            evaluate_policy(ConstantPolicy(0.5), M, TimeGrid(0.0, 1.0, 10), 1, RandomStream(0))

    def test_generic_fallback_matches_kernel_path(self):
        class Plain:
            def sample(self, t, x, rng):
                return np.array([0.5])

        grid = TimeGrid(0.0, M.horizon, 50)
        kernel = evaluate_policy(ConstantPolicy(0.5), M, grid, 60, RandomStream(31))
        generic = evaluate_policy(Plain(), M, grid, 60, RandomStream(31))
        assert generic.mean_return == pytest.approx(kernel.mean_return, rel=1e-12)
        assert generic.mv_objective == pytest.approx(kernel.mv_objective, rel=1e-12)


class TestTraining:
    def _config(self, episodes=15, num_steps=50, **overrides):
        defaults = dict(
            episodes=episodes,
            grid=TimeGrid(0.0, M.horizon, num_steps),
            lr_theta=1e-3,
            lr_psi=5e-4,
            tau=0.05,
            x0=M.x0,
        )
        defaults.update(overrides)
        return TrainingConfig(**defaults)

    def test_kernel_agrees_with_generic_trainer(self):
        theta0, psi0 = optimal_params(M)
        config = self._config()
        log_kernel = train(
            M, config, RandomStream(99), theta_init=theta0.as_array(), psi_init=psi0.as_array()
        )
        jfam = ThetaValueFamily(M.alpha, M.horizon, theta0.as_array())
        qfam = PsiQFamily(M.alpha, M.horizon, psi0.as_array())
        log_generic = generic_train(wealth_environment(M), jfam, qfam, config, RandomStream(99))
        assert np.array_equal(log_kernel.params, log_generic.params)
        assert np.allclose(
            log_kernel.terminal_payoff, log_generic.terminal_payoff, rtol=0, atol=1e-12
        )

    def test_zero_learning_rate_freezes_parameters(self):
        theta0, psi0 = optimal_params(M)
        config = self._config(episodes=5, lr_theta=0.0, lr_psi=0.0)
        log = train(M, config, RandomStream(1), theta_init=theta0.as_array(), psi_init=psi0.as_array())
        want = np.concatenate([theta0.as_array(), psi0.as_array()])
        assert np.all(log.params == want)

    def test_requires_explicit_initialization(self):
        with pytest.raises(ValueError):
            train(M, self._config(episodes=2), RandomStream(0))

    def test_default_config_shape(self):
        config = default_training_config(M)
        assert config.episodes == 20_000
        assert config.tau == 0.05
        assert config.normalize_q is False
        assert config.grid.num_steps == 1000
        assert config.grid.horizon == M.horizon

    def test_perturbed_initialization_stays_in_band(self):
        theta_star, psi_star = optimal_params(M)
        star = np.concatenate([theta_star.as_array(), psi_star.as_array()])
        th, ps = perturbed_initialization(M, RandomStream(42), relative=0.2)
        drawn = np.concatenate([th, ps])
        rel = np.abs(drawn - star) / np.abs(star)
        assert np.all(rel <= 0.2 + 1e-12)
        assert np.any(rel > 0.01)
        th2, ps2 = perturbed_initialization(M, RandomStream(42), relative=0.2)
        assert np.array_equal(th, th2) and np.array_equal(ps, ps2)
        th0, ps0 = perturbed_initialization(M, RandomStream(5), relative=0.0)
        assert np.array_equal(th0, theta_star.as_array())
        assert np.array_equal(ps0, psi_star.as_array())


class TestSweep:
    GRID = TimeGrid(0.0, M.horizon, 100)

    def test_unknown_parameter_rejected(self):
        with pytest.raises(ValueError):
            stability_sweep("theta_bogus", [0.0], M, self.GRID, 50, RandomStream(0))

    def test_point_layout_and_determinism(self):
        pts = stability_sweep(
            "psi_a0", [-0.05, 0.0, 0.05], M, self.GRID, 200, RandomStream(7)
        )
        assert [p.offset for p in pts] == [-0.05, 0.0, 0.05]
        assert all(p.param == "psi_a0" and p.episodes == 200 for p in pts)
        assert all(p.stderr > 0 for p in pts)
        again = stability_sweep(
            "psi_a0", [-0.05, 0.0, 0.05], M, self.GRID, 200, RandomStream(7)
        )
        assert [p.mean_update for p in pts] == [p.mean_update for p in again]

    def test_z_score_definition(self):
        p = SweepPoint(param="x", offset=0.0, mean_update=0.3, stderr=0.1, episodes=10)
        assert p.z_score == pytest.approx(3.0)
        assert SweepPoint("x", 0.0, 0.1, 0.0, 10).z_score == math.inf

    def test_update_statistics_shapes(self):
        theta, psi = optimal_params(M)
        mean, stderr = update_statistics(
            theta.as_array(), psi.as_array(), M, self.GRID, 100, RandomStream(3)
        )
        assert mean.shape == (8,) and stderr.shape == (8,)
        assert np.all(np.isfinite(mean)) and np.all(stderr > 0)
        mean_n, _ = update_statistics(
            theta.as_array(), psi.as_array(), M, self.GRID, 100, RandomStream(3), normalize=True
        )
        assert not np.array_equal(mean, mean_n)


class TestBackends:
    def test_numpy_backend_bitwise_identical(self):
        if "numpy" not in available_backends():
            pytest.skip("numpy fallback not registered")
        original = active_backend()
        grid = TimeGrid(0.0, M.horizon, 60)
        theta, psi = optimal_params(M)
        config = TrainingConfig(
            episodes=8, grid=grid, lr_theta=1e-3, lr_psi=5e-4, tau=0.05, x0=M.x0
        )
        try:
            res_a = evaluate_policy(ConstantPolicy(0.5), M, grid, 80, RandomStream(13))
            stats_a = update_statistics(
                theta.as_array(), psi.as_array(), M, grid, 60, RandomStream(17)
            )
            log_a = train(
                M, config, RandomStream(19), theta_init=theta.as_array(), psi_init=psi.as_array()
            )
            set_backend("numpy")
            res_b = evaluate_policy(ConstantPolicy(0.5), M, grid, 80, RandomStream(13))
            stats_b = update_statistics(
                theta.as_array(), psi.as_array(), M, grid, 60, RandomStream(17)
            )
            log_b = train(
                M, config, RandomStream(19), theta_init=theta.as_array(), psi_init=psi.as_array()
            )
        finally:
            set_backend(original)
        assert res_a.mean_return == res_b.mean_return
        assert res_a.mv_objective == res_b.mv_objective
        assert np.array_equal(res_a.curve_mv, res_b.curve_mv)
        assert np.array_equal(stats_a[0], stats_b[0]) and np.array_equal(stats_a[1], stats_b[1])
        assert np.array_equal(log_a.params, log_b.params)


def test_wealth_sde_shape():
    sde = wealth_sde(M)
    assert sde.state_dim == 1 and sde.noise_dim == 2
    mu = sde.drift(0.0, np.array([2.0]), np.array([0.3]))
    assert mu[0] == pytest.approx(2.0 * (0.3 * M.r1 + 0.7 * M.r2), rel=1e-15)
    sig = sde.diffusion(0.0, np.array([2.0]), np.array([0.3]))
    assert sig.shape == (1, 2)
    assert sig[0, 0] == pytest.approx(2.0 * 0.3 * M.sigma1, rel=1e-15)
    assert sig[0, 1] == pytest.approx(2.0 * 0.7 * M.sigma2, rel=1e-15)
