"""Martingale, PDE, expansion, and gradient checks on known-good and
deliberately broken value/q pairs."""

import math

import numpy as np
import pytest

from riskql.augmentation import RewardSpec, StateOnlyPolicy, augment
from riskql.diagnostics import (
    MartingaleReport,
    default_test_functions,
    generator_residual,
    gradient_check,
    hjb_residual,
    martingale_residual,
    q_mean_check,
    qdt_expansion_check,
)
from riskql.engine import ActionSpace, ConstantPolicy, ControlledSde, TimeGrid
from riskql.errors import SingularControlError
from riskql.oce import UtilityFunction
from riskql.portfolio import (
    MarketParams,
    market_constants,
    oracle_families,
    theta_value_family,
    wealth_environment,
)
from riskql.qlearning import GibbsPolicy, ParametricFunctionFamily, log_partition, normalize_q
from riskql.streams import RandomStream

M = MarketParams()
MC = market_constants(M)
JFAM, QFAM = oracle_families(M)
ENV = wealth_environment(M)
GRID = TimeGrid(0.0, M.horizon, 500)
BASELINE = StateOnlyPolicy(ConstantPolicy(np.array([0.5])))


def sample_points(n, with_action=False, seed=3):
    rng = np.random.default_rng(seed)
    pts = []
    for _ in range(n):
        p = (
            rng.uniform(0.0, 1.0),
            rng.uniform(0.3, 2.5),
            rng.uniform(-2.0, 1.0),
            rng.uniform(0.4, 2.0),
        )
        pts.append(p + (rng.uniform(-1.0, 3.0),) if with_action else p)
    return pts


class ShiftedQ:
    """q-family defect: a constant added to every value (breaks the drift)."""

    def __init__(self, inner, offset):
        self.inner, self.offset = inner, offset

    def value(self, t, x, b0, b1, a):
        return self.inner.value(t, x, b0, b1, a) + self.offset


class ScaledC1Value:
    """Value defect: the linear-in-x coefficient scaled by a factor."""

    def __init__(self, inner, factor):
        self.inner, self.factor = inner, factor

    def value(self, t, x, b0, b1):
        c0, c1, c2 = self.inner.coefficients(t, b0, b1)
        xv = float(x[0]) if hasattr(x, "__len__") else float(x)
        return c0 + self.factor * c1 * xv + c2 * xv * xv


class TestMartingaleResidual:
    def test_oracle_pair_under_baseline_policy(self):
        report = martingale_residual(JFAM, QFAM, BASELINE, ENV, GRID, [1.0], 300, RandomStream(5))
        assert report.max_abs_z < 3.0
        assert report.episodes == 300
        assert report.names == ("one", "time", "state", "reward_acc", "value")

    def test_oracle_pair_under_its_own_gibbs_policy(self):
        gibbs = GibbsPolicy(q=QFAM, tau=0.05)
        report = martingale_residual(JFAM, QFAM, gibbs, ENV, GRID, [1.0], 400, RandomStream(15))
        assert report.max_abs_z < 3.0

    def test_shifted_q_defect_is_detected(self):
        report = martingale_residual(
            JFAM, ShiftedQ(QFAM, 0.1), BASELINE, ENV, GRID, [1.0], 100, RandomStream(7)
        )
        # a systematic -0.1*dt per step accumulates to -0.1*T against xi = 1
        assert report.z_scores[0] < -5.0
        assert report.estimates[0] == pytest.approx(-0.1 * M.horizon, rel=0.05)

    def test_scaled_value_defect_is_detected(self):
        report = martingale_residual(
            ScaledC1Value(JFAM, 1.01), QFAM, BASELINE, ENV, GRID, [1.0], 400, RandomStream(8)
        )
        assert report.max_abs_z > 4.0

    def test_custom_test_functions_match_builtin_path(self):
        small = TimeGrid(0.0, M.horizon, 50)
        builtin = martingale_residual(JFAM, QFAM, BASELINE, ENV, small, [1.0], 20, RandomStream(1))
        explicit = martingale_residual(
            JFAM, QFAM, BASELINE, ENV, small, [1.0], 20, RandomStream(1),
            test_functions=default_test_functions(JFAM),
        )
        assert np.array_equal(builtin.estimates, explicit.estimates)
        assert np.array_equal(builtin.stderrs, explicit.stderrs)

    def test_needs_two_episodes(self):
        with pytest.raises(ValueError):
            martingale_residual(JFAM, QFAM, BASELINE, ENV, GRID, [1.0], 1, RandomStream(0))

    def test_report_z_score_edge_cases(self):
        report = MartingaleReport(
            names=("a", "b", "c"),
            estimates=np.array([0.0, 0.5, -0.5]),
            stderrs=np.array([0.0, 0.0, 0.1]),
            episodes=10,
        )
        z = report.z_scores
        assert z[0] == 0.0
        assert z[1] == math.inf
        assert z[2] == pytest.approx(-5.0)
        assert report.max_abs_z == math.inf


class TestHjbResidual:
    def test_oracle_value_solves_the_equation(self):
        res = hjb_residual(JFAM, MC, sample_points(100))
        assert np.max(np.abs(res)) <= 1e-8

    def test_finite_difference_mode_tracks_truncation(self):
        res = hjb_residual(JFAM, MC, sample_points(30), derivatives="fd")
        assert np.max(np.abs(res)) <= 1e-4

    def test_wrong_nonlinear_constant_leaves_residual(self):
        bad = theta_value_family(M.alpha, M.horizon, JFAM.params * np.array([1.0, 1.0, 1.01]))
        res = hjb_residual(bad, MC, sample_points(30))
        assert np.max(np.abs(res)) > 1e-4

    def test_convex_value_is_rejected(self):
        class ConvexJ:
            def value(self, t, x, b0, b1):
                return x * x

        with pytest.raises(SingularControlError):
            hjb_residual(ConvexJ(), MC, [(0.5, 1.0, 0.0, 1.0)], derivatives="fd")

    def test_derivative_mode_validated(self):
        with pytest.raises(ValueError):
            hjb_residual(JFAM, MC, [(0.5, 1.0, 0.0, 1.0)], derivatives="bogus")


class TestGeneratorResidual:
    def test_oracle_pair_identity(self):
        res = generator_residual(JFAM, QFAM, M, sample_points(50, with_action=True))
        assert np.max(np.abs(res)) <= 1e-8

    def test_finite_difference_agreement(self):
        res = generator_residual(
            JFAM, QFAM, M, sample_points(20, with_action=True), derivatives="fd"
        )
        assert np.max(np.abs(res)) <= 1e-4

    def test_mismatched_q_leaves_residual(self):
        res = generator_residual(
            JFAM, ShiftedQ(QFAM, 0.05), M, sample_points(10, with_action=True)
        )
        assert np.min(np.abs(res)) >= 0.05 - 1e-8


class TestQdtExpansion:
    @staticmethod
    def _toy():
        """Geometric Euler chain with linear value: every moment is exact."""
        r, sigma = 0.3, 0.4
        sde = ControlledSde(
            state_dim=1,
            noise_dim=1,
            drift=lambda t, x, a: r * a * x,
            diffusion=lambda t, x, a: sigma * x.reshape(1, 1),
            actions=ActionSpace(dim=1),
        )
        reward = RewardSpec(running=lambda t, x, a: 0.0, terminal=lambda x: float(x[0]), delta=0.0)
        env = augment(sde, reward, UtilityFunction.linear())

        class LinearJ:
            def value(self, t, x, b0, b1):
                return b0 + b1 * float(np.atleast_1d(x)[0])

        class GeneratorQ:
            def value(self, t, x, b0, b1, a):
                return b1 * r * float(a) * float(np.atleast_1d(x)[0])

        return env, LinearJ(), GeneratorQ(), r

    def test_single_step_linear_value_is_exact(self):
        env, lj, gq, r = self._toy()
        # one Euler step, linear J, antithetic pairing: the noise cancels
        # identically and the slope equals the generator with no error at all
        rep = qdt_expansion_check(
            lj, gq, env, 0.0, 1.0, 0.0, 1.0, 0.7, [0.01], 0.01, 10, RandomStream(3)
        )
        assert rep.slopes[0] == pytest.approx(r * 0.7 * 1.0, rel=1e-12)
        assert rep.stderrs[0] == pytest.approx(0.0, abs=1e-12)
        assert rep.gap == pytest.approx(0.0, abs=1e-12)

    def test_slopes_match_exact_chain_moments(self):
        env, lj, gq, r = self._toy()
        a, x, h = 0.7, 1.3, 0.005
        dts = [0.04, 0.02, 0.01]
        rep = qdt_expansion_check(
            lj, gq, env, 0.0, x, 0.0, 1.0, a, dts, h, 400, RandomStream(11)
        )
        g = r * a * h
        for d, slope, se in zip(dts, rep.slopes, rep.stderrs):
            m_steps = round(d / h)
            exact = ((1.0 + g) ** m_steps - 1.0) * x / d
            assert slope == pytest.approx(exact, abs=4.0 * se + 1e-9)
        # the dt -> 0 intercept recovers the generator up to O(sim_dt)
        assert abs(rep.gap) <= 4.0 * rep.extrapolated_stderr + r * a * g * x

    def test_input_validation(self):
        env, lj, gq, _ = self._toy()
        with pytest.raises(ValueError):
            qdt_expansion_check(lj, gq, env, 0.0, 1.0, 0.0, 1.0, 0.5, [0.01, 0.02], 0.01, 10, RandomStream(0))
        with pytest.raises(ValueError):
            qdt_expansion_check(lj, gq, env, 0.0, 1.0, 0.0, 1.0, 0.5, [0.015], 0.01, 10, RandomStream(0))
        with pytest.raises(ValueError):
            qdt_expansion_check(lj, gq, env, 0.0, 1.0, 0.0, 1.0, 0.5, [0.01], 0.01, 1, RandomStream(0))

    def test_portfolio_oracle_brackets_reference(self):
        rep = qdt_expansion_check(
            JFAM, QFAM, ENV, 0.0, 1.0, 0.0, 1.0, 0.9, [0.04, 0.02, 0.01], 0.002, 400, RandomStream(77)
        )
        assert rep.dts.shape == rep.slopes.shape == rep.stderrs.shape == (3,)
        # common-noise slopes: spacing shrinks roughly linearly with dt
        d1, d2 = np.abs(np.diff(rep.slopes))
        assert d2 < d1
        assert abs(rep.gap) <= 5.0 * rep.extrapolated_stderr + 0.02


class TestQMeanCheck:
    T0, X0, B0, B1, TAU = 0.3, np.array([1.2]), -0.4, 0.9, 0.05

    def test_normalized_q_has_zero_mean_identity(self):
        policy = GibbsPolicy(q=QFAM, tau=self.TAU)
        qt = normalize_q(QFAM, self.T0, self.X0, self.B0, self.B1, self.TAU)
        res = q_mean_check(qt, policy, self.TAU, self.T0, self.X0, self.B0, self.B1)
        assert abs(res) <= 1e-10

    def test_raw_q_residual_is_the_log_partition(self):
        policy = GibbsPolicy(q=QFAM, tau=self.TAU)
        raw = lambda a: QFAM.value(self.T0, self.X0, self.B0, self.B1, a)
        res = q_mean_check(raw, policy, self.TAU, self.T0, self.X0, self.B0, self.B1)
        lz = self.TAU * self.B1 * log_partition(QFAM, self.T0, self.X0, self.B0, self.B1, self.TAU)
        assert res == pytest.approx(lz, abs=1e-10)

    def test_bounded_quadrature_branch(self):
        class Opaque:
            quadratic_in_action = False

            def value(self, t, x, b0, b1, a):
                return QFAM.value(t, x, b0, b1, a)

        mean = QFAM.action_argmax(self.T0, self.X0, self.B0, self.B1)
        std = math.sqrt(
            self.TAU * self.B1 / (2.0 * -QFAM.action_curvature(self.T0, self.X0, self.B0, self.B1))
        )
        actions = ActionSpace(lower=mean - 8 * std, upper=mean + 8 * std)
        policy = GibbsPolicy(q=Opaque(), tau=self.TAU, actions=actions)
        qt = normalize_q(QFAM, self.T0, self.X0, self.B0, self.B1, self.TAU, actions=actions)
        res = q_mean_check(qt, policy, self.TAU, self.T0, self.X0, self.B0, self.B1)
        assert abs(res) <= 1e-6


class TestGradientCheck:
    def test_oracle_families_pass(self):
        pts_j = [p for p in sample_points(15, seed=21)]
        pts_q = sample_points(15, with_action=True, seed=22)
        assert gradient_check(JFAM, pts_j) <= 1e-5
        assert gradient_check(QFAM, pts_q) <= 1e-5

    def test_planted_gradient_bug_is_caught(self):
        class DoubledGrad:
            def __init__(self, inner):
                self.inner = inner
                self.n_params = inner.n_params

            @property
            def params(self):
                return self.inner.params

            @params.setter
            def params(self, v):
                self.inner.params = v

            def value(self, *args):
                return self.inner.value(*args)

            def param_gradient(self, *args):
                return 2.0 * self.inner.param_gradient(*args)

        jfam, _ = oracle_families(M)
        assert gradient_check(DoubledGrad(jfam), sample_points(5, seed=23)) > 0.05

    def test_parameters_restored_even_when_value_raises(self):
        class Fragile(ParametricFunctionFamily):
            param_names = ("w",)
            calls = 0

            def value(self, t, x, b0, b1):
                Fragile.calls += 1
                if Fragile.calls > 2:
                    raise RuntimeError("boom")
                return self._params[0] * x

            def param_gradient(self, t, x, b0, b1):
                return np.array([x])

        fam = Fragile([1.5])
        with pytest.raises(RuntimeError):
            gradient_check(fam, [(0.1, 1.0, 0.0, 1.0), (0.2, 2.0, 0.0, 1.0)])
        assert fam.params[0] == 1.5

    def test_step_validation(self):
        with pytest.raises(ValueError):
            gradient_check(JFAM, sample_points(1), h=0.0)
