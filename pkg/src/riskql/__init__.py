"""Risk-sensitive continuous-time q-learning toolkit.

The package is organized bottom-up:

* :mod:`riskql.streams`, :mod:`riskql.engine` -- seeded random streams and
  the Euler-Maruyama simulator for controlled SDEs.
* :mod:`riskql.oce` -- optimized certainty equivalents (utility functions,
  the variational estimate, closed forms).
* :mod:`riskql.augmentation` -- the state augmentation that turns an OCE
  objective into a standard expected-reward problem.
* :mod:`riskql.qlearning` -- Gibbs policies, TD updates and the training
  loop over parametric (J, q) families.
* :mod:`riskql.portfolio` -- the mean-variance benchmark market with its
  closed-form optimum, plus fast evaluation/training/sweep drivers.
* :mod:`riskql.budget` -- the scalar budget layer that recovers the
  original risk-sensitive value from the augmented one.
* :mod:`riskql.diagnostics` -- martingale, PDE and expansion checks.

Heavy loops run on numba when available; set ``RISKQL_BACKEND=numpy`` to
force the pure-numpy fallback (bitwise-identical results).
"""

from .errors import (
    ConfigError,
    GibbsNormalizationError,
    NumericDomainError,
    RiskqlError,
    SingularControlError,
    TrainingDivergedError,
    TrajectoryDivergenceError,
    UnboundedObjectiveError,
    UnsupportedKindError,
)
from .streams import RandomStream
from .engine import (
    ActionSpace,
    ConstantPolicy,
    ControlledSde,
    Policy,
    TimeGrid,
    Trajectory,
    brownian_increments,
    euler_step,
    simulate,
)
from .oce import (
    OceEstimate,
    UtilityFunction,
    expected_shortfall,
    oce_closed_form,
    oce_estimate,
    utility_eval,
)
from .augmentation import (
    AugmentedSde,
    AugmentedState,
    AugmentedTrajectory,
    RewardSpec,
    StateOnlyPolicy,
    augment,
    cumulative_reward_path,
    discount_factor,
    simulate_augmented,
    terminal_payoff,
)
from .qlearning import (
    GibbsPolicy,
    ParametricFunctionFamily,
    TrainingConfig,
    TrainingLog,
    episode_update,
    gibbs_sample,
    log_partition,
    normalize_q,
    td_delta,
    train,
)
from .budget import (
    LiftedPolicy,
    LiftedTrajectory,
    lift_policy,
    optimal_budget,
    simulate_lifted,
)
from .budget import optimal_value as optimal_budget_value
from ._kernels import active_backend, available_backends, set_backend
from . import portfolio
from . import diagnostics

__version__ = "0.1.0"

__all__ = [
    "ActionSpace",
    "AugmentedSde",
    "AugmentedState",
    "AugmentedTrajectory",
    "ConfigError",
    "ConstantPolicy",
    "ControlledSde",
    "GibbsNormalizationError",
    "GibbsPolicy",
    "LiftedPolicy",
    "LiftedTrajectory",
    "NumericDomainError",
    "OceEstimate",
    "ParametricFunctionFamily",
    "Policy",
    "RandomStream",
    "RewardSpec",
    "RiskqlError",
    "SingularControlError",
    "StateOnlyPolicy",
    "TimeGrid",
    "TrainingConfig",
    "TrainingDivergedError",
    "TrainingLog",
    "Trajectory",
    "TrajectoryDivergenceError",
    "UnboundedObjectiveError",
    "UnsupportedKindError",
    "UtilityFunction",
    "active_backend",
    "augment",
    "available_backends",
    "brownian_increments",
    "cumulative_reward_path",
    "diagnostics",
    "discount_factor",
    "episode_update",
    "euler_step",
    "expected_shortfall",
    "gibbs_sample",
    "lift_policy",
    "log_partition",
    "normalize_q",
    "oce_closed_form",
    "oce_estimate",
    "optimal_budget",
    "optimal_budget_value",
    "portfolio",
    "set_backend",
    "simulate",
    "simulate_augmented",
    "simulate_lifted",
    "td_delta",
    "terminal_payoff",
    "train",
    "utility_eval",
]
