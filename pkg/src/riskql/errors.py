"""Structured exceptions shared across the package.

All numeric failure modes raise one of these types so callers (and the CLI,
which maps them onto exit codes) can react without string matching.
"""

from __future__ import annotations

__all__ = [
    "RiskqlError",
    "NumericDomainError",
    "TrajectoryDivergenceError",
    "UnsupportedKindError",
    "GibbsNormalizationError",
    "TrainingDivergedError",
    "UnboundedObjectiveError",
    "SingularControlError",
    "ConfigError",
]


class RiskqlError(Exception):
    """Base class for all package-specific errors."""


class NumericDomainError(RiskqlError):
    """A numeric routine produced or received a value outside its domain.

    ``component`` names the offending piece (e.g. ``"drift"``).
    """

    def __init__(self, message: str, component: str | None = None):
        super().__init__(message if component is None else f"{component}: {message}")
        self.component = component


class TrajectoryDivergenceError(RiskqlError):
    """A simulated state became non-finite; ``step`` is the failing index."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


class UnsupportedKindError(RiskqlError):
    """Requested an operation a utility kind does not support."""


class GibbsNormalizationError(RiskqlError):
    """The Gibbs density cannot be normalized (e.g. κ ≥ 0 on an unbounded range)."""


class TrainingDivergedError(RiskqlError):
    """A parameter left its divergence-guard bound; ``episode`` is the index."""

    def __init__(self, message: str, episode: int):
        super().__init__(f"{message} (episode {episode})")
        self.episode = episode


class UnboundedObjectiveError(RiskqlError):
    """A scalar objective kept increasing past the configured bracket range."""


class SingularControlError(RiskqlError):
    """The closed-form control is singular at the requested state (x = 0)."""


class ConfigError(RiskqlError):
    """Invalid run configuration (unknown key, bad type, missing file...)."""
