"""Exception hierarchy shared by every module."""

from __future__ import annotations


class XTeamError(Exception):
    """Base class for all errors raised by xteam."""


class DimensionMismatchError(XTeamError, ValueError):
    pass


class SizeMismatchError(DimensionMismatchError):
    pass


class NonFiniteError(XTeamError, FloatingPointError):
    """A simulated state left the finite region (NaN, Inf or |x| above the guard)."""

    def __init__(self, message: str, replications=()):
        super().__init__(message)
        self.replications = tuple(int(r) for r in replications)


class ActionOutOfBoxError(XTeamError, ValueError):
    pass


class EmptySampleError(XTeamError, ValueError):
    pass


class UnaveragableError(XTeamError, TypeError):
    pass


class ExplosionGuardError(XTeamError):
    pass


class NegativeCostError(XTeamError, ValueError):
    pass


class UnsupportedSizeError(XTeamError, ValueError):
    pass


class SingularDiffusionError(XTeamError, ValueError):
    pass


class UnboundedCostRefusedError(XTeamError, ValueError):
    pass


class NotPositiveDefiniteError(XTeamError, ValueError):
    pass


class DivergenceError(XTeamError, RuntimeError):
    pass


class ConfigError(XTeamError):
    """Invalid experiment configuration; ``errors`` lists (line, message) pairs."""

    def __init__(self, errors):
        self.errors = [(line, msg) for line, msg in errors]
        text = "; ".join(f"line {line}: {msg}" if line else msg for line, msg in self.errors)
        super().__init__(text)


class ParseError(ConfigError):
    pass


class SemanticError(ConfigError):
    pass


class CouplingDecayRefusedError(XTeamError):
    """The L1 weight gap did not decrease in N, so mean-field limit experiments refuse to run."""
