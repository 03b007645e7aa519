"""Exception types raised across the tuner."""

from __future__ import annotations


class ParetuneError(Exception):
    """Base class for all tuner errors."""


class ConfigError(ParetuneError):
    """Invalid system description, ranges, or config file."""


class EmptyGridSet(ParetuneError):
    pass


class NonPositiveParameter(ParetuneError, ValueError):
    pass


class EmptyAccurateSubspace(ParetuneError):
    """No (cutoff, grid, order) point admits an accurate alpha.

    ``margin`` is the smallest ratio error/threshold found over the lattice
    (> 1 by construction), ``closest`` the perf point that achieved it.
    """

    def __init__(self, message: str, margin: float = float("inf"), closest=None):
        super().__init__(message)
        self.margin = margin
        self.closest = closest


class DegenerateFit(ParetuneError, ValueError):
    pass


class UncoveredOrder(ParetuneError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else ""


class MissingCoverage(ParetuneError):
    pass


class LengthMismatch(ParetuneError, ValueError):
    pass


class UnknownOrder(ParetuneError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class SamplerFailure(ParetuneError):
    """A measurement could not be taken. ``position`` names what was sampled."""

    def __init__(self, message: str, position=None):
        super().__init__(message)
        self.position = position


class SpawnError(SamplerFailure):
    pass


class ParseError(SamplerFailure):
    pass


class NonPositiveTime(SamplerFailure):
    pass
