"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ThresholdOptionsError(Exception):
    """Base class for all package errors."""


class ParameterError(ThresholdOptionsError, ValueError):
    """A model parameter lies outside its admissible domain."""

    def __init__(self, param: str, message: str):
        super().__init__(f"{param}: {message}")
        self.param = param
        self.message = message


class DomainError(ThresholdOptionsError, ValueError):
    """A point or interval lies outside the state-space interior."""


class NonPositiveDiffusion(DomainError):
    """sigma(x) <= 0 was observed at an interior point."""

    def __init__(self, x: float, value: float):
        super().__init__(f"diffusion must be positive, got sigma({x!r}) = {value!r}")
        self.x = x
        self.value = value


class SeriesNotConverged(ThresholdOptionsError, ArithmeticError):
    """Kummer series did not reach its tolerance within the term budget."""

    def __init__(self, partial_sum: float, tail_bound: float, n_terms: int):
        super().__init__(
            f"1F1 series did not converge after {n_terms} terms "
            f"(partial sum {partial_sum!r}, tail bound {tail_bound!r})"
        )
        self.partial_sum = partial_sum
        self.tail_bound = tail_bound
        self.n_terms = n_terms


class ShootingError(ThresholdOptionsError, RuntimeError):
    """Numeric construction of the increasing solution failed."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NoInteriorMaximizer(ThresholdOptionsError):
    """h(p) = (p - I)/psi(p) has no interior maximum in the search region.

    This is an outcome rather than a malfunction: the threshold problem
    may simply have no optimal finite threshold for the given process.
    """

    def __init__(self, message: str, edge: float | None = None, h_edge: float | None = None):
        super().__init__(message)
        self.edge = edge
        self.h_edge = h_edge


class ConfigError(ThresholdOptionsError, ValueError):
    """Invalid configuration document (carries the offending key)."""

    def __init__(self, key: str | None, message: str, line: int | None = None):
        where = ""
        if line is not None:
            where = f"line {line}: "
        if key:
            where += f"{key}: "
        super().__init__(where + message)
        self.key = key
        self.line = line


class ExpressionError(ConfigError):
    """Syntax or evaluation error in a coefficient expression."""
