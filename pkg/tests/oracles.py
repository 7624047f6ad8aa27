"""Independent reference computations used by the tests.

Nothing here imports the package: each oracle is a separate route to
the number being checked.
"""

from __future__ import annotations

import math
from fractions import Fraction

import mpmath


def kummer_exact(a: float, b: float, z: float, terms: int = 200) -> float:
    """1F1(a; b; z) from `terms` terms summed exactly in rationals."""
    a_, b_, z_ = Fraction(a), Fraction(b), Fraction(z)
    term = Fraction(1)
    total = Fraction(1)
    for k in range(terms - 1):
        term = term * (a_ + k) / (b_ + k) * z_ / (k + 1)
        total += term
    return float(total)


def positive_quadratic_root(A: float, B: float, C: float, dps: int = 50) -> float:
    """Positive root of A b^2 + B b + C = 0 at `dps` decimal digits."""
    with mpmath.workdps(dps):
        A_, B_, C_ = mpmath.mpf(A), mpmath.mpf(B), mpmath.mpf(C)
        disc = mpmath.sqrt(B_ * B_ - 4 * A_ * C_)
        return float((-B_ + disc) / (2 * A_))


def gbm_beta(alpha: float, sigma: float, rho: float) -> float:
    """sigma^2/2 b(b-1) + alpha b - rho = 0."""
    return positive_quadratic_root(0.5 * sigma * sigma, alpha - 0.5 * sigma * sigma, -rho)


def abm_beta(alpha: float, sigma: float, rho: float) -> float:
    """sigma^2/2 b^2 + alpha b - rho = 0."""
    return positive_quadratic_root(0.5 * sigma * sigma, alpha, -rho)


def gbm_hitting_bias_constant(beta: float, sigma: float, x0: float, p: float) -> float:
    """C in E exp(-rho tau) ~ (x0/p)^beta - C sqrt(dt) under discrete monitoring.

    Monitoring only at grid times acts like a barrier raised by
    0.5826 sigma sqrt(dt) in log space (the Broadie-Glasserman-Kou shift,
    0.5826 = -zeta(1/2)/sqrt(2 pi)), so the target (x0/p)^beta is scaled
    by exp(-beta 0.5826 sigma sqrt(dt)).
    """
    shift = -float(mpmath.zeta(0.5)) / math.sqrt(2.0 * math.pi)
    return (x0 / p) ** beta * beta * shift * sigma
