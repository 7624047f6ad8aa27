"""Confluent hypergeometric function 1F1(a; b; z) by its ascending series.

Only real z >= 0 of moderate size is supported, which covers the
mean-reverting fundamental solutions.  Derivatives use the contiguous
relation d/dz 1F1(a; b; z) = (a/b) 1F1(a+1; b+1; z).
"""

from __future__ import annotations

import math
from typing import NamedTuple, Union

import numpy as np

from .errors import ParameterError, SeriesNotConverged

MAX_TERMS = 10_000


class KummerValue(NamedTuple):
    value: Union[float, np.ndarray]
    deriv_in_z: Union[float, np.ndarray]
    deriv2_in_z: Union[float, np.ndarray]


def _check_b(b: float) -> None:
    if b <= 0.0 and float(b).is_integer():
        raise ParameterError("b", f"1F1 is undefined for non-positive integer b, got {b!r}")


def _series(a: float, b: float, z: np.ndarray, tol: float, max_terms: int) -> np.ndarray:
    """Sum of (a)_k/(b)_k z^k/k!, vectorised over z."""
    total = np.ones_like(z)
    term = np.ones_like(z)
    done = z == 0.0
    for k in range(max_terms):
        if done.all():
            return total
        term = term * ((a + k) / (b + k)) * z / (k + 1)
        total = total + np.where(done, 0.0, term)
        if a + k + 1 == 0.0:
            # (a)_k vanishes from here on: polynomial case
            return total
        # for j >= k+1 the term ratio is bounded by rho_bound
        growth = max(1.0, abs((a + k + 1) / (b + k + 1)))
        rho_bound = growth * np.abs(z) / (k + 2)
        next_term = np.abs(term) * abs((a + k + 1) / (b + k + 1)) * np.abs(z) / (k + 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            tail = np.where(rho_bound < 1.0, next_term / (1.0 - rho_bound), np.inf)
        converged = (k + 1 > np.abs(z)) & (tail <= tol * np.abs(total))
        done = done | converged
    if not done.all():
        bad = np.flatnonzero(~done)[0]
        raise SeriesNotConverged(float(total.flat[bad]), float(np.abs(term).flat[bad]), max_terms)
    return total


def kummer_1f1(
    a: float,
    b: float,
    z: Union[float, np.ndarray],
    tol: float = 1e-15,
    max_terms: int = MAX_TERMS,
) -> KummerValue:
    """1F1(a; b; z) with its first two z-derivatives.

    Summation stops once the term index exceeds |z| and a geometric bound
    on the remaining tail is below ``tol`` relative to the partial sum.
    """
    _check_b(b)
    scalar = np.ndim(z) == 0
    zz = np.atleast_1d(np.asarray(z, dtype=float))
    if np.any(zz < 0.0) or not np.all(np.isfinite(zz)):
        raise ParameterError("z", "only finite z >= 0 is supported")

    value = _series(a, b, zz, tol, max_terms)
    d1 = (a / b) * _series(a + 1.0, b + 1.0, zz, tol, max_terms)
    d2 = (a * (a + 1.0) / (b * (b + 1.0))) * _series(a + 2.0, b + 2.0, zz, tol, max_terms)
    if scalar:
        return KummerValue(float(value[0]), float(d1[0]), float(d2[0]))
    return KummerValue(value, d1, d2)


def kummer_residual(a: float, b: float, z: float, kv: KummerValue) -> tuple[float, float]:
    """Return (|z f'' + (b - z) f' - a f|, scale of the three terms)."""
    t1 = z * kv.deriv2_in_z
    t2 = (b - z) * kv.deriv_in_z
    t3 = a * kv.value
    return abs(t1 + t2 - t3), max(abs(t1), abs(t2), abs(t3), math.ulp(1.0))
