"""Optimal investment thresholds.

Over threshold strategies the problem reduces to maximising

    h(p) = (p - I) / psi(p),

and V(p; x) = h(p) psi(x) for x < p.  Three independent routes to the
threshold are offered: direct maximisation of h, roots of the
smooth-pasting function psi(p) - (p - I) psi'(p), and the closed forms
for GBM and ABM.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, NoInteriorMaximizer, ParameterError
from .fundamental import CharacteristicRoot, FundamentalSolution, psi_closed_form, solve_characteristic_root
from .processes import ArrayLike, DiffusionSpec, Family, Interval

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class Method(enum.Enum):
    ARGMAX_H = "ArgmaxH"
    SMOOTH_PASTING = "SmoothPasting"
    CLOSED_FORM = "ClosedForm"


@dataclass(frozen=True)
class ThresholdSolution:
    p_star: float
    h_star: float
    method: Method
    psi_ref: FundamentalSolution
    invest_cost: float


class HValue(NamedTuple):
    h: ArrayLike
    h_prime: ArrayLike


class PastingRoot(NamedTuple):
    p: float
    psi2: float
    psi2_sign: int


class LogConvexity(NamedTuple):
    holds: bool
    witness: Optional[tuple[float, float]]


def h_eval(psi: FundamentalSolution, invest_cost: float, p: ArrayLike) -> HValue:
    """h and its derivative [psi - (p - I) psi'] / psi^2 (quotient rule)."""
    psi.domain.require_interior(p)
    f = psi.eval(p)
    f1 = psi.deriv(p)
    h = (p - invest_cost) / f
    return HValue(h, (f - (p - invest_cost) * f1) / (f * f))


def _pasting_ratio(psi: FundamentalSolution, invest_cost: float, p: ArrayLike) -> ArrayLike:
    """1 - (p - I) psi'/psi: same sign as h', free of psi's scale."""
    return 1.0 - (p - invest_cost) * psi.deriv(p) / psi.eval(p)


def value_function(sol: ThresholdSolution, invest_cost: float, x: ArrayLike) -> ArrayLike:
    """V(p*; x): (p* - I) psi(x)/psi(p*) below the threshold, x - I at or above it."""
    psi = sol.psi_ref
    psi.domain.require_interior(x)
    p = sol.p_star
    xx = np.asarray(x, dtype=float)
    below = xx < p
    out = xx - invest_cost
    if np.any(below):
        xb = np.where(below, xx, p)
        cont = (p - invest_cost) * (np.asarray(psi.eval(xb), dtype=float) / float(psi.eval(p)))
        out = np.where(below, cont, out)
    return float(out) if np.ndim(x) == 0 else out


def threshold_value(psi: FundamentalSolution, invest_cost: float, p: float, x: ArrayLike) -> ArrayLike:
    """V(p; x) for an arbitrary threshold p."""
    sol = ThresholdSolution(p, float("nan"), Method.ARGMAX_H, psi, invest_cost)
    return value_function(sol, invest_cost, x)


def search_grid(domain: Interval, lo: float, hi: float, n: int) -> np.ndarray:
    """Geometric spacing on (0, inf)-type domains, linear otherwise."""
    if domain.is_positive_halfline and lo > 0.0:
        return np.geomspace(lo, hi, n)
    return np.linspace(lo, hi, n)


def default_bracket(psi: FundamentalSolution, invest_cost: float) -> tuple[float, float]:
    """(I + 1e-9 scale, min(r - margin, I + 1e6 scale, psi.upper_limit))."""
    dom = psi.domain
    scale = max(1.0, abs(invest_cost))
    lo = max(invest_cost, dom.l) + 1e-9 * scale
    hi = invest_cost + 1e6 * scale
    if dom.upper.is_finite:
        hi = min(hi, dom.r - 1e-9 * max(1.0, abs(dom.r)))
    hi = min(hi, psi.upper_limit)
    if not lo < hi:
        raise ParameterError("bracket", f"empty default search bracket ({lo!r}, {hi!r})")
    return lo, hi


def _check_bracket(psi: FundamentalSolution, invest_cost: float, bracket) -> tuple[float, float]:
    if bracket is None:
        return default_bracket(psi, invest_cost)
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise ParameterError("bracket", f"invalid bracket ({lo!r}, {hi!r})")
    psi.domain.require_interior(np.array([lo, hi]), what="bracket endpoint")
    return lo, hi


def _h_values(psi: FundamentalSolution, invest_cost: float, p: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        h = (p - invest_cost) / np.asarray(psi.eval(p), dtype=float)
    return np.where(np.isfinite(h), h, -np.inf)


def _golden_max(f, a: float, b: float, rtol: float, scale: float) -> float:
    """Golden-section search for a maximum; ties move the bracket left."""
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > rtol * max(abs(a), abs(b), scale):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def maximize_h(
    psi: FundamentalSolution,
    invest_cost: float,
    bracket: Optional[tuple[float, float]] = None,
    n_grid: int = 1000,
    rtol: float = 1e-10,
) -> ThresholdSolution:
    """Maximise h over a bracket: grid scan, golden section, then a polish.

    The polish solves h'(p) = 0 inside the golden-section cell when h'
    changes sign there; the h' sign is exact (analytic) so this recovers
    the digits that comparing nearly equal h values cannot.

    Raises NoInteriorMaximizer when h is still increasing at the upper
    edge of the bracket.
    """
    lo, hi = _check_bracket(psi, invest_cost, bracket)
    grid = search_grid(psi.domain, lo, hi, n_grid)
    h = _h_values(psi, invest_cost, grid)
    i = int(np.argmax(h))
    if i == len(grid) - 1 or not np.isfinite(h[i]):
        raise NoInteriorMaximizer(
            f"h(p) = (p - I)/psi(p) increases up to the search edge p = {float(grid[-1])!r}",
            edge=float(grid[-1]),
            h_edge=float(h[-1]),
        )
    a, b = grid[max(i - 1, 0)], grid[i + 1]
    scale = max(1.0, abs(invest_cost))

    def f(p: float) -> float:
        return float(_h_values(psi, invest_cost, np.array([p]))[0])

    p_gold = _golden_max(f, a, b, rtol, scale)
    p_star = p_gold

    ga, gb = _pasting_ratio(psi, invest_cost, a), _pasting_ratio(psi, invest_cost, b)
    if ga > 0.0 and gb < 0.0:
        root = brentq(lambda p: _pasting_ratio(psi, invest_cost, p), a, b, xtol=1e-300, rtol=1e-15, maxiter=500)
        # h' goes + to - across the cell, so the root is a local maximum; the
        # guard only allows for rounding noise in h (about beta p eps for exp)
        if f(root) >= f(p_gold) - 1e-12 * abs(f(p_gold)):
            p_star = root
    return ThresholdSolution(p_star, f(p_star), Method.ARGMAX_H, psi, invest_cost)


def solve_smooth_pasting(
    psi: FundamentalSolution,
    invest_cost: float,
    bracket: Optional[tuple[float, float]] = None,
    n_grid: int = 2000,
) -> list[PastingRoot]:
    """All sign changes of psi(p) - (p - I) psi'(p) on a scan grid, refined.

    Each root carries psi''(root) and its sign for the free-boundary
    classification.  An empty list means no sign change was seen.
    """
    lo, hi = _check_bracket(psi, invest_cost, bracket)
    grid = search_grid(psi.domain, lo, hi, n_grid)
    g = np.asarray(_pasting_ratio(psi, invest_cost, grid), dtype=float)
    if not np.all(np.isfinite(g)):
        bad = grid[~np.isfinite(g)][0]
        raise DomainError(f"smooth-pasting function is not finite at p = {bad!r}")

    def fn(p: float) -> float:
        return float(_pasting_ratio(psi, invest_cost, p))

    roots = []
    for k in range(len(grid)):
        if g[k] == 0.0:
            roots.append(float(grid[k]))
        elif k + 1 < len(grid) and g[k] * g[k + 1] < 0.0:
            roots.append(brentq(fn, grid[k], grid[k + 1], xtol=1e-300, rtol=1e-15, maxiter=500))
    out = []
    for p in roots:
        d2 = float(psi.deriv2(p))
        out.append(PastingRoot(p, d2, int(np.sign(d2))))
    return out


def closed_form_threshold(spec: DiffusionSpec, root: Optional[CharacteristicRoot] = None) -> ThresholdSolution:
    """p* = beta I/(beta - 1) for GBM and p* = I + 1/beta for ABM."""
    if spec.family not in (Family.GBM, Family.ABM):
        raise ParameterError("family", f"no closed-form threshold for {spec.family.value}")
    if root is None:
        root = solve_characteristic_root(spec)
    psi = psi_closed_form(spec, root)
    invest_cost = spec.invest_cost
    beta = root.beta
    if spec.family is Family.GBM:
        if beta <= 1.0:
            raise NoInteriorMaximizer(
                f"beta = {beta!r} <= 1: h(p) = (p - I)/p**beta never turns down",
                edge=math.inf,
            )
        p_star = beta / (beta - 1.0) * invest_cost
    else:
        p_star = invest_cost + 1.0 / beta
    h_star = (p_star - invest_cost) / float(psi.eval(p_star))
    return ThresholdSolution(p_star, h_star, Method.CLOSED_FORM, psi, invest_cost)


def check_log_convexity(psi: FundamentalSolution, grid: ArrayLike) -> LogConvexity:
    """Is psi'/psi nondecreasing along the grid?  Returns a failing pair if not."""
    grid = np.sort(np.asarray(grid, dtype=float))
    if grid.size < 3:
        raise ValueError("log-convexity check needs at least 3 grid points")
    psi.domain.require_interior(grid)
    ratio = np.asarray(psi.deriv(grid), dtype=float) / np.asarray(psi.eval(grid), dtype=float)
    tol = 1e-12 * np.maximum(1.0, np.abs(ratio[:-1]))
    drops = np.flatnonzero(ratio[1:] < ratio[:-1] - tol)
    if drops.size:
        k = drops[0]
        return LogConvexity(False, (float(grid[k]), float(grid[k + 1])))
    return LogConvexity(True, None)
