"""Increasing fundamental solution psi of the ODE  a f' + sigma^2 f''/2 = rho f.

Three constructions are provided:

* closed form for GBM (x**beta) and ABM (exp(beta x)),
* Kummer series for the geometric mean-reverting and CIR processes,
* numerical shooting for arbitrary coefficients.

psi is only unique up to a positive factor; everything downstream is
invariant to that factor.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DomainError, ParameterError, ShootingError
from .kummer import kummer_1f1
from .processes import ArrayLike, DiffusionSpec, Endpoint, Family, Interval

# largest exp() argument we let closed forms reach before overflow
_EXP_CAP = 700.0
# largest Kummer argument used by series-based psi
SERIES_Z_CAP = 600.0


class Provenance(enum.Enum):
    CLOSED_FORM = "ClosedForm"
    KUMMER_SERIES = "KummerSeries"
    NUMERIC_ODE = "NumericODE"


@dataclass(frozen=True)
class FundamentalSolution:
    """Evaluable psi with its first and second derivatives.

    ``upper_limit`` is the largest argument at which evaluation is known
    to stay finite; default search brackets never go beyond it.
    """

    eval: Callable[[ArrayLike], ArrayLike]
    deriv: Callable[[ArrayLike], ArrayLike]
    deriv2: Callable[[ArrayLike], ArrayLike]
    domain: Interval
    provenance: Provenance
    normalization_point: Optional[float] = None
    upper_limit: float = math.inf
    multiplier: float = 1.0

    def __call__(self, x: ArrayLike) -> ArrayLike:
        return self.eval(x)

    def scaled(self, c: float) -> "FundamentalSolution":
        """The same solution multiplied by a constant c > 0."""
        if not c > 0.0:
            raise ValueError("psi may only be rescaled by a positive constant")
        f, f1, f2 = self.eval, self.deriv, self.deriv2
        return replace(
            self,
            eval=lambda x: c * f(x),
            deriv=lambda x: c * f1(x),
            deriv2=lambda x: c * f2(x),
            multiplier=self.multiplier * c,
        )


@dataclass(frozen=True)
class CharacteristicRoot:
    """Positive root beta of A beta^2 + B beta + C = 0."""

    beta: float
    family: Family
    coeffs: tuple[float, float, float]
    other_root: float

    @property
    def residual(self) -> float:
        A, B, C = self.coeffs
        return abs((A * self.beta + B) * self.beta + C)


def _quadratic_coeffs(spec: DiffusionSpec) -> tuple[float, float, float]:
    p = spec.params
    rho = spec.rho
    half_s2 = 0.5 * p.sigma * p.sigma
    if spec.family is Family.GBM:
        return half_s2, p.alpha - half_s2, -rho
    if spec.family is Family.ABM:
        return half_s2, p.alpha, -rho
    if spec.family is Family.GEOMETRIC_OU:
        return half_s2, p.alpha * p.xbar - half_s2, -rho
    raise ParameterError("family", f"no characteristic quadratic for {spec.family.value}")


def solve_characteristic_root(spec: DiffusionSpec) -> CharacteristicRoot:
    """Positive root of the family quadratic, cancellation-free."""
    A, B, C = _quadratic_coeffs(spec)
    disc = B * B - 4.0 * A * C
    # A > 0 and C < 0 force disc > B^2 and roots of opposite sign
    if not (A > 0.0 and C < 0.0 and disc > 0.0):
        raise AssertionError(f"characteristic quadratic without a positive root: {A}, {B}, {C}")
    q = -0.5 * (B + math.copysign(math.sqrt(disc), B))
    r1, r2 = q / A, C / q
    beta, other = (r1, r2) if r1 > 0.0 else (r2, r1)
    return CharacteristicRoot(beta=beta, family=spec.family, coeffs=(A, B, C), other_root=other)


def psi_closed_form(spec: DiffusionSpec, root: CharacteristicRoot | None = None) -> FundamentalSolution:
    """x**beta for GBM, exp(beta x) for ABM."""
    if root is None:
        root = solve_characteristic_root(spec)
    if root.family is not spec.family or spec.family not in (Family.GBM, Family.ABM):
        raise ParameterError("family", f"closed form needs a GBM/ABM spec with its own root, got {spec.family.value}")
    return _power_or_exp(spec, root.beta)


def phi_closed_form(spec: DiffusionSpec, root: CharacteristicRoot | None = None) -> FundamentalSolution:
    """Decreasing counterpart: x**beta_minus (GBM) or exp(beta_minus x) (ABM)."""
    if root is None:
        root = solve_characteristic_root(spec)
    if spec.family not in (Family.GBM, Family.ABM):
        raise ParameterError("family", "closed-form decreasing solution needs GBM or ABM")
    return _power_or_exp(spec, root.other_root)


def _power_or_exp(spec: DiffusionSpec, beta: float) -> FundamentalSolution:
    if spec.family is Family.GBM:
        limit = math.exp(min(_EXP_CAP / beta, _EXP_CAP)) if beta > 0 else math.inf
        return FundamentalSolution(
            eval=lambda x: np.power(x, beta),
            deriv=lambda x: beta * np.power(x, beta - 1.0),
            deriv2=lambda x: beta * (beta - 1.0) * np.power(x, beta - 2.0),
            domain=spec.domain,
            provenance=Provenance.CLOSED_FORM,
            upper_limit=limit,
        )
    return FundamentalSolution(
        eval=lambda x: np.exp(beta * np.asarray(x, dtype=float)),
        deriv=lambda x: beta * np.exp(beta * np.asarray(x, dtype=float)),
        deriv2=lambda x: beta * beta * np.exp(beta * np.asarray(x, dtype=float)),
        domain=spec.domain,
        provenance=Provenance.CLOSED_FORM,
        upper_limit=_EXP_CAP / beta if beta > 0 else math.inf,
    )


def _as_output(x: ArrayLike, values: np.ndarray) -> ArrayLike:
    return float(values) if np.ndim(x) == 0 else values


def psi_series(spec: DiffusionSpec, tol: float = 1e-15) -> FundamentalSolution:
    """Kummer-series psi for the mean-reverting families.

    GeometricOU: x**beta * 1F1(beta, 2 beta + 2 alpha xbar/sigma^2; 2 alpha x/sigma^2)
    CIR:         1F1(rho/alpha, 2 alpha xbar/sigma^2; 2 alpha x/sigma^2)
    """
    p = spec.params
    c = 2.0 * p.alpha / (p.sigma * p.sigma)
    upper_limit = SERIES_Z_CAP / c

    if spec.family is Family.GEOMETRIC_OU:
        beta = solve_characteristic_root(spec).beta
        ka, kb = beta, 2.0 * beta + c * p.xbar

        def parts(x):
            xx = np.asarray(x, dtype=float)
            m, m1, m2 = kummer_1f1(ka, kb, c * xx, tol)
            xb = np.power(xx, beta)
            return xx, xb, m, m1, m2

        def ev(x):
            _, xb, m, _, _ = parts(x)
            return _as_output(x, xb * m)

        def d1(x):
            xx, xb, m, m1, _ = parts(x)
            return _as_output(x, xb * (beta / xx * m + c * m1))

        def d2(x):
            xx, xb, m, m1, m2 = parts(x)
            return _as_output(
                x,
                xb * (beta * (beta - 1.0) / (xx * xx) * m + 2.0 * beta * c / xx * m1 + c * c * m2),
            )

    elif spec.family is Family.CIR:
        ka, kb = spec.rho / p.alpha, c * p.xbar

        def ev(x):
            return kummer_1f1(ka, kb, c * np.asarray(x, dtype=float), tol).value

        def d1(x):
            return c * kummer_1f1(ka, kb, c * np.asarray(x, dtype=float), tol).deriv_in_z

        def d2(x):
            return c * c * kummer_1f1(ka, kb, c * np.asarray(x, dtype=float), tol).deriv2_in_z

    else:
        raise ParameterError("family", f"series psi needs GeometricOU or CIR, got {spec.family.value}")

    return FundamentalSolution(
        eval=ev,
        deriv=d1,
        deriv2=d2,
        domain=spec.domain,
        provenance=Provenance.KUMMER_SERIES,
        upper_limit=upper_limit,
    )


def _ode_rhs(spec: DiffusionSpec):
    rho = spec.rho

    def rhs(x, y):
        s = spec.sigma(x)
        return [y[1], 2.0 * (rho * y[0] - spec.a(x) * y[1]) / (s * s)]

    return rhs


def _classify_slope(spec: DiffusionSpec, x0: float, x_end: float, slope: float, rtol: float) -> str:
    """Integrate toward the lower boundary; which of f, f' vanishes first?"""

    def hits_zero(x, y):
        return y[0]

    def turns(x, y):
        return y[1]

    hits_zero.terminal = True
    turns.terminal = True
    sol = solve_ivp(
        _ode_rhs(spec),
        (x0, x_end),
        [1.0, slope],
        method="DOP853",
        rtol=rtol,
        atol=1e-250,
        events=(hits_zero, turns),
    )
    if sol.status == -1:
        raise ShootingError(f"ODE integration failed: {sol.message}", {"slope": slope})
    if len(sol.t_events[0]):
        return "zero"
    if len(sol.t_events[1]):
        return "turn"
    return "ok"


def psi_numeric(
    spec: DiffusionSpec,
    x0: float,
    grid: ArrayLike,
    rtol: float = 1e-12,
    max_bisections: int = 200,
) -> FundamentalSolution:
    """psi by shooting on the initial slope, normalised to psi(x0) = 1.

    Too steep a slope makes f hit zero when integrating toward the lower
    boundary, too shallow a slope makes f' vanish; the increasing
    solution separates the two and is located by bisection on log(slope).
    psi'' is taken from the ODE itself rather than by differentiation.
    """
    grid = np.asarray(grid, dtype=float)
    dom = spec.domain
    dom.require_interior(x0, what="normalisation point")
    dom.require_interior(grid, what="grid point")
    scale = max(1.0, abs(x0), abs(spec.invest_cost))

    l = dom.l
    if dom.lower.is_finite:
        x_end = l + 1e-6 * (x0 - l)
    else:
        x_end = x0 - 50.0 * scale
    width = x0 - x_end

    lo, hi = 1e-8 / width, 1e8 / width
    c_lo = _classify_slope(spec, x0, x_end, lo, rtol)
    c_hi = _classify_slope(spec, x0, x_end, hi, rtol)
    diag = {"x0": x0, "lower_end": x_end, "slope_bracket": (lo, hi), "classes": (c_lo, c_hi)}
    if c_lo == "zero" or c_hi == "turn":
        raise ShootingError("slope bracket does not separate the two trajectory classes", diag)

    n_iter = 0
    while hi / lo - 1.0 > 4e-16 and n_iter < max_bisections:
        mid = math.sqrt(lo * hi)
        if not lo < mid < hi:
            break
        if _classify_slope(spec, x0, x_end, mid, rtol) == "zero":
            hi = mid
        else:
            lo = mid
        n_iter += 1
    slope = math.sqrt(lo * hi)

    gmin, gmax = float(min(grid.min(), x0)), float(max(grid.max(), x0))
    span = max(gmax - gmin, 1e-3 * scale)
    lo_ext = gmin - min(0.01 * span, 0.5 * (gmin - l))
    hi_ext = gmax + min(0.01 * span, 0.5 * (dom.r - gmax))

    rhs = _ode_rhs(spec)
    right = solve_ivp(rhs, (x0, hi_ext), [1.0, slope], method="DOP853", rtol=rtol, atol=1e-250, dense_output=True)
    left = solve_ivp(rhs, (x0, lo_ext), [1.0, slope], method="DOP853", rtol=rtol, atol=1e-250, dense_output=True)
    if right.status != 0 or left.status != 0:
        raise ShootingError("ODE integration failed while building psi", diag)
    r_sol, l_sol = right.sol, left.sol

    def state(x):
        xx = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any((xx < lo_ext) | (xx > hi_ext)):
            raise DomainError(f"numeric psi is only available on [{lo_ext!r}, {hi_ext!r}]")
        out = np.empty((2, xx.size))
        ge = xx >= x0
        if ge.any():
            out[:, ge] = r_sol(xx[ge])
        if (~ge).any():
            out[:, ~ge] = l_sol(xx[~ge])
        out[0, xx == x0] = 1.0
        out[1, xx == x0] = slope
        return xx, out

    def ev(x):
        _, out = state(x)
        return _as_output(x, out[0] if np.ndim(x) else out[0, 0])

    def d1(x):
        _, out = state(x)
        return _as_output(x, out[1] if np.ndim(x) else out[1, 0])

    def d2(x):
        xx, out = state(x)
        s = np.asarray(spec.sigma(xx), dtype=float)
        v = 2.0 * (spec.rho * out[0] - np.asarray(spec.a(xx), dtype=float) * out[1]) / (s * s)
        return _as_output(x, v if np.ndim(x) else v[0])

    psi = FundamentalSolution(
        eval=ev,
        deriv=d1,
        deriv2=d2,
        domain=Interval(Endpoint.finite(lo_ext), Endpoint.finite(hi_ext)),
        provenance=Provenance.NUMERIC_ODE,
        normalization_point=float(x0),
        upper_limit=hi_ext,
    )
    vals, ders = np.asarray(ev(grid)), np.asarray(d1(grid))
    if not (np.all(vals > 0.0) and np.all(ders > 0.0)):
        raise ShootingError("shooting produced a solution that is not positive and increasing", diag)
    return psi


def ode_residual(spec: DiffusionSpec, psi: FundamentalSolution, grid: ArrayLike) -> float:
    """max |a psi' + sigma^2 psi''/2 - rho psi| / (1 + |rho psi|) over the grid."""
    grid = np.asarray(grid, dtype=float)
    spec.domain.require_interior(grid, what="grid point")
    f = np.asarray(psi.eval(grid), dtype=float)
    f1 = np.asarray(psi.deriv(grid), dtype=float)
    f2 = np.asarray(psi.deriv2(grid), dtype=float)
    s = np.asarray(spec.sigma(grid), dtype=float)
    a = np.asarray(spec.a(grid), dtype=float)
    res = np.abs(a * f1 + 0.5 * s * s * f2 - spec.rho * f) / (1.0 + np.abs(spec.rho * f))
    return float(np.max(res))


def build_psi(spec: DiffusionSpec, **numeric_kwargs) -> FundamentalSolution:
    """Pick the natural construction for the spec's family."""
    if spec.family in (Family.GBM, Family.ABM):
        return psi_closed_form(spec)
    if spec.family in (Family.GEOMETRIC_OU, Family.CIR):
        return psi_series(spec)
    return psi_numeric(spec, **numeric_kwargs)
