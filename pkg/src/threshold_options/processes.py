"""One-dimensional diffusion processes dX = a(X) dt + sigma(X) dW.

The four named families (geometric and arithmetic Brownian motion, the
geometric mean-reverting process and the square-root CIR process) plus a
``Custom`` family built from arbitrary coefficient callables.  Everything
here is immutable; coefficient callables accept floats or numpy arrays.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import DomainError, NonPositiveDiffusion, ParameterError

ArrayLike = Union[float, np.ndarray]
Coefficient = Callable[[ArrayLike], ArrayLike]


class EndpointKind(enum.Enum):
    FINITE = "finite"
    NEG_INF = "-inf"
    POS_INF = "+inf"


@dataclass(frozen=True)
class Endpoint:
    """Extended-real interval endpoint: a finite value or +/- infinity."""

    kind: EndpointKind
    value: float = 0.0

    @classmethod
    def finite(cls, value: float) -> "Endpoint":
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"finite endpoint requires a finite value, got {value!r}")
        return cls(EndpointKind.FINITE, value)

    @classmethod
    def from_float(cls, value: float) -> "Endpoint":
        if value == math.inf:
            return cls(EndpointKind.POS_INF)
        if value == -math.inf:
            return cls(EndpointKind.NEG_INF)
        return cls.finite(value)

    @property
    def is_finite(self) -> bool:
        return self.kind is EndpointKind.FINITE

    def as_float(self) -> float:
        if self.kind is EndpointKind.POS_INF:
            return math.inf
        if self.kind is EndpointKind.NEG_INF:
            return -math.inf
        return self.value

    def __str__(self) -> str:
        return self.kind.value if not self.is_finite else repr(self.value)


NEG_INF = Endpoint(EndpointKind.NEG_INF)
POS_INF = Endpoint(EndpointKind.POS_INF)


@dataclass(frozen=True)
class Interval:
    """State space D with boundary points l < r.

    Closed ends are recorded but all computation happens on the open
    interior (l, r).
    """

    lower: Endpoint
    upper: Endpoint
    lower_closed: bool = False
    upper_closed: bool = False

    def __post_init__(self):
        if self.lower.kind is EndpointKind.POS_INF or self.upper.kind is EndpointKind.NEG_INF:
            raise ValueError("interval endpoints are in the wrong order")
        if self.lower_closed and not self.lower.is_finite:
            raise ValueError("a closed endpoint must be finite")
        if self.upper_closed and not self.upper.is_finite:
            raise ValueError("a closed endpoint must be finite")
        if not self.l < self.r:
            raise ValueError(f"interval requires l < r, got l={self.l}, r={self.r}")

    @classmethod
    def open(cls, lower: float, upper: float) -> "Interval":
        return cls(Endpoint.from_float(lower), Endpoint.from_float(upper))

    @property
    def l(self) -> float:
        return self.lower.as_float()

    @property
    def r(self) -> float:
        return self.upper.as_float()

    @property
    def is_positive_halfline(self) -> bool:
        """True for (0, inf)-type domains where geometric grids are natural."""
        return self.lower.is_finite and self.l >= 0.0 and not self.upper.is_finite

    def contains_interior(self, x: ArrayLike) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all((x > self.l) & (x < self.r)))

    def require_interior(self, x: ArrayLike, what: str = "point") -> None:
        if not self.contains_interior(x):
            xs = np.atleast_1d(np.asarray(x, dtype=float))
            bad = xs[~((xs > self.l) & (xs < self.r))]
            raise DomainError(f"{what} {bad[0]!r} is outside the interior ({self.l}, {self.r})")

    def __str__(self) -> str:
        lb = "[" if self.lower_closed else "("
        rb = "]" if self.upper_closed else ")"
        return f"{lb}{self.lower}, {self.upper}{rb}"


POSITIVE_HALFLINE = Interval(Endpoint.finite(0.0), POS_INF)
REAL_LINE = Interval(NEG_INF, POS_INF)


class Family(enum.Enum):
    GBM = "GBM"
    ABM = "ABM"
    GEOMETRIC_OU = "GeometricOU"
    CIR = "CIR"
    CUSTOM = "Custom"


@dataclass(frozen=True)
class GBMParams:
    """dX = X (alpha dt + sigma dW)."""

    alpha: float
    sigma: float


@dataclass(frozen=True)
class ABMParams:
    """dX = alpha dt + sigma dW."""

    alpha: float
    sigma: float


@dataclass(frozen=True)
class GeometricOUParams:
    """dX = alpha (xbar - X) X dt + sigma X dW."""

    alpha: float
    xbar: float
    sigma: float


@dataclass(frozen=True)
class CIRParams:
    """dX = alpha (xbar - X) dt + sigma sqrt(X) dW."""

    alpha: float
    xbar: float
    sigma: float


FamilyParams = Union[GBMParams, ABMParams, GeometricOUParams, CIRParams]

_PARAM_TYPES = {
    Family.GBM: GBMParams,
    Family.ABM: ABMParams,
    Family.GEOMETRIC_OU: GeometricOUParams,
    Family.CIR: CIRParams,
}


@dataclass(frozen=True)
class DiffusionSpec:
    """A problem instance: the diffusion, discount rate rho and investment cost I."""

    drift: Coefficient
    diffusion: Coefficient
    domain: Interval
    rho: float
    invest_cost: float
    family: Family = Family.CUSTOM
    params: FamilyParams | None = None
    label: str = field(default="", compare=False)

    def a(self, x: ArrayLike) -> ArrayLike:
        return self.drift(x)

    def sigma(self, x: ArrayLike) -> ArrayLike:
        """Diffusion coefficient, checked for positivity at every point."""
        s = self.diffusion(x)
        s_arr = np.asarray(s, dtype=float)
        bad = ~(s_arr > 0.0)
        if np.any(bad):
            xs = np.broadcast_to(np.asarray(x, dtype=float), s_arr.shape)
            idx = np.flatnonzero(bad.ravel())[0] if s_arr.ndim else None
            if idx is None:
                raise NonPositiveDiffusion(float(xs), float(s_arr))
            raise NonPositiveDiffusion(float(xs.ravel()[idx]), float(s_arr.ravel()[idx]))
        return s

    @property
    def scale(self) -> float:
        """Characteristic magnitude used to make tolerances dimensionless."""
        return max(1.0, abs(self.invest_cost))


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (math.isfinite(value) and value > 0.0):
        raise ParameterError(name, f"must be positive and finite, got {value!r}")
    return value


def _finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ParameterError(name, f"must be finite, got {value!r}")
    return value


def _check_rate_and_cost(rho: float, invest_cost: float, domain: Interval) -> tuple[float, float]:
    rho = _positive("rho", rho)
    invest_cost = float(invest_cost)
    if not (math.isfinite(invest_cost) and invest_cost >= 0.0):
        raise ParameterError("invest_cost", f"must be finite and non-negative, got {invest_cost!r}")
    if not invest_cost < domain.r:
        raise ParameterError(
            "invest_cost",
            f"requires I < r, got I = {invest_cost!r} with upper boundary r = {domain.r!r} "
            "(investing would never pay)",
        )
    return rho, invest_cost


def make_family(
    tag: Family | str, params: FamilyParams, rho: float, invest_cost: float
) -> DiffusionSpec:
    """Build a named-family problem instance with exact SDE coefficients."""
    family = Family(tag) if not isinstance(tag, Family) else tag
    if family is Family.CUSTOM:
        raise ParameterError("family", "use make_custom for custom coefficients")
    expected = _PARAM_TYPES[family]
    if not isinstance(params, expected):
        raise ParameterError("params", f"{family.value} expects {expected.__name__}")

    sigma = _positive("sigma", params.sigma)
    if family is Family.GBM:
        alpha = _finite("alpha", params.alpha)
        domain = POSITIVE_HALFLINE
        drift = lambda x: alpha * x
        diffusion = lambda x: sigma * x
    elif family is Family.ABM:
        alpha = _finite("alpha", params.alpha)
        domain = REAL_LINE
        drift = lambda x: alpha + 0.0 * x
        diffusion = lambda x: sigma + 0.0 * x
    else:
        alpha = _positive("alpha", params.alpha)
        xbar = _positive("xbar", params.xbar)
        domain = POSITIVE_HALFLINE
        if family is Family.GEOMETRIC_OU:
            drift = lambda x: alpha * (xbar - x) * x
            diffusion = lambda x: sigma * x
        else:
            drift = lambda x: alpha * (xbar - x)
            diffusion = lambda x: sigma * np.sqrt(x)

    rho, invest_cost = _check_rate_and_cost(rho, invest_cost, domain)
    return DiffusionSpec(
        drift=drift,
        diffusion=diffusion,
        domain=domain,
        rho=rho,
        invest_cost=invest_cost,
        family=family,
        params=params,
        label=family.value,
    )


def _probe_points(domain: Interval) -> list[float]:
    # off-lattice fractions so that probes rarely hit special points
    fracs = (0.1234567, 0.5, 0.8765433)
    l, r = domain.l, domain.r
    if domain.lower.is_finite and domain.upper.is_finite:
        return [l + f * (r - l) for f in fracs]
    if domain.lower.is_finite:
        base = max(1.0, abs(l))
        return [l + f * base for f in (0.1234567, 1.0, 7.654321)]
    if domain.upper.is_finite:
        base = max(1.0, abs(r))
        return [r - f * base for f in (0.1234567, 1.0, 7.654321)]
    return [-1.2345678, 0.3141593, 2.7182818]


def make_custom(
    drift: Coefficient,
    diffusion: Coefficient,
    domain: Interval,
    rho: float,
    invest_cost: float,
    label: str = "Custom",
) -> DiffusionSpec:
    """Problem instance from arbitrary coefficients.

    sigma is probed at a few interior points now and checked again at
    every later evaluation through :meth:`DiffusionSpec.sigma`.
    """
    rho, invest_cost = _check_rate_and_cost(rho, invest_cost, domain)
    spec = DiffusionSpec(
        drift=drift,
        diffusion=diffusion,
        domain=domain,
        rho=rho,
        invest_cost=invest_cost,
        family=Family.CUSTOM,
        params=None,
        label=label,
    )
    for x in _probe_points(domain):
        spec.sigma(x)
    return spec


def apply_generator(spec: DiffusionSpec, f: ArrayLike, f1: ArrayLike, f2: ArrayLike, x: ArrayLike) -> ArrayLike:
    """(L f)(x) = a(x) f'(x) + sigma(x)^2 f''(x) / 2, given f' and f'' at x.

    ``f`` itself does not enter the generator; it is accepted so that the
    call mirrors the (f, f', f'') triple produced by fundamental solutions.
    """
    del f
    spec.domain.require_interior(x)
    s = spec.sigma(x)
    return spec.a(x) * f1 + 0.5 * s * s * f2


@dataclass(frozen=True)
class RegularityReport:
    finite: bool
    integral_estimate: float
    evidence: str = ""


def check_regularity(
    spec: DiffusionSpec,
    x: float,
    epsilon: float,
    rtol: float = 1e-9,
    max_depth: int = 20,
) -> RegularityReport:
    """Estimate the local integral of (1 + |a|)/sigma^2 over [x - eps, x + eps].

    Adaptive Simpson quadrature; a panel that has not met the tolerance
    after ``max_depth`` halvings, or a non-finite integrand value, makes
    the report non-finite.  The check is numerical evidence only.
    """
    lo, hi = x - epsilon, x + epsilon
    if not epsilon > 0.0:
        raise DomainError(f"epsilon must be positive, got {epsilon!r}")
    spec.domain.require_interior(np.array([lo, hi]), what="regularity interval endpoint")

    def integrand(y: float) -> float:
        s = float(spec.diffusion(y))
        if not (math.isfinite(s) and s > 0.0):
            return math.inf
        return (1.0 + abs(float(spec.drift(y)))) / (s * s)

    fa, fm, fb = integrand(lo), integrand(x), integrand(hi)
    for y, fy in ((lo, fa), (x, fm), (hi, fb)):
        if not math.isfinite(fy):
            return RegularityReport(False, math.inf, f"integrand not finite at y={y!r}")
    width = hi - lo
    whole = width / 6.0 * (fa + 4.0 * fm + fb)
    scale = abs(whole) if whole != 0.0 else 1.0

    total = 0.0
    stack = [(lo, hi, fa, fm, fb, whole, 0)]
    while stack:
        a, b, fa_, fm_, fb_, s_ab, depth = stack.pop()
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = integrand(lm), integrand(rm)
        for y, fy in ((lm, flm), (rm, frm)):
            if not math.isfinite(fy):
                return RegularityReport(False, math.inf, f"integrand not finite at y={y!r}")
        left = (m - a) / 6.0 * (fa_ + 4.0 * flm + fm_)
        right = (b - m) / 6.0 * (fm_ + 4.0 * frm + fb_)
        diff = left + right - s_ab
        if abs(diff) <= 15.0 * rtol * scale * (b - a) / width:
            total += left + right + diff / 15.0
        elif depth + 1 >= max_depth:
            return RegularityReport(
                False,
                math.inf,
                f"no convergence on [{a!r}, {b!r}] after {max_depth} refinements "
                f"(successive estimates differ by {abs(diff)!r})",
            )
        else:
            stack.append((m, b, fm_, frm, fb_, right, depth + 1))
            stack.append((a, m, fa_, flm, fm_, left, depth + 1))
    return RegularityReport(True, total)
