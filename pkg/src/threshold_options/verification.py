"""Grid-based checkers for threshold optimality certificates.

Each checker returns a :class:`VerificationReport` whose verdict is
relative to the recorded mesh and tolerances.  Failing conditions carry
a witness point with both sides of the violated inequality.

Not checked at runtime: positivity of the candidate value function and
the local-time term at the threshold; both enter only through the
optimality proof.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError
from .fundamental import FundamentalSolution
from .processes import DiffusionSpec, Family
from .threshold import PastingRoot, solve_smooth_pasting

H_RTOL = 1e-10
PASTING_RTOL = 1e-8
FBP_TOL = 1e-8
ZERO_DERIV_RTOL = 1e-6

NOT_RUNTIME_CHECKABLE = (
    "positivity of the candidate value function and the local-time term at p* "
    "are proof devices and are not checked"
)


class Status(enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class ConditionResult:
    name: str
    status: Status
    witness: Optional[dict] = None
    margin: float = math.nan
    note: str = ""


@dataclass(frozen=True)
class VerificationReport:
    conditions: list[ConditionResult]
    grid_spec: dict
    notes: list[str] = field(default_factory=list)

    @property
    def overall(self) -> Status:
        statuses = {c.status for c in self.conditions}
        if Status.FAIL in statuses:
            return Status.FAIL
        if Status.INCONCLUSIVE in statuses:
            return Status.INCONCLUSIVE
        return Status.PASS

    def condition(self, name: str) -> ConditionResult:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)


def _describe(points: np.ndarray) -> dict:
    if points.size == 0:
        return {"n": 0}
    return {"n": int(points.size), "min": float(points.min()), "max": float(points.max())}


def verification_grid(
    psi: FundamentalSolution,
    invest_cost: float,
    p_star: float,
    n_per_side: int = 2000,
) -> tuple[np.ndarray, np.ndarray]:
    """Default mesh: points below p* and points from p* upward.

    Geometric on (0, inf)-type domains; the right side stops at
    psi.upper_limit so psi stays finite.
    """
    dom = psi.domain
    scale = max(1.0, abs(p_star), abs(invest_cost))
    if dom.is_positive_halfline:
        left = np.geomspace(max(p_star * 1e-6, dom.l + 1e-12 * scale), p_star, n_per_side + 1)[:-1]
    elif dom.lower.is_finite:
        left = np.linspace(dom.l + 1e-6 * (p_star - dom.l), p_star, n_per_side + 1)[:-1]
    else:
        left = np.linspace(p_star - 100.0 * scale, p_star, n_per_side + 1)[:-1]

    top = psi.upper_limit
    if dom.upper.is_finite:
        top = min(top, dom.r - 1e-9 * max(1.0, abs(dom.r)))
    if dom.is_positive_halfline:
        top = min(top, p_star * 1e6)
        right = np.geomspace(p_star, max(top, p_star), n_per_side)
    else:
        top = min(top, p_star + 100.0 * scale)
        right = np.linspace(p_star, max(top, p_star), n_per_side)
    return left, right


def _split_grid(psi, invest_cost, p_star, grid) -> tuple[np.ndarray, np.ndarray]:
    if grid is None:
        return verification_grid(psi, invest_cost, p_star)
    g = np.unique(np.asarray(grid, dtype=float))
    psi.domain.require_interior(g, what="grid point")
    left = g[g < p_star]
    right = np.unique(np.concatenate([[p_star], g[g > p_star]]))
    return left, right


def _h(psi: FundamentalSolution, invest_cost: float, p: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        return (p - invest_cost) / np.asarray(psi.eval(p), dtype=float)


def _worst_violation(lhs: np.ndarray, rhs: np.ndarray, tol: np.ndarray, points: np.ndarray, first: bool = False):
    """Check lhs <= rhs + tol pointwise; return (status, witness, margin)."""
    with np.errstate(invalid="ignore"):
        slack = rhs - lhs
    finite = np.isfinite(slack)
    margin = float(np.min(slack[finite])) if finite.any() else math.inf
    bad = np.flatnonzero(finite & (slack < -tol))
    if bad.size == 0:
        return Status.PASS, None, margin
    k = bad[0] if first else bad[np.argmin(slack[bad])]
    return Status.FAIL, {"p": float(points[k]), "lhs": float(lhs[k]), "rhs": float(rhs[k])}, margin


def _check_h_below(psi, invest_cost, p_star, left) -> ConditionResult:
    h_star = float(_h(psi, invest_cost, np.array([p_star]))[0])
    hl = _h(psi, invest_cost, left)
    tol = np.full(left.shape, H_RTOL * abs(h_star))
    status, witness, margin = _worst_violation(hl, np.full(left.shape, h_star), tol, left)
    return ConditionResult("h_below_threshold", status, witness, margin, "(p-I)/psi(p) <= (p*-I)/psi(p*) for p < p*")


def _check_h_nonincreasing(psi, invest_cost, p_star, right) -> ConditionResult:
    h_star = float(_h(psi, invest_cost, np.array([p_star]))[0])
    hr = _h(psi, invest_cost, right)
    tol = np.full(right.size - 1, H_RTOL * abs(h_star))
    status, witness, margin = _worst_violation(hr[1:], hr[:-1], tol, right[1:], first=True)
    if witness is not None:
        k = int(np.flatnonzero(right == witness["p"])[0])
        witness["p_prev"] = float(right[k - 1])
    return ConditionResult("h_nonincreasing_above", status, witness, margin, "h(p_next) <= h(p) for p >= p*")


def _check_pasting_inequality(psi, invest_cost, right) -> ConditionResult:
    f = np.asarray(psi.eval(right), dtype=float)
    f1 = np.asarray(psi.deriv(right), dtype=float)
    # (p - I) psi' >= psi  rewritten as  psi <= (p - I) psi'
    lhs, rhs = f, (right - invest_cost) * f1
    status, witness, margin = _worst_violation(lhs, rhs, H_RTOL * np.abs(f), right)
    return ConditionResult("pasting_inequality_above", status, witness, margin, "(p-I) psi'(p) >= psi(p) for p >= p*")


def verify_theorem1(
    psi: FundamentalSolution,
    invest_cost: float,
    p_star: float,
    grid: Optional[Sequence[float]] = None,
) -> VerificationReport:
    """Is p* optimal among threshold strategies?

    h must not exceed h(p*) below p* and must not increase from p* on.
    The pointwise inequality (p - I) psi' >= psi is reported alongside
    as an equivalent restatement of the second condition.
    """
    psi.domain.require_interior(p_star, what="candidate threshold")
    left, right = _split_grid(psi, invest_cost, p_star, grid)
    conditions = [
        _check_h_below(psi, invest_cost, p_star, left),
        _check_h_nonincreasing(psi, invest_cost, p_star, right),
        _check_pasting_inequality(psi, invest_cost, right),
    ]
    return VerificationReport(
        conditions,
        {"p_star": p_star, "below": _describe(left), "above": _describe(right), "rtol": H_RTOL},
    )


def drift_grid(spec: DiffusionSpec, p_star: float, n: int = 2000) -> np.ndarray:
    """Points above p*, pushed toward r (up to 1e6 * scale when r is infinite)."""
    dom = spec.domain
    scale = max(1.0, abs(p_star), abs(spec.invest_cost))
    if dom.upper.is_finite:
        top = dom.r - 1e-9 * max(1.0, abs(dom.r))
        return np.linspace(p_star, top, n + 1)[1:]
    offsets = np.geomspace(1e-6 * scale, 1e6 * scale, n)
    return p_star + offsets


def _asymptotic_drift(spec: DiffusionSpec) -> tuple[Status, str]:
    """Compare a(p) with rho (p - I) as p -> infinity from the coefficients."""
    fam, prm, rho, cost = spec.family, spec.params, spec.rho, spec.invest_cost
    if fam is Family.GBM:
        if prm.alpha < rho:
            return Status.PASS, "alpha p vs rho p: alpha < rho"
        if prm.alpha > rho:
            return Status.FAIL, "alpha p vs rho p: alpha > rho"
        if cost > 0.0:
            return Status.FAIL, "alpha = rho: inequality reduces to 0 <= -rho I"
        return Status.PASS, "alpha = rho and I = 0: equality"
    if fam is Family.ABM:
        return Status.PASS, "constant drift vs linearly growing rho (p - I)"
    if fam is Family.GEOMETRIC_OU:
        return Status.PASS, "drift -> -infinity quadratically"
    if fam is Family.CIR:
        return Status.PASS, "drift decreases linearly"
    return Status.INCONCLUSIVE, "asymptotic sign of rho (p - I) - a(p) cannot be established for custom drift"


def verify_theorem2(
    spec: DiffusionSpec,
    psi: FundamentalSolution,
    p_star: float,
    grid: Optional[Sequence[float]] = None,
) -> VerificationReport:
    """Is the threshold rule at p* optimal among all stopping times?"""
    psi.domain.require_interior(p_star, what="candidate threshold")
    cost = spec.invest_cost
    left, right = _split_grid(psi, cost, p_star, grid)
    conditions = []

    f_star = float(psi.eval(p_star))
    f1_star = float(psi.deriv(p_star))
    fl = np.asarray(psi.eval(left), dtype=float)
    lhs = (left - cost) * f_star
    rhs = (p_star - cost) * fl
    status, witness, margin = _worst_violation(lhs, rhs, H_RTOL * np.maximum(np.abs(lhs), np.abs(rhs)), left)
    conditions.append(
        ConditionResult("scaled_h_below_threshold", status, witness, margin, "(p-I) psi(p*) <= (p*-I) psi(p) for p < p*")
    )

    gap = abs(f_star - (p_star - cost) * f1_star)
    tol = PASTING_RTOL * abs(f_star)
    conditions.append(
        ConditionResult(
            "smooth_pasting",
            Status.PASS if gap <= tol else Status.FAIL,
            None if gap <= tol else {"p": p_star, "lhs": f_star, "rhs": (p_star - cost) * f1_star},
            tol - gap,
            "psi(p*) = (p*-I) psi'(p*)",
        )
    )

    if grid is None:
        upper = drift_grid(spec, p_star)
    else:
        upper = right[right > p_star]
    a = np.asarray(spec.a(upper), dtype=float) * np.ones_like(upper)
    bound = spec.rho * (upper - cost)
    tol_d = H_RTOL * np.maximum.reduce([np.abs(a), np.abs(bound), np.full(upper.shape, spec.rho * spec.scale)])
    status, witness, margin = _worst_violation(a, bound, tol_d, upper)
    conditions.append(
        ConditionResult("drift_bound_grid", status, witness, margin, "a(p) <= rho (p - I) for p > p*")
    )
    notes = [NOT_RUNTIME_CHECKABLE]
    if not spec.domain.upper.is_finite:
        a_status, a_note = _asymptotic_drift(spec)
        conditions.append(ConditionResult("drift_bound_asymptotic", a_status, None, math.nan, a_note))
    return VerificationReport(
        conditions,
        {"p_star": p_star, "below": _describe(left), "drift": _describe(upper), "rtol": H_RTOL},
        notes,
    )


def verify_remark1(
    psi: FundamentalSolution,
    invest_cost: float,
    p_star: float,
    grid: Optional[Sequence[float]] = None,
) -> VerificationReport:
    """(p - I) psi'(p) >= psi(p) from p* on, and p* > I."""
    psi.domain.require_interior(p_star, what="candidate threshold")
    _, right = _split_grid(psi, invest_cost, p_star, grid)
    above = p_star > invest_cost
    conditions = [
        ConditionResult(
            "threshold_above_cost",
            Status.PASS if above else Status.FAIL,
            None if above else {"p": p_star, "lhs": p_star, "rhs": invest_cost},
            p_star - invest_cost,
            "p* > I",
        ),
        _check_pasting_inequality(psi, invest_cost, right),
    ]
    return VerificationReport(conditions, {"p_star": p_star, "above": _describe(right), "rtol": H_RTOL})


@dataclass(frozen=True)
class FreeBoundaryCandidate:
    """Candidate H(x) = (p - I) psi(x)/psi(p) on (l, p) for a pasting root p."""

    root: float
    psi2: float
    H: Callable
    H_prime: Callable
    value_match_error: float
    smooth_paste_error: float

    @property
    def ok(self) -> bool:
        return self.value_match_error <= FBP_TOL and self.smooth_paste_error <= FBP_TOL


def free_boundary_candidate(psi: FundamentalSolution, invest_cost: float, p_hat: float) -> FreeBoundaryCandidate:
    psi.domain.require_interior(p_hat, what="free-boundary point")
    f_hat = float(psi.eval(p_hat))
    k = (p_hat - invest_cost) / f_hat

    def H(x):
        return k * psi.eval(x)

    def H_prime(x):
        return k * psi.deriv(x)

    value_err = abs(float(H(p_hat)) - (p_hat - invest_cost)) / max(1.0, abs(p_hat - invest_cost))
    paste_err = abs(float(H_prime(p_hat)) - 1.0)
    return FreeBoundaryCandidate(p_hat, float(psi.deriv2(p_hat)), H, H_prime, value_err, paste_err)


def solve_free_boundary(psi: FundamentalSolution, invest_cost: float, bracket=None) -> list[FreeBoundaryCandidate]:
    """Solutions of the free-boundary problem, one candidate per pasting root."""
    roots = solve_smooth_pasting(psi, invest_cost, bracket)
    return [free_boundary_candidate(psi, invest_cost, r.p) for r in roots]


class FbpClass(enum.Enum):
    OPTIMAL_BY_STATEMENT1 = "OptimalByStatement1"
    OPTIMAL_BY_STATEMENT2 = "OptimalByStatement2"
    NOT_OPTIMAL = "NotOptimal"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class FbpClassification:
    root: float
    classification: FbpClass
    psi2: float
    note: str = ""


def higher_derivatives(psi: FundamentalSolution, x: float, step: Optional[float] = None) -> dict[int, float]:
    """psi'' (analytic) and Richardson-extrapolated psi''', psi''''."""
    h = step if step is not None else 1e-3 * max(1.0, abs(x))

    def d3(hh):
        return (psi.deriv2(x + hh) - psi.deriv2(x - hh)) / (2.0 * hh)

    def d4(hh):
        return (psi.deriv2(x + hh) - 2.0 * psi.deriv2(x) + psi.deriv2(x - hh)) / (hh * hh)

    return {
        2: float(psi.deriv2(x)),
        3: float((4.0 * d3(h / 2) - d3(h)) / 3.0),
        4: float((4.0 * d4(h / 2) - d4(h)) / 3.0),
    }


def _root_value(r) -> float:
    if isinstance(r, PastingRoot):
        return float(r.p)
    if isinstance(r, FreeBoundaryCandidate):
        return float(r.root)
    return float(r)


def _is_zero(value: float, ref: float) -> bool:
    return abs(value) <= ZERO_DERIV_RTOL * ref


def classify_fbp_solutions(
    psi: FundamentalSolution,
    invest_cost: float,
    roots: Sequence,
    grid_points: int = 2000,
) -> list[FbpClassification]:
    """Classify free-boundary solutions as optimal thresholds or not.

    One root: psi'' > 0 makes it optimal, psi'' < 0 violates the
    necessary condition psi'' >= 0.  Several roots: the smallest root
    with psi'' > 0 is optimal if h does not exceed its value below it
    and at every larger root psi has vanishing derivatives of orders
    2..n-1 and a positive n-th derivative (n <= 4 is checked).
    """
    ps = sorted({_root_value(r) for r in roots})
    if not ps:
        raise ValueError("no free-boundary solutions to classify")

    def ref(p: float) -> float:
        return abs(float(psi.eval(p))) + abs(float(psi.deriv(p)))

    d2 = {p: float(psi.deriv2(p)) for p in ps}
    sign = {p: 0 if _is_zero(d2[p], ref(p)) else int(np.sign(d2[p])) for p in ps}

    if len(ps) == 1:
        p = ps[0]
        if sign[p] > 0:
            cls, note = FbpClass.OPTIMAL_BY_STATEMENT1, "unique solution with psi'' > 0"
        elif sign[p] < 0:
            cls, note = FbpClass.NOT_OPTIMAL, "psi'' < 0 violates the necessary condition psi'' >= 0"
        else:
            cls, note = FbpClass.INCONCLUSIVE, "psi'' vanishes at the unique solution"
        return [FbpClassification(p, cls, d2[p], note)]

    out: dict[float, FbpClassification] = {}
    convex = [p for p in ps if sign[p] > 0]
    for p in ps:
        if sign[p] < 0:
            out[p] = FbpClassification(p, FbpClass.NOT_OPTIMAL, d2[p], "psi'' < 0 violates the necessary condition")
    if not convex:
        for p in ps:
            out.setdefault(p, FbpClassification(p, FbpClass.INCONCLUSIVE, d2[p], "no solution with psi'' > 0"))
        return [out[p] for p in ps]

    p_star = convex[0]
    for p in ps:
        if p < p_star:
            out.setdefault(p, FbpClassification(p, FbpClass.INCONCLUSIVE, d2[p], "psi'' vanishes"))

    left, _ = verification_grid(psi, invest_cost, p_star, grid_points)
    below = _check_h_below(psi, invest_cost, p_star, left)
    if below.status is Status.FAIL:
        out[p_star] = FbpClassification(
            p_star, FbpClass.NOT_OPTIMAL, d2[p_star], f"h exceeds h(p*) below p* at p = {below.witness['p']!r}"
        )
    else:
        applicable = True
        reasons = []
        for pt in (p for p in ps if p > p_star):
            ders = higher_derivatives(psi, pt)
            r = ref(pt)
            order = None
            for n in (3, 4):
                lower_zero = all(_is_zero(ders[k], r) for k in range(2, n))
                if lower_zero and ders[n] > 0.0 and not _is_zero(ders[n], r):
                    order = n
                    break
            if order is None:
                applicable = False
                reasons.append(f"no vanishing-derivative pattern up to order 4 at {pt!r}")
                if pt not in out:
                    out[pt] = FbpClassification(pt, FbpClass.INCONCLUSIVE, d2[pt], "derivative pattern beyond order 4 or absent")
            else:
                out[pt] = FbpClassification(pt, FbpClass.NOT_OPTIMAL, d2[pt], f"inflection-type solution (n = {order})")
        if applicable:
            out[p_star] = FbpClassification(p_star, FbpClass.OPTIMAL_BY_STATEMENT2, d2[p_star], "smallest convex solution")
        else:
            out[p_star] = FbpClassification(p_star, FbpClass.INCONCLUSIVE, d2[p_star], "; ".join(reasons))
    for p in ps:
        out.setdefault(p, FbpClassification(p, FbpClass.INCONCLUSIVE, d2[p], ""))
    return [out[p] for p in ps]
