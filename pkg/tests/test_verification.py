import numpy as np
import pytest
import sympy as sp

from threshold_options import (
    FbpClass,
    GBMParams,
    Interval,
    Provenance,
    Status,
    classify_fbp_solutions,
    closed_form_threshold,
    make_custom,
    make_family,
    psi_closed_form,
    psi_series,
    solve_free_boundary,
    maximize_h,
    verify_remark1,
    verify_theorem1,
    verify_theorem2,
)
from threshold_options.fundamental import FundamentalSolution
from threshold_options.processes import POSITIVE_HALFLINE
from threshold_options.verification import free_boundary_candidate, higher_derivatives


def _sympy_psi(expr, x, domain):
    f = sp.lambdify(x, expr, "numpy")
    f1 = sp.lambdify(x, sp.diff(expr, x), "numpy")
    f2 = sp.lambdify(x, sp.diff(expr, x, 2), "numpy")
    return FundamentalSolution(
        eval=lambda t: f(np.asarray(t, dtype=float)) + 0.0 * np.asarray(t, dtype=float),
        deriv=lambda t: f1(np.asarray(t, dtype=float)) + 0.0 * np.asarray(t, dtype=float),
        deriv2=lambda t: f2(np.asarray(t, dtype=float)) + 0.0 * np.asarray(t, dtype=float),
        domain=domain,
        provenance=Provenance.CLOSED_FORM,
        upper_limit=domain.r,
    )


def _witness_sides(cond):
    w = cond.witness
    assert {"p", "lhs", "rhs"} <= set(w)
    return w


def test_theorem1_passes_at_optimum(gbm2):
    rep = verify_theorem1(psi_closed_form(gbm2), 1.0, 2.0)
    assert rep.overall is Status.PASS
    assert all(c.witness is None for c in rep.conditions)


def test_theorem1_fails_above_optimum(gbm2):
    rep = verify_theorem1(psi_closed_form(gbm2), 1.0, 3.0)
    cond = rep.condition("h_below_threshold")
    assert rep.overall is Status.FAIL and cond.status is Status.FAIL
    w = _witness_sides(cond)
    assert w["p"] == pytest.approx(2.0, abs=0.01)
    assert w["lhs"] == pytest.approx(0.25, rel=1e-4) and w["rhs"] == pytest.approx(2 / 9, rel=1e-12)


def test_theorem1_fails_below_optimum(gbm2):
    rep = verify_theorem1(psi_closed_form(gbm2), 1.0, 1.5)
    cond = rep.condition("h_nonincreasing_above")
    assert cond.status is Status.FAIL
    w = _witness_sides(cond)
    assert w["p_prev"] == 1.5 and 1.5 < w["p"] < 1.52
    assert w["lhs"] > w["rhs"]


def test_theorem1_grid_override(gbm2):
    rep = verify_theorem1(psi_closed_form(gbm2), 1.0, 2.0, grid=np.linspace(0.5, 6, 100))
    assert rep.overall is Status.PASS
    assert rep.grid_spec["below"]["n"] > 0


def test_theorem2_gbm_pass(gbm16):
    p = closed_form_threshold(gbm16).p_star
    rep = verify_theorem2(gbm16, psi_closed_form(gbm16), p)
    assert rep.overall is Status.PASS
    assert rep.condition("drift_bound_asymptotic").status is Status.PASS


def test_theorem2_drift_equal_to_rate_fails():
    spec = make_family("GBM", GBMParams(0.1, 0.2), 0.1, 1.0)
    rep = verify_theorem2(spec, psi_closed_form(spec), 2.0)
    grid = rep.condition("drift_bound_grid")
    asym = rep.condition("drift_bound_asymptotic")
    assert grid.status is Status.FAIL and asym.status is Status.FAIL
    w = _witness_sides(grid)
    assert w["lhs"] > w["rhs"]


def test_theorem2_abm_zero_drift(abm1):
    rep = verify_theorem2(abm1, psi_closed_form(abm1), 3.0)
    assert rep.condition("drift_bound_grid").status is Status.PASS
    assert rep.condition("drift_bound_asymptotic").status is Status.PASS
    assert rep.overall is Status.PASS


def test_theorem2_custom_asymptotics_inconclusive(gbm2):
    spec = make_custom(lambda x: 0 * x, lambda x: 0.2 * x, POSITIVE_HALFLINE, 0.04, 1.0)
    rep = verify_theorem2(spec, psi_closed_form(gbm2), 2.0)
    assert rep.condition("drift_bound_asymptotic").status is Status.INCONCLUSIVE
    assert rep.condition("drift_bound_grid").status is Status.PASS
    assert rep.overall is Status.INCONCLUSIVE


def test_theorem2_smooth_pasting_failure_has_witness(gbm2):
    rep = verify_theorem2(gbm2, psi_closed_form(gbm2), 2.5)
    w = _witness_sides(rep.condition("smooth_pasting"))
    assert (w["lhs"], w["rhs"]) == pytest.approx((6.25, 7.5))


def test_remark1(gbm2):
    psi = psi_closed_form(gbm2)
    rep = verify_remark1(psi, 1.0, 2.0, grid=[2.0, 3.0])
    assert rep.overall is Status.PASS
    # equality 1*4 = 4 at p = 2: the margin is exactly zero
    assert rep.condition("pasting_inequality_above").margin == 0.0
    assert (3 - 1) * psi.deriv(3.0) == 12.0 and psi(3.0) == 9.0
    bad = verify_remark1(psi, 1.0, 1.0)
    assert bad.condition("threshold_above_cost").status is Status.FAIL


def test_free_boundary_gbm(gbm2):
    (c,) = solve_free_boundary(psi_closed_form(gbm2), 1.0)
    assert c.root == pytest.approx(2.0, rel=1e-14) and c.ok
    assert c.H(1.0) == pytest.approx(0.25, rel=1e-14)
    assert c.H(2.0) == pytest.approx(1.0, rel=1e-14)
    assert c.H_prime(2.0) == pytest.approx(1.0, rel=1e-14)


def test_free_boundary_abm(abm1):
    (c,) = solve_free_boundary(psi_closed_form(abm1), 2.0)
    assert c.root == pytest.approx(3.0, rel=1e-14)
    assert c.H(1.0) == pytest.approx(np.exp(-2.0), rel=1e-14)
    assert c.H_prime(3.0) == pytest.approx(1.0, rel=1e-14)


def test_free_boundary_corrupted_candidate(gbm2):
    c = free_boundary_candidate(psi_closed_form(gbm2), 1.0, 2.5)
    assert c.H_prime(2.5) == pytest.approx(1.2, rel=1e-14)
    assert c.smooth_paste_error == pytest.approx(0.2, rel=1e-12)
    assert not c.ok


def test_classify_single_convex_roots(gbm2, abm1):
    (r,) = classify_fbp_solutions(psi_closed_form(gbm2), 1.0, [2.0])
    assert r.classification is FbpClass.OPTIMAL_BY_STATEMENT1 and r.psi2 == pytest.approx(2.0)
    (r,) = classify_fbp_solutions(psi_closed_form(abm1), 2.0, solve_free_boundary(psi_closed_form(abm1), 2.0))
    assert r.classification is FbpClass.OPTIMAL_BY_STATEMENT1


def test_classify_concave_root():
    x = sp.Symbol("x")
    psi = _sympy_psi(4 + 2 * (x - 3) - (x - 3) ** 2, x, Interval.open(1.5, 3.9))
    assert psi(3.0) == (3.0 - 1.0) * psi.deriv(3.0)
    (r,) = classify_fbp_solutions(psi, 1.0, [3.0])
    assert r.classification is FbpClass.NOT_OPTIMAL and r.psi2 == -2.0


def _two_root_psi():
    # h' = -(p - 2)(p - 3)^2 / 2 gives a maximum at 2 and a flat inflection at 3;
    # psi = (p - 1)/h then pastes at both points
    p, s = sp.symbols("p s")
    h = 1 - sp.Rational(1, 2) * sp.integrate((s - 2) * (s - 3) ** 2, (s, 2, p))
    return _sympy_psi(sp.simplify((p - 1) / h), p, Interval.open(1.2, 3.8))


def test_classify_two_roots_statement2():
    psi = _two_root_psi()
    for root in (2.0, 3.0):
        assert psi(root) == pytest.approx((root - 1) * psi.deriv(root), rel=1e-14)
    d = higher_derivatives(psi, 3.0)
    assert abs(d[2]) < 1e-12 and d[3] > 0.1
    out = classify_fbp_solutions(psi, 1.0, [3.0, 2.0])
    assert [r.root for r in out] == [2.0, 3.0]
    assert out[0].classification is FbpClass.OPTIMAL_BY_STATEMENT2
    assert out[1].classification is FbpClass.NOT_OPTIMAL


def test_classify_requires_roots(gbm2):
    with pytest.raises(ValueError):
        classify_fbp_solutions(psi_closed_form(gbm2), 1.0, [])


def test_series_families_verify(cir, gou):
    for spec in (cir, gou):
        psi = psi_series(spec)
        p = maximize_h(psi, spec.invest_cost).p_star
        assert verify_theorem1(psi, spec.invest_cost, p).overall is Status.PASS
        assert verify_theorem2(spec, psi, p).overall is Status.PASS
