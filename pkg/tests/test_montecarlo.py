import math

import numpy as np
import pytest

from threshold_options import (
    ABMParams,
    GBMParams,
    SimConfig,
    brute_force_best_threshold,
    estimate_hitting_discount,
    estimate_threshold_npv,
    make_custom,
    make_family,
    simulate_paths,
)
from threshold_options.errors import ParameterError
from threshold_options.montecarlo import _run_stopping, normals, path_keys
from threshold_options.processes import POSITIVE_HALFLINE

QUICK = SimConfig(step=0.05, horizon=100.0, n_paths=4000, seed=11)


def test_config_validation():
    with pytest.raises(ParameterError):
        SimConfig(step=0.0, horizon=1.0, n_paths=10)
    with pytest.raises(ParameterError):
        SimConfig(step=1.0, horizon=0.5, n_paths=10)
    with pytest.raises(ParameterError):
        SimConfig(step=0.1, horizon=1.0, n_paths=0)
    with pytest.raises(ParameterError):
        SimConfig(step=0.1, horizon=1.0, n_paths=1, seed=2**64)
    with pytest.raises(ParameterError):
        SimConfig(step=0.1, horizon=1.0, n_paths=1, scheme="Milstein")
    cfg = SimConfig.default(0.04)
    assert cfg.step == pytest.approx(0.0025) and cfg.horizon == pytest.approx(250.0)


def test_normals_are_standard():
    z = normals(path_keys(3, np.arange(200_000)), 7)
    assert abs(z.mean()) < 0.01 and abs(z.std() - 1) < 0.01
    # consecutive steps share a Box-Muller pair but are uncorrelated
    z2 = normals(path_keys(3, np.arange(200_000)), 8)
    assert abs(np.corrcoef(z, z2)[0, 1]) < 0.01


def test_single_step_horizon(gbm2):
    cfg = SimConfig(step=0.1, horizon=0.1, n_paths=50)
    steps = list(simulate_paths(gbm2, 1.0, cfg))
    assert len(steps) == 1 and steps[0].x.shape == (50,)


def test_simulate_paths_is_reproducible(gbm2):
    cfg = SimConfig(step=0.1, horizon=2.0, n_paths=100, seed=42)
    a = [s.x for s in simulate_paths(gbm2, 1.0, cfg)]
    b = [s.x for s in simulate_paths(gbm2, 1.0, cfg)]
    assert all(np.array_equal(u, v) for u, v in zip(a, b))
    c = [s.x for s in simulate_paths(gbm2, 1.0, SimConfig(step=0.1, horizon=2.0, n_paths=100, seed=43))]
    assert not np.array_equal(a[-1], c[-1])


def test_drift_dominated_mean():
    spec = make_family("ABM", ABMParams(1.0, 0.1), 0.05, 0.0)
    cfg = SimConfig(step=0.01, horizon=1.0, n_paths=4000, seed=1)
    last = list(simulate_paths(spec, 0.5, cfg))[-1].x
    se = last.std(ddof=1) / math.sqrt(last.size)
    assert abs(last.mean() - 1.5) < 3 * se


def test_immediate_stopping_is_exact(gbm2):
    est = estimate_hitting_discount(gbm2, 2.5, 2.0, QUICK)
    assert est.mean == 1.0 and est.std_error == 0.0
    npv = estimate_threshold_npv(gbm2, 2.5, 2.0, QUICK)
    assert npv.mean == 1.5 and npv.std_error == 0.0


def test_unreachable_threshold(gbm2):
    cfg = SimConfig(step=0.1, horizon=5.0, n_paths=2000, seed=3)
    est = estimate_threshold_npv(gbm2, 1.0, 50.0, cfg)
    assert est.never_stopped_frac > 0.999
    assert est.mean < 1e-3


def test_estimate_invariants(gbm2):
    est = estimate_hitting_discount(gbm2, 1.0, 2.0, QUICK)
    assert est.std_error >= 0 and 0.0 <= est.never_stopped_frac <= 1.0
    assert est.n_stopped == round((1 - est.never_stopped_frac) * est.n_paths)
    assert est.truncation_bound == pytest.approx(math.exp(-0.04 * 100.0))


def test_abm_hitting_discount():
    spec = make_family("ABM", ABMParams(0.0, math.sqrt(0.1)), 0.05, 0.0)
    cfg = SimConfig(step=0.01, horizon=200.0, n_paths=20_000, seed=5)
    est = estimate_hitting_discount(spec, 0.0, 1.0, cfg)
    target = math.exp(-1.0)
    # discrete monitoring overshoots the barrier by about 0.5826 sigma sqrt(dt)
    bias = target * 0.5826 * math.sqrt(0.1) * math.sqrt(cfg.step)
    assert abs(est.mean - target) <= 3 * est.std_error + bias


def test_numpy_route_matches_compiled_kernel(gbm2):
    custom = make_custom(lambda x: 0.0 * x, lambda x: 0.2 * x, POSITIVE_HALFLINE, 0.04, 1.0)
    cfg = SimConfig(step=0.1, horizon=30.0, n_paths=300, seed=9)
    thr = np.array([1.5, 2.0, 3.0])
    a = _run_stopping(gbm2, 1.0, thr, cfg)
    b = _run_stopping(custom, 1.0, thr, cfg)
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u, v)


def test_thread_count_does_not_change_results(gbm2, monkeypatch):
    cfg = SimConfig(step=0.1, horizon=30.0, n_paths=500, seed=2)
    monkeypatch.setenv("THRESHOLD_OPTIONS_THREADS", "1")
    a = estimate_threshold_npv(gbm2, 1.0, 2.0, cfg)
    monkeypatch.setenv("THRESHOLD_OPTIONS_THREADS", "0")
    b = estimate_threshold_npv(gbm2, 1.0, 2.0, cfg)
    assert a == b


def test_reflection_flags_paths():
    # huge steps push CIR-like paths below zero
    spec = make_custom(lambda x: 0.0 * x, lambda x: 2.0 * np.sqrt(x), POSITIVE_HALFLINE, 0.05, 0.5)
    cfg = SimConfig(step=1.0, horizon=20.0, n_paths=500, seed=4)
    est = estimate_hitting_discount(spec, 0.2, 5.0, cfg)
    assert est.flagged_frac > 0.01 and est.unreliable


def test_brute_force_single_point(gbm2):
    res = brute_force_best_threshold(gbm2, 1.0, [1.7], QUICK)
    assert res.best_p == 1.7 and len(res.estimates) == 1 and res.common_random_numbers


def test_brute_force_exact_tie_prefers_smaller(gbm2):
    # x0 above both thresholds: both pay x0 - I at time zero on every path
    res = brute_force_best_threshold(gbm2, 3.0, [2.5, 5 / 3], QUICK)
    assert res.estimates[0].mean_at_threshold == res.estimates[1].mean_at_threshold
    assert res.best_p == 5 / 3


def test_brute_force_equal_value_pair_is_statistically_tied(gbm2):
    # (p - 1)/p^2 = 0.24 at p = 5/3 and p = 5/2
    cfg = SimConfig(step=0.1, horizon=150.0, n_paths=20_000, seed=8)
    res = brute_force_best_threshold(gbm2, 1.0, [5 / 3, 2.5], cfg)
    a, b = (e.mean_at_threshold for e in res.estimates)
    other = 1 if res.best_p == res.thresholds[0] else 0
    assert abs(a - b) < 4 * res.diff_std_errors[other]


def test_brute_force_rejects_bad_inputs(gbm2):
    with pytest.raises(ParameterError):
        brute_force_best_threshold(gbm2, 1.0, [], QUICK)
    with pytest.raises(ParameterError):
        brute_force_best_threshold(gbm2, 1.0, [2.0], QUICK, payoff="mean")
