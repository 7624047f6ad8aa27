import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import kummer_exact
from threshold_options.errors import ParameterError, SeriesNotConverged
from threshold_options.kummer import kummer_1f1, kummer_residual


@pytest.mark.parametrize("a, b", [(0.5, 1.5), (3.0, 0.25), (-2.5, 4.0), (10.0, 10.0)])
def test_value_at_zero(a, b):
    kv = kummer_1f1(a, b, 0.0)
    assert kv.value == 1.0
    assert kv.deriv_in_z == pytest.approx(a / b, rel=1e-15)


@pytest.mark.parametrize("z", [0.0, 1e-8, 0.3, 1.0, 7.5, 20.0, 300.0])
def test_exponential_case(z):
    kv = kummer_1f1(1.0, 1.0, z)
    for v in kv:
        assert v == pytest.approx(math.exp(z), rel=1e-13)


def test_long_series_oracle_example():
    assert kummer_1f1(0.5, 1.5, 0.25).value == pytest.approx(kummer_exact(0.5, 1.5, 0.25), rel=1e-12)


def test_derivatives_against_mpmath():
    a, b, z = 0.7, 2.3, 4.1
    kv = kummer_1f1(a, b, z)
    with mpmath.workdps(30):
        f = lambda t: mpmath.hyp1f1(a, b, t)
        assert kv.deriv_in_z == pytest.approx(float(mpmath.diff(f, z)), rel=1e-13)
        assert kv.deriv2_in_z == pytest.approx(float(mpmath.diff(f, z, 2)), rel=1e-13)


def test_vectorised_matches_scalar():
    zs = np.array([0.0, 0.5, 3.0, 17.0])
    vec = kummer_1f1(1.3, 2.1, zs)
    for i, z in enumerate(zs):
        assert vec.value[i] == kummer_1f1(1.3, 2.1, float(z)).value


def test_polynomial_case_terminates():
    # a = -2: 1F1 = 1 - 2z/b + z^2/(b(b+1))
    b, z = 3.0, 5.0
    assert kummer_1f1(-2.0, b, z).value == pytest.approx(1 - 2 * z / b + z * z / (b * (b + 1)), rel=1e-14)


def test_rejects_nonpositive_integer_b():
    with pytest.raises(ParameterError):
        kummer_1f1(1.0, -2.0, 1.0)
    with pytest.raises(ParameterError):
        kummer_1f1(1.0, 0.0, 1.0)


def test_rejects_negative_z():
    with pytest.raises(ParameterError):
        kummer_1f1(1.0, 2.0, -1.0)


def test_term_budget_exhaustion_reported():
    with pytest.raises(SeriesNotConverged) as info:
        kummer_1f1(1.0, 1.5, 500.0, max_terms=50)
    assert info.value.n_terms == 50
    assert info.value.tail_bound > 0


@given(a=st.floats(0.01, 20.0), b=st.floats(0.05, 40.0), z=st.floats(0.0, 50.0))
@settings(max_examples=60, deadline=None)
def test_differential_equation_residual(a, b, z):
    kv = kummer_1f1(a, b, z)
    res, scale = kummer_residual(a, b, z, kv)
    assert res <= 1e-11 * scale
