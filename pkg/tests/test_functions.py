import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fragclt.errors import EvaluationError
from fragclt.functions import (Const, ExpDecay, FromCallable, Identity, Indicator, LogSide, Phi, Polynomial,
                               as_fn)

xs = st.floats(0.0, 1.0)


@given(xs)
def test_phi_composes_with_exp(y):
    f = Polynomial((1.0, -2.0, 3.0))
    assert Phi(f)(y) == pytest.approx(f(math.exp(-y)), abs=1e-15)


@given(st.floats(1e-6, 1.0))
def test_logside_inverts_phi(x):
    f = ExpDecay(2.0)
    assert LogSide(Phi(Identity()))(x) == pytest.approx(x, rel=1e-13)
    assert LogSide(f)(x) == pytest.approx(x**2, rel=1e-12)


def test_indicator_closed_and_breaks():
    f = Indicator(0.5, 1.0)
    np.testing.assert_array_equal(f(np.array([0.49, 0.5, 0.75, 1.0, 1.01])), [0, 1, 1, 1, 0])
    assert f.breaks == (0.5, 1.0)
    assert sorted(Phi(f).breaks) == pytest.approx([0.0, math.log(2)])


@given(st.floats(-5, 5), st.floats(-5, 5), xs)
def test_linear_algebra(p, q, x):
    f = p * Identity() + Const(q)
    assert f(x) == pytest.approx(p * x + q, abs=1e-12)
    assert (f - f)(x) == pytest.approx(0.0, abs=1e-12)


def test_broadcast_shapes():
    f = Identity() * Indicator(0.0, 0.5)
    assert f(np.zeros((3, 4))).shape == (3, 4)
    assert np.ndim(f(0.2)) == 0


def test_checked_reports_bad_argument():
    f = FromCallable(lambda x: 1 / x, (), "inv")
    with np.errstate(divide="ignore"), pytest.raises(EvaluationError, match="0"):
        f.checked(np.array([1.0, 0.0]))


def test_as_fn_wraps_numbers_and_callables():
    assert as_fn(2.0)(0.3) == 2.0
    assert as_fn(lambda x: x + 1)(1.0) == 2.0
