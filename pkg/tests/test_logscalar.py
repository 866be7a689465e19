import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from landis_lab.logscalar import LogScalar, log_sum, signed_logsumexp

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False).filter(lambda v: abs(v) > 1e-6 or v == 0)


@given(finite, finite)
def test_arithmetic_matches_floats(a, b):
    A, B = LogScalar.from_float(a), LogScalar.from_float(b)
    assert float(A * B) == pytest.approx(a * b, rel=1e-12, abs=1e-300)
    assert float(A + B) == pytest.approx(a + b, rel=1e-9, abs=1e-9 * (abs(a) + abs(b)) + 1e-300)
    assert float(A - B) == pytest.approx(a - b, rel=1e-9, abs=1e-9 * (abs(a) + abs(b)) + 1e-300)
    if b != 0:
        assert float(A / B) == pytest.approx(a / b, rel=1e-12)


@given(finite, finite)
def test_ordering_matches_floats(a, b):
    A, B = LogScalar.from_float(a), LogScalar.from_float(b)
    assert (A < B) == (a < b)
    assert (A >= B) == (a >= b)


def test_values_far_outside_double_range():
    big = LogScalar.from_log(5000.0)
    tiny = LogScalar.from_log(-5000.0)
    assert (big * tiny).logmag == pytest.approx(0.0)
    assert (big + big).logmag == pytest.approx(5000.0 + math.log(2.0))
    assert (big - big).is_zero()
    assert (big ** 0.5).logmag == pytest.approx(2500.0)


def test_invalid_states_rejected():
    with pytest.raises(ValueError):
        LogScalar(2, 0.0)
    with pytest.raises(ValueError):
        LogScalar(1, math.nan)
    with pytest.raises(ValueError):
        LogScalar.from_float(math.inf)
    with pytest.raises(ZeroDivisionError):
        LogScalar.one() / LogScalar.zero()
    with pytest.raises(ValueError):
        LogScalar.from_float(-4.0) ** 0.5


def test_signed_logsumexp_and_log_sum():
    vals = np.array([3.0, -1.5, 0.25, 7.0])
    got = signed_logsumexp(np.sign(vals), np.log(np.abs(vals)))
    assert float(got) == pytest.approx(vals.sum())
    assert float(log_sum(LogScalar.from_float(v) for v in vals)) == pytest.approx(vals.sum())
    w = np.array([0.5, 2.0, 1.0, 0.1])
    got_w = signed_logsumexp(np.sign(vals), np.log(np.abs(vals)), w)
    assert float(got_w) == pytest.approx(np.dot(w, vals))
    assert signed_logsumexp([], []).is_zero()
