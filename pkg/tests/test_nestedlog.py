import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from levylab.nestedlog import LIMIT, NestedLogNumber


def test_small_values_stay_flat():
    x = NestedLogNumber.from_float(3.5)
    assert x.depth == 0 and x.top == 3.5


def test_depth_one_for_large_logs():
    x = NestedLogNumber.from_log(650.0)
    assert x.depth == 1 and x.top == 650.0
    assert float(x) == math.exp(650.0)
    assert float(NestedLogNumber(1, 710.0)) == math.inf
    y = NestedLogNumber.from_log(1000.0)
    assert y.depth == 2 and y.top == pytest.approx(math.log(1000.0))


def test_depth_two_reciprocal():
    x = NestedLogNumber.from_log(-1e6)
    assert x.depth == 2 and x.inverse
    assert x.log() == pytest.approx(-1e6, rel=1e-12)
    assert float(x) == 0.0


def test_text_round_trip():
    for x in (NestedLogNumber.from_float(0.25), NestedLogNumber.from_log(900.0), NestedLogNumber.from_log(-1e9)):
        assert NestedLogNumber.parse(str(x)) == x


def test_rejects_nonpositive():
    with pytest.raises(ValueError):
        NestedLogNumber.from_float(0.0)
    with pytest.raises(ValueError):
        NestedLogNumber(0, -1.0)


def test_ordering_across_depths():
    vals = [
        NestedLogNumber.from_log(-1e9),
        NestedLogNumber.from_log(-800.0),
        NestedLogNumber.from_float(1e-3),
        NestedLogNumber.from_float(2.0),
        NestedLogNumber.from_log(800.0),
        NestedLogNumber.from_log(1e9),
        NestedLogNumber(3, 5.0),
    ]
    assert vals == sorted(vals)
    assert all(a < b for a, b in zip(vals, vals[1:]))


logs = st.floats(min_value=-1e12, max_value=1e12, allow_nan=False)


@given(logs)
def test_canonical_depth_minimal(lv):
    x = NestedLogNumber.from_log(lv)
    assert -LIMIT <= x.top <= LIMIT
    assert x.log() == pytest.approx(lv, rel=1e-12, abs=1e-15)


@given(logs, logs)
def test_order_matches_logs(a, b):
    x, y = NestedLogNumber.from_log(a), NestedLogNumber.from_log(b)
    if a < b * (1 - 1e-12) - 1e-12 if b > 0 else a < b * (1 + 1e-12) - 1e-12:
        assert x < y


@given(logs, logs)
def test_log_ratio(a, b):
    x, y = NestedLogNumber.from_log(a), NestedLogNumber.from_log(b)
    assert x.log_ratio(y) == pytest.approx(a - b, rel=1e-9, abs=1e-9 * max(1.0, abs(a), abs(b)))


@given(logs)
def test_reciprocal_involution(a):
    x = NestedLogNumber.from_log(a)
    back = x.reciprocal().reciprocal()
    # above depth 0 the reciprocal negates the top exactly; at depth 0 it is a float division
    if x.depth > 0:
        assert back == x
    assert back.log() == pytest.approx(x.log(), rel=1e-15, abs=1e-15)
    assert x.reciprocal().log() == pytest.approx(-a, rel=1e-12, abs=1e-15)


@given(st.floats(min_value=-2, max_value=600))
def test_loglog_constructor(ll):
    x = NestedLogNumber.from_loglog(ll, negative=True)
    assert x.loglog_abs() == pytest.approx(ll, rel=1e-12, abs=1e-12)
