import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from levylab.divergence import Verdict, classify_log_terms, classify_series

N = np.arange(2, 200_001, dtype=float)


def test_half_log_diverges():
    assert classify_series(0.5 * np.log(N), N).verdict is Verdict.DIVERGES


def test_twice_log_converges():
    assert classify_series(2.0 * np.log(N), N).verdict is Verdict.CONVERGES


def test_harmonic_never_converges():
    assert classify_series(np.log(N), N).verdict is not Verdict.CONVERGES


def test_too_few_terms_inconclusive():
    n = np.arange(2, 50, dtype=float)
    assert classify_series(2 * np.log(n), n).verdict is Verdict.INCONCLUSIVE


def test_margin_sign_matches_verdict():
    for coef in (0.3, 0.6, 1.6, 3.0):
        v = classify_series(coef * np.log(N), N)
        if v.verdict is Verdict.DIVERGES:
            assert v.margin > 0
        if v.verdict is Verdict.CONVERGES:
            assert v.margin < 0


@given(st.floats(min_value=0.0, max_value=1.0))
def test_below_log_never_converges(scale):
    assert classify_series(scale * np.log(N), N).verdict is not Verdict.CONVERGES


def test_log_terms_geometric_decay_finite():
    terms = -3.0 * np.arange(1, 200, dtype=float)
    assert classify_log_terms(terms).verdict is Verdict.CONVERGES


def test_short_constant_prefix_not_decided():
    assert classify_log_terms(np.zeros(400)).verdict is Verdict.INCONCLUSIVE


def test_long_constant_terms_infinite():
    assert classify_log_terms(np.zeros(5000)).verdict is Verdict.DIVERGES


@given(st.integers(min_value=6, max_value=999))
def test_short_harmonic_prefix_not_converging(length):
    n = np.arange(1, length + 1, dtype=float)
    assert classify_log_terms(-np.log(n)).verdict is not Verdict.CONVERGES


def test_shifted_envelope_accepts_slow_start():
    n = np.arange(1, 30, dtype=float)
    terms = -1.7 * np.log(n + 0.5) - 0.1 * np.log(n) ** 2
    assert classify_log_terms(terms).verdict is Verdict.CONVERGES
