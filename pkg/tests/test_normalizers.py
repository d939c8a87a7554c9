import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from levylab.measures import Atoms, RadialPower, doubling_block_atoms
from levylab.normalizers import (
    Const,
    ConditionFailure,
    ExpLogLogPow,
    Normalizer,
    PowLog,
    PowLogLog,
    Product,
    T0_DEFAULT,
    atom_binverse_log_terms,
    check_condition_3,
    check_condition_49,
    check_condition_50,
    check_condition_xy,
    check_lemma_cond,
    class_index,
    f_tau_ratio,
    log_t_grid,
    slow_variation_ratio,
    validate_normalizer,
)

FAMILIES = [Const(1.0), PowLogLog(0.5), PowLogLog(1.0), PowLog(1.0), ExpLogLogPow(1.0, 0.6), Product((PowLogLog(1.0), Const(2.0)))]


def test_sqrt_normalizer(sqrt_norm):
    for t in (1e-3, 1e-9, T0_DEFAULT):
        if t <= T0_DEFAULT:
            assert sqrt_norm.b(t) == pytest.approx(math.sqrt(t), rel=1e-12)
    assert sqrt_norm.b(1.0) == pytest.approx(1.0)


def test_b_at_t0(const_norm, loglog_norm):
    t = math.exp(-math.e**2)
    assert const_norm.b(t) == pytest.approx(math.sqrt(2 * t), rel=1e-12)
    assert loglog_norm.b(t) == pytest.approx(math.sqrt(t / 2), rel=1e-12)


def test_b_domain(const_norm):
    for bad in (0.0, -1.0, 1.5):
        with pytest.raises(ValueError):
            const_norm.b(bad)


def test_b_inverse_examples(sqrt_norm):
    assert sqrt_norm.b_inverse(0.1) == pytest.approx(0.01, rel=1e-12)
    for t in (1e-3, 1e-9):
        assert sqrt_norm.b_inverse(sqrt_norm.b(t)) == pytest.approx(t, rel=1e-10)
    # t = exp(-e^(e^4)) is far below float range; compare in log coordinates
    lt = -math.exp(math.exp(4.0))
    assert sqrt_norm.log_b_inverse(sqrt_norm.log_b(lt)) == pytest.approx(lt, rel=1e-10)


@pytest.mark.parametrize("h", FAMILIES, ids=str)
def test_round_trip_log_spaced(h):
    norm = Normalizer(h)
    for lt in -np.exp(np.linspace(0.1, 40.0, 20)):
        assert norm.log_b_inverse(norm.log_b(lt)) == pytest.approx(lt, rel=1e-10)


@pytest.mark.parametrize("h", FAMILIES, ids=str)
def test_continuation_monotone_and_anchored(h):
    norm = Normalizer(h)
    lt = np.sort(log_t_grid(norm, continuation=True))
    lb = norm.log_b(lt)
    assert np.all(np.diff(lb) > 0)
    assert norm.b(1.0) == pytest.approx(1.0)
    # strictly increasing across the junction
    s0 = norm.s0
    assert norm.log_b(-s0 - 1e-6) < norm.log_b(-s0) < norm.log_b(-s0 + 1e-6)


@given(st.floats(min_value=1e-300, max_value=1.0), st.floats(min_value=1e-300, max_value=1.0))
def test_inverse_monotone(a, b):
    norm = Normalizer(PowLogLog(1.0))
    if a < b * (1 - 1e-9):
        assert norm.log_b_inverse(math.log(a)) < norm.log_b_inverse(math.log(b))


@given(st.floats(min_value=-1e6, max_value=-1e-3))
def test_round_trip_property(lt):
    norm = Normalizer(PowLogLog(1.0))
    assert norm.log_b_inverse(norm.log_b(lt)) == pytest.approx(lt, rel=1e-10)


def test_condition_49_examples(sqrt_norm):
    assert check_condition_49(sqrt_norm, 0.4).passed
    res = check_condition_49(sqrt_norm, 0.6)
    assert not res.passed and res.witness is not None
    norm = Normalizer(PowLogLog(1.0))
    assert check_condition_49(norm, 0.45, log_t_grid(norm, u_max=6.0)).passed
    with pytest.raises(ValueError):
        check_condition_49(sqrt_norm, 0.3)


def test_condition_50_examples(sqrt_norm):
    res = check_condition_50(sqrt_norm, 0.01)
    assert res.passed and res.worst >= 1.0 - 1e-12
    norm = Normalizer(PowLog(1.0))
    assert check_condition_50(norm, 0.1, delta_log_t=-math.exp(3.0)).passed
    same = check_condition_50(norm, 0.1, grid=np.array([-20.0]))
    assert same.worst == pytest.approx(1.0)


@pytest.mark.parametrize("h", [h for h in FAMILIES if class_index(h) == 0], ids=str)
@pytest.mark.parametrize("eps", [0.5, 0.1, 0.01])
def test_condition_50_class_zero(h, eps):
    assert check_condition_50(Normalizer(h), eps).passed


def test_validate_raises_on_failure(sqrt_norm):
    with pytest.raises(ConditionFailure):
        validate_normalizer(sqrt_norm, rho=0.6)


def test_condition_xy_examples():
    for q in (0.5, 1.0, 3.0):
        assert check_condition_xy(PowLogLog(q), 0.5).passed
    assert not check_condition_xy(PowLog(1.0), 0.9).passed
    assert check_condition_xy(ExpLogLogPow(1.0, 0.6), 0.6, x0_lu=0.0).passed


def test_slow_variation():
    log_x = np.array([1e3, 1e6, 1e12])
    for h in FAMILIES:
        r = slow_variation_ratio(h, log_x)
        assert abs(r[-1] - 1.0) <= 1e-3
    assert abs(f_tau_ratio(PowLogLog(1.0), 0.5, np.array([1e12]))[0] - 1.0) < 0.01


def test_condition_3_sqrt_finite(sqrt_norm, radial1, two_atoms):
    assert check_condition_3(radial1, sqrt_norm).verdict == "finite"
    # int_0^1 Pibar(sqrt t) dt = int_0^1 (t^(-1/2) - 1) dt = 1
    assert check_condition_3(radial1, sqrt_norm).value == pytest.approx(1.0, rel=1e-3)
    rep = check_condition_3(two_atoms, sqrt_norm)
    assert rep.verdict == "finite" and rep.direct_verdict == "finite"


def test_condition_3_atom_forms_agree(two_atoms):
    for h in FAMILIES:
        rep = check_condition_3(two_atoms, Normalizer(h))
        assert rep.value == pytest.approx(rep.direct_value, rel=1e-6)


def test_condition_3_blockwise_divergent():
    m = doubling_block_atoms(1020)
    assert check_condition_3(m, Normalizer(PowLog(1.0))).verdict == "infinite"
    assert check_condition_3(m, Normalizer(PowLogLog(1.0))).verdict == "finite"


def test_blockwise_terms_oracle():
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 120
    m = doubling_block_atoms(200)
    lt = atom_binverse_log_terms(m, Normalizer(PowLog(1.0)))
    for n in (5, 10, 40, 120, 200):
        # solve log b = -2^n for s = log(1/t) directly: -s/2 + log(log s)/2 - log s
        target = -mpmath.mpf(2) ** n
        s = mpmath.findroot(lambda x: -x / 2 + mpmath.log(mpmath.log(x)) / 2 - mpmath.log(x) - target, -2 * target)
        # log m + log t with log m = log(3/4) - n log 4 + 2^(n+1)
        oracle = mpmath.log(0.75) - n * mpmath.log(4) + mpmath.mpf(2) ** (n + 1) - s
        assert float(oracle) == pytest.approx(lt[n - 1], abs=1e-9)
    # asymptotically harmonic: m_n b^<-(x_n) ~ 3 / ((n + 1) log 2)
    assert math.exp(lt[-1]) * 201 * math.log(2.0) == pytest.approx(3.0, rel=1e-6)


def test_lemma_cond_examples(sqrt_norm, radial1, two_atoms):
    rep = check_lemma_cond(radial1, sqrt_norm, n_blocks=200)
    assert rep.ratio_verdict == "to-zero"
    # closed form of the ratio: sqrt(t) * 2c (-log sqrt t) for alpha = 1
    lt = rep.ratio_log_t
    assert np.allclose(rep.ratio, np.exp(lt / 2) * (-lt / 2), rtol=1e-9)
    rep2 = check_lemma_cond(two_atoms, Normalizer(PowLogLog(1.0)), n_blocks=200)
    assert rep2.ratio_verdict == "to-zero"
    full = check_condition_3(two_atoms, sqrt_norm).verdict
    assert check_condition_3(two_atoms, sqrt_norm, eps=1.0).verdict == full


def test_family_validation():
    with pytest.raises(ValueError):
        PowLogLog(0.0)
    with pytest.raises(ValueError):
        ExpLogLogPow(1.0, 1.5)
    with pytest.raises(ValueError):
        Normalizer(PowLogLog(1.0), t0=0.5)
