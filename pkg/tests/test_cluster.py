import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levylab.cluster import (
    ConstructionError,
    MildSchedule,
    PaperSchedule,
    StarSet,
    active_indices,
    anderson_ray_check,
    construct_pi0,
    gaussian_hit_log_prob_1d,
    membership,
    verify_binverse_sum,
    verify_telescoping,
    verify_v_bound,
    wilson_interval,
)
from levylab.integral_test import MeasureProfile, SyntheticProfile, alpha0_estimate
from levylab.measures import NestedLogAtoms, integrability_diagnostic_41
from levylab.nestedlog import NestedLogNumber
from levylab.normalizers import ExpLogLogPow, Normalizer, PowLogLog
from scipy.stats import norm as normal

SIGMA3 = StarSet(np.array([[1.0, 0.0], [0.0, 1.0], [math.sqrt(0.5), math.sqrt(0.5)]]), np.array([1.0, 0.7, 0.5]))
SINGLE = StarSet(np.array([[1.0, 0.0]]), np.array([1.0]))


def test_active_indices_examples():
    assert active_indices(SIGMA3, 2) == [1]
    assert active_indices(SIGMA3, 3) == [1, 2]
    assert active_indices(SIGMA3, 4) == [1, 2, 3]
    with pytest.raises(ValueError):
        active_indices(SIGMA3, 0)


def test_starset_validation_and_membership():
    with pytest.raises(ValueError):
        StarSet(np.array([[1.0, 0.0]]), np.array([0.9]))
    with pytest.raises(ValueError):
        StarSet(np.array([[1.0, 0.1]]), np.array([1.0]))
    assert SIGMA3.contains([0.0, -0.7])
    assert SIGMA3.contains([0.0, 0.0])
    assert not SIGMA3.contains([0.0, 0.8])


@given(st.floats(min_value=-1.0, max_value=1.0))
def test_starset_symmetric_starlike(c):
    x = c * SIGMA3.directions[2] * 0.5
    assert SIGMA3.contains(x) == SIGMA3.contains(-x)
    if SIGMA3.contains(x):
        assert SIGMA3.contains(0.3 * x)


@pytest.mark.parametrize("schedule", [MildSchedule(k_max=8), PaperSchedule(k_max=2)], ids=["mild", "paper"])
def test_identities(loglog_norm, schedule):
    con = construct_pi0(SIGMA3, loglog_norm, schedule)
    radii = [a.radius for a in con.measure.atoms]
    assert all(a > b for a, b in zip(radii, radii[1:]))
    assert all(a.mass > NestedLogNumber.from_log(-1e300) for a in con.measure.atoms)
    assert all(math.isfinite(r.log_D) for r in con.records)
    assert verify_telescoping(con.measure, con).max_residual <= 1e-9
    vb = verify_v_bound(con, n_probes=30)
    assert len(vb.probe_lu) == 30 and vb.holds
    br = verify_binverse_sum(con.measure, loglog_norm, con)
    assert np.max(br.identity_residual) <= 1e-9
    assert br.verdict == "finite"


def test_single_segment_k6(loglog_norm):
    con = construct_pi0(SINGLE, loglog_norm, MildSchedule(k_max=6))
    assert verify_telescoping(con.measure, con).max_residual <= 1e-9


def test_paper_schedule_k4_masses(loglog_norm):
    con = construct_pi0(SIGMA3, loglog_norm, PaperSchedule(k_max=4))
    assert all(math.isfinite(r.log_D) for r in con.records)
    assert con.k0 >= 2


def test_log_D_oracle(loglog_norm):
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 50
    sched = MildSchedule(k_max=8)
    con = construct_pi0(SIGMA3, loglog_norm, sched)
    recs = con.records
    for a, b in zip(recs, recs[1:]):
        # sigma_a^2/(2 h_a^2) - sigma_b^2/(2 h_b^2) with h = exp(H)
        D = mpmath.mpf(a.sigma) ** 2 / (2 * mpmath.exp(2 * mpmath.mpf(a.H))) - mpmath.mpf(b.sigma) ** 2 / (
            2 * mpmath.exp(2 * mpmath.mpf(b.H))
        )
        assert float(mpmath.log(D)) == pytest.approx(a.log_D, abs=1e-12)


def test_mutation_breaks_first_prefix(loglog_norm):
    con = construct_pi0(SIGMA3, loglog_norm, MildSchedule(k_max=8))
    cut = dataclasses.replace(con.measure, atoms=con.measure.atoms[1:])
    res = verify_telescoping(cut, con).residuals
    assert res[0] > 1e-3
    assert np.all(res[1:] <= 1e-9)


def test_negative_mass_rejected(loglog_norm):
    # a flat schedule cannot absorb the sigma jumps
    with pytest.raises(ConstructionError):
        construct_pi0(SIGMA3, loglog_norm, MildSchedule(beta=0.01, k_max=6), k0=2)


def test_integrability_on_construction(loglog_norm):
    con = construct_pi0(SIGMA3, loglog_norm, MildSchedule(k_max=8))
    assert integrability_diagnostic_41(con.measure, 1.0).verdict == "finite"


def test_other_family_construction():
    norm = Normalizer(ExpLogLogPow(1.0, 0.5))
    con = construct_pi0(SIGMA3, norm, MildSchedule(k_max=6))
    assert verify_telescoping(con.measure, con).max_residual <= 1e-9


# -- membership ---------------------------------------------------------------------


def test_hit_prob_oracle():
    for x, eps, sd in [(0.3, 0.1, 0.5), (2.0, 0.2, 0.1), (0.0, 0.05, 1.0)]:
        exact = normal.cdf((x + eps) / sd) - normal.cdf((x - eps) / sd)
        assert math.exp(gaussian_hit_log_prob_1d(x, eps, math.log(sd))) == pytest.approx(exact, rel=1e-10)
    # far tail stays finite in log space
    assert math.isfinite(gaussian_hit_log_prob_1d(50.0, 0.1, 0.0))


def test_wilson_contains_estimate():
    lo, hi = wilson_interval(30, 1000)
    assert lo < 0.03 < hi
    lo, hi = wilson_interval(0, 1000)
    assert lo == 0.0 and hi > 0.0


@pytest.mark.parametrize("x,label", [(0.0, "Member"), (0.5, "Member"), (0.9, "Member"), (1.1, "NonMember"), (2.0, "NonMember")])
def test_membership_d1(loglog_norm, x, label):
    prof = SyntheticProfile(1.0, loglog_norm)
    assert membership([x], prof, loglog_norm, 0.05).label == label
    assert membership([-x], prof, loglog_norm, 0.05).label == label


def test_membership_scales_with_lambda(loglog_norm):
    prof = SyntheticProfile(2.0, loglog_norm)
    assert membership([1.0], prof, loglog_norm, 0.05).label == "Member"
    assert membership([3.0], prof, loglog_norm, 0.05).label == "NonMember"


def test_membership_orthogonal_single_segment(loglog_norm):
    con = construct_pi0(SINGLE, loglog_norm, MildSchedule(k_max=8))
    prof = MeasureProfile(con.measure, loglog_norm)
    rep = membership([0.0, 0.5], prof, loglog_norm, 0.05)
    assert rep.label == "NonMember"
    assert rep.method == "rank-one"


def test_membership_along_segment_brackets_alpha0(loglog_norm):
    con = construct_pi0(SINGLE, loglog_norm, MildSchedule(k_max=8))
    prof = MeasureProfile(con.measure, loglog_norm)
    est = alpha0_estimate(prof, loglog_norm, samples=400)
    inside = membership([0.5 * est.alpha_lo, 0.0], prof, loglog_norm, 0.01)
    outside = membership([2.0 * est.alpha_hi, 0.0], prof, loglog_norm, 0.01)
    assert inside.label == "Member"
    assert outside.label == "NonMember"


def test_membership_symmetric_shared_seed(loglog_norm):
    prof = SyntheticProfile(1.0, loglog_norm, shape=np.diag([1.0, 0.5]))
    a = membership([0.5, 0.0], prof, loglog_norm, 0.1, mc_budget=20_000, grid_points=30, seed=3)
    b = membership([-0.5, 0.0], prof, loglog_norm, 0.1, mc_budget=20_000, grid_points=30, seed=3)
    assert a.label == b.label
    assert np.array_equal(a.log_integrand, b.log_integrand)


def test_membership_d2_member(loglog_norm):
    prof = SyntheticProfile(1.0, loglog_norm, shape=np.diag([1.0, 0.5]))
    rep = membership([0.5, 0.0], prof, loglog_norm, 0.1, mc_budget=20_000, grid_points=30)
    assert rep.label == "Member"
    assert rep.method == "monte-carlo"


def test_membership_tiny_budget_inconclusive(loglog_norm):
    prof = SyntheticProfile(1.0, loglog_norm, shape=np.diag([1.0, 0.5]))
    rep = membership([1.5, 0.0], prof, loglog_norm, 0.1, mc_budget=200, grid_points=30)
    assert rep.label == "Inconclusive"


def test_membership_rejects_bad_epsilon(loglog_norm):
    with pytest.raises(ValueError):
        membership([0.1], SyntheticProfile(1.0, loglog_norm), loglog_norm, 0.0)


def test_anderson_d1_closed_form(loglog_norm):
    prof = SyntheticProfile(1.0, loglog_norm)
    lt = -np.exp(np.linspace(3, 12, 10))
    rep = anderson_ray_check([1.0], prof, loglog_norm, lt, 0.1)
    assert rep.monotone
    # exact CDF arithmetic: nonincreasing in s at each t
    assert np.all(np.diff(rep.prob, axis=1) >= -1e-15)
    same = anderson_ray_check([1.0], prof, loglog_norm, lt, 0.1, s_values=[1.0, 1.0])
    assert np.array_equal(same.prob[:, 0], same.prob[:, 1])
    neg = anderson_ray_check([-1.0], prof, loglog_norm, lt, 0.1)
    assert np.allclose(neg.prob, rep.prob, rtol=1e-12)


def test_anderson_d2_within_ci(loglog_norm):
    prof = SyntheticProfile(1.0, loglog_norm, shape=np.array([[1.0, 0.3], [0.3, 0.5]]))
    lt = -np.exp(np.linspace(2, 6, 5))
    rep = anderson_ray_check([0.6, 0.4], prof, loglog_norm, lt, 0.2, mc_budget=40_000)
    assert rep.monotone
