import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from levylab.cluster import MildSchedule, StarSet, construct_pi0
from levylab.measures import Atoms, RadialPower, tail_mass, trace_moment, trunc_second_moment
from levylab.normalizers import Normalizer, PowLogLog, check_condition_3
from levylab.seeding import derived_rng
from levylab.simulate import (
    SimConfig,
    calibrated_atoms,
    empirical_cluster_hits,
    jump_counts,
    limsup_diagnostic,
    poisson_normal_distance,
    sample_increment,
    sample_increments,
    simulate_path_grid,
    truncation_event_prob,
)


def _rng(k=0):
    return derived_rng(12345, 0, k, 0)


def test_zero_dt_gives_zero(two_atoms):
    assert np.array_equal(sample_increment(two_atoms, None, 0.0, 1.0, _rng()), np.zeros(2))
    with pytest.raises(ValueError):
        sample_increment(two_atoms, None, -1.0, 1.0, _rng())


def test_single_atom_poisson_chi_square():
    m = Atoms(np.array([[0.1, 0.0]]), np.array([2.0]))
    inc = sample_increments(m, None, 1.0, 1.0, _rng(), 100_000)
    assert np.allclose(inc.drift, 0.0)
    N = np.rint(inc.Y[:, 0] / 0.1 + 2.0).astype(int)
    assert np.allclose(inc.Y[:, 0], (N - 2) * 0.1, atol=1e-12)
    K = 8
    observed = np.bincount(np.minimum(N, K), minlength=K + 1)
    probs = stats.poisson.pmf(np.arange(K), 2.0)
    probs = np.append(probs, 1 - probs.sum())
    _, pval = stats.chisquare(observed, probs * len(N))
    assert pval > 0.01


def test_radial_small_jump_covariance():
    rp = RadialPower(2, 1.0, 0.5, directions=[[1.0, 0.0], [0.6, 0.8]], symmetric=True)
    dt, b = 0.3, 0.5
    # eps_fraction = 1 sends every jump <= b to the Gaussian substitute
    inc = sample_increments(rp, None, dt, b, [_rng(k) for k in range(4)], 200_000, eps_fraction=1.0)
    M = dt * trunc_second_moment(rp, b).matrix
    C = inc.Y.T @ inc.Y / len(inc.Y)
    n = len(inc.Y)
    for i in range(2):
        for j in range(2):
            se = math.sqrt((M[i, i] * M[j, j] + M[i, j] ** 2) / n)
            assert abs(C[i, j] - M[i, j]) <= 3 * se


@pytest.mark.parametrize("tb", [(0.01, 1.0), (0.1, 0.9), (0.001, 0.5)])
def test_second_moment_two_atoms(two_atoms, tb):
    t, b = tb
    inc = sample_increments(two_atoms, None, t, b, [_rng(k) for k in range(4)], 100_000)
    sq = (inc.Y**2).sum(axis=1)
    target = t * trace_moment(two_atoms, b)
    assert abs(sq.mean() - target) <= 3 * sq.std(ddof=1) / math.sqrt(len(sq))
    assert target <= 2 * t * max(1e-300, trunc_second_moment(two_atoms, b).matrix.max()) + 1e-15


@pytest.mark.parametrize("tb", [(0.01, 1.0), (0.1, 0.5), (0.001, 0.2)])
def test_second_moment_radial(radial1, tb):
    t, b = tb
    inc = sample_increments(radial1, None, t, b, [_rng(k) for k in range(4)], 100_000)
    sq = (inc.Y**2).sum(axis=1)
    target = t * trace_moment(radial1, b)
    assert abs(sq.mean() - target) <= 3 * sq.std(ddof=1) / math.sqrt(len(sq))


@pytest.mark.parametrize("measure_name", ["two_atoms", "radial1"])
def test_compensation(request, measure_name):
    m = request.getfixturevalue(measure_name)
    inc = sample_increments(m, None, 0.05, 1.0, [_rng(k) for k in range(4)], 100_000)
    mean = inc.Y.mean(axis=0)
    se = inc.Y.std(axis=0, ddof=1) / math.sqrt(len(inc.Y))
    assert np.all(np.abs(mean) <= 4 * se + 1e-15)


def test_poisson_normal_switch():
    lam = 1e4
    # mean and variance of both paths agree exactly at the threshold
    pois = jump_counts(np.array([lam]), _rng(1), 1, math.inf)
    gauss = jump_counts(np.array([lam * (1 + 1e-12)]), _rng(2), 1, lam)
    assert pois.shape == gauss.shape == (1, 1)
    assert poisson_normal_distance(lam, 100_000, _rng(3)) <= 0.01


def test_y_z_split_debug(two_atoms):
    inc = sample_increments(two_atoms, None, 1.0, 0.5, [_rng(k) for k in range(4)], 20_000, debug=True)
    # the 0.8 atom is the only one above b: it may only show up in Z
    assert np.all(inc.Y[:, 0] == 0.0)
    assert np.all(inc.Z[:, 1] == 0.0)
    assert np.all((inc.z_count > 0) == (inc.Z[:, 0] != 0))


def _config(**kw):
    base = dict(norm=Normalizer(PowLogLog(1.0)), n_min=12, n_max=30, replications=300, seed=7)
    base.update(kw)
    return SimConfig(**base)


def test_path_additivity_and_determinism(two_atoms):
    cfg = _config()
    a = simulate_path_grid(two_atoms, None, cfg)
    b = simulate_path_grid(two_atoms, None, cfg)
    assert np.array_equal(a.X, b.X)
    resum = np.cumsum(a.increments[:, ::-1], axis=1)[:, ::-1]
    assert np.max(np.abs(resum - a.X)) <= 1e-12


def test_thread_count_independent(two_atoms):
    cfg = _config(replications=9000)
    a = simulate_path_grid(two_atoms, None, cfg, threads=1)
    b = simulate_path_grid(two_atoms, None, cfg, threads=3)
    assert np.array_equal(a.X, b.X)


@settings(max_examples=10, deadline=None)
@given(st.integers(min_value=0, max_value=2**40))
def test_seed_determines_output(seed):
    m = Atoms(np.array([[0.01]]), np.array([50.0]))
    cfg = _config(seed=seed, replications=4, n_max=16)
    assert np.array_equal(simulate_path_grid(m, None, cfg).X, simulate_path_grid(m, None, cfg).X)


def test_config_validation():
    norm = Normalizer(PowLogLog(1.0))
    for kw in (dict(r=1.5), dict(n_min=5, n_max=3), dict(replications=0), dict(lambda_pn=10.0)):
        with pytest.raises(ValueError):
            SimConfig(norm, **kw)


def test_truncation_examples(sqrt_norm):
    below = Atoms(np.array([[1e-4]]), np.array([1.0]))
    rep = truncation_event_prob(below, sqrt_norm, [10], replications=1000)
    assert rep.exact[0] == 0.0 and rep.mc[0] == 0.0
    # b(r^n) = sqrt(r^n) = 0.5 needs r^n = 0.25; choose r = 0.25 (n = 1) so the 0.8 atom lies above b
    far = Atoms(np.array([[0.8]]), np.array([1.0]))
    rep = truncation_event_prob(far, sqrt_norm, [1], r=0.25, replications=100_000)
    assert rep.exact[0] == pytest.approx(-math.expm1(-0.25 * tail_mass(far, 0.5)))
    assert rep.agree.all()


def test_truncation_matches_exact(two_atoms, loglog_norm):
    rep = truncation_event_prob(two_atoms, loglog_norm, [1, 3, 6, 10], replications=100_000)
    assert rep.agree.all()


def test_truncation_partial_sums_constructed(loglog_norm):
    star = StarSet(np.array([[1.0, 0.0]]), np.array([1.0]))
    con = construct_pi0(star, loglog_norm, MildSchedule(k_max=8))
    rep = truncation_event_prob(con.measure, loglog_norm, np.arange(12, 80), replications=200)
    assert check_condition_3(con.measure, loglog_norm).verdict == "finite"
    assert rep.partial_sums[-1] < 1.0


def test_limsup_diagnostic(loglog_norm):
    m = calibrated_atoms(1.0, loglog_norm)
    stats_ = simulate_path_grid(m, None, _config(n_max=40, replications=2000))
    tr = limsup_diagnostic(stats_)
    # smoke bound: windowed max within a decade of alpha_0 = 1
    assert 0.1 <= tr.quantiles[0.5] <= 10.0
    with pytest.raises(ValueError):
        limsup_diagnostic(stats_, (100, 200))
    narrow = limsup_diagnostic(stats_, (12, 20)).window_max
    wide = limsup_diagnostic(stats_, (12, 40)).window_max
    assert np.all(wide >= narrow)
    assert np.all(np.diff(stats_.running_max, axis=1) >= 0)


def test_calibrated_atoms_profile(loglog_norm):
    from levylab.integral_test import SyntheticProfile

    m = calibrated_atoms(1.0, loglog_norm, n_atoms=30)
    syn = SyntheticProfile(1.0, loglog_norm)
    for x in np.log(m.points[:, 0]):
        got = math.log(trunc_second_moment(m, math.exp(x)).matrix[0, 0])
        assert got == pytest.approx(float(syn.log_V(loglog_norm.log_b_inverse(x))), abs=1e-9)


def test_cluster_hits(loglog_norm):
    half = calibrated_atoms(1.0, loglog_norm)
    # mirrored copy so that the law is symmetric
    m = Atoms(np.vstack([half.points, -half.points]), np.concatenate([half.masses, half.masses]) / 2)
    st_ = simulate_path_grid(m, None, _config(n_max=40, replications=2000))
    assert empirical_cluster_hits(st_, [0.0], 0.0).counts.sum() == 0
    big = empirical_cluster_hits(st_, [0.0], 1e12)
    q = big.hits.shape[1] * 3 // 4
    assert big.hits[:, q:].all()
    a = empirical_cluster_hits(st_, [0.3], 0.1).hits.sum()
    b = empirical_cluster_hits(st_, [-0.3], 0.1).hits.sum()
    n = st_.normalized.size
    p = (a + b) / (2 * n)
    z = (a - b) / n / math.sqrt(2 * p * (1 - p) / n)
    assert abs(z) < 2.576
    with pytest.raises(ValueError):
        empirical_cluster_hits(st_, [0.0], -1.0)
