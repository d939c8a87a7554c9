"""Path simulation near ``t = 0`` through the truncation decomposition.

An increment over a time span ``dt`` at truncation level ``b`` is split as

    drift  dt * nu(b)
    Y      compensated jumps with |y| <= b
    Z      uncompensated jumps with |y| > b

Atoms with expected count above ``lambda_pn`` switch from Poisson counts to
a matching normal.  For radial-power measures jumps below ``eps`` are
replaced by a centred Gaussian with the same covariance.

Randomness for replication chunk ``c``, block ``n`` and component ``k`` comes
from ``derived_rng(seed, c, n, k)``, so the output does not depend on the
order in which chunks are processed.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .measures import (
    Atoms,
    LevyMeasure,
    RadialPower,
    _inside_mask,
    atom_view,
    drift_compensator,
    log_tail_mass,
    psd_sqrt,
    trunc_second_moment,
)
from .normalizers import Normalizer, validate_normalizer
from .seeding import derived_rng

CHUNK = 4096

# component streams
_ATOMS, _SMALL, _MID, _BIG = 0, 1, 2, 3


@dataclass(frozen=True)
class SimConfig:
    norm: Normalizer
    r: float = 0.5
    n_min: int = 1
    n_max: int = 30
    replications: int = 100
    seed: int = 0
    lambda_pn: float = 1e4
    eps_fraction: float = 1.0 / 32.0
    debug: bool = False

    def __post_init__(self):
        if not 0 < self.r < 1:
            raise ValueError("r must lie in (0, 1)")
        if not 1 <= self.n_min <= self.n_max:
            raise ValueError("need 1 <= n_min <= n_max")
        if self.replications < 1:
            raise ValueError("need at least one replication")
        if self.lambda_pn < 1e2:
            raise ValueError("lambda_pn must be at least 100")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if not 0 < self.eps_fraction <= 1:
            raise ValueError("eps_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class Increment:
    drift: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    z_count: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.drift + self.Y + self.Z


def jump_counts(lam: np.ndarray, rng: np.random.Generator, size: int, lambda_pn: float):
    """Centred counts ``N - lam``; columns with ``lam > lambda_pn`` use ``sqrt(lam) * N(0, 1)``."""
    lam = np.asarray(lam, dtype=float)
    big = lam > lambda_pn
    out = np.empty((size, lam.size))
    if (~big).any():
        out[:, ~big] = rng.poisson(lam[~big], size=(size, int((~big).sum()))) - lam[~big]
    if big.any():
        out[:, big] = rng.standard_normal((size, int(big.sum()))) * np.sqrt(lam[big])
    return out


def _atom_increments(measure, dt, b, rng, size, lambda_pn, debug):
    v = atom_view(measure)
    d = v.U.shape[1]
    Y = np.zeros((size, d))
    Z = np.zeros((size, d))
    zc = np.zeros(size, dtype=np.int64)
    inside = _inside_mask(measure, v, math.log(b))
    log_dt = math.log(dt)
    log_lam = v.log_m + log_dt
    ins = np.flatnonzero(inside)
    if ins.size:
        # huge intensities only appear for tiny radii: use the Gaussian limit with variance dt m r^2
        gauss = log_lam[ins] > math.log(lambda_pn)
        pois = ins[~gauss]
        if pois.size:
            lam = np.exp(log_lam[pois])
            C = jump_counts(lam, rng, size, math.inf)
            Y += C @ (v.U[pois] * np.exp(v.log_r[pois])[:, None])
        g = ins[gauss]
        if g.size:
            sd = np.exp(0.5 * (v.log_w[g] + log_dt))
            Y += (rng.standard_normal((size, g.size)) * sd) @ v.U[g]
    out = np.flatnonzero(~inside)
    if out.size:
        lam = np.exp(log_lam[out])
        N = rng.poisson(lam, size=(size, out.size))
        Z += N @ (v.U[out] * np.exp(v.log_r[out])[:, None])
        zc += N.sum(axis=1)
    if debug and out.size and np.any(v.log_r[out] <= math.log(b)):
        raise AssertionError("a jump of size <= b entered the Z part")
    return Y, Z, zc


def _radial_radii(measure: RadialPower, lo: float, hi: float, k: int, rng) -> np.ndarray:
    """Inverse-CDF radii for the density ``u^(-1-alpha)`` on ``(lo, hi]``."""
    a = measure.alpha
    U = rng.random(k)
    return (hi ** -a + U * (lo ** -a - hi ** -a)) ** (-1.0 / a)


def _radial_jumps(measure: RadialPower, dt, lo, hi, rng, size):
    """Sum of jumps in ``(lo, hi]`` per replication, plus per-replication counts."""
    Zs, w = measure.angular()
    W = w.sum()
    mass = W * measure.coef * (lo ** -measure.alpha - hi ** -measure.alpha) / measure.alpha
    counts = rng.poisson(dt * mass, size=size)
    total = int(counts.sum())
    S = np.zeros((size, measure.dim))
    if total:
        radii = _radial_radii(measure, lo, hi, total, rng)
        dirs = Zs[rng.choice(len(w), size=total, p=w / W)]
        owner = np.repeat(np.arange(size), counts)
        np.add.at(S, owner, radii[:, None] * dirs)
    return S, counts, total


def _radial_mean_annulus(measure: RadialPower, lo: float, hi: float) -> np.ndarray:
    """``int_{lo < |y| <= hi} y Pi(dy)``."""
    Zs, w = measure.angular()
    a = measure.alpha
    if abs(a - 1.0) < 1e-14:
        rad = measure.coef * math.log(hi / lo)
    else:
        rad = measure.coef * (hi ** (1 - a) - lo ** (1 - a)) / (1 - a)
    return rad * (w[:, None] * Zs).sum(axis=0)


def _radial_increments(measure: RadialPower, dt, b, rngs, size, eps_fraction, debug):
    d = measure.dim
    b_eff = min(b, 1.0)
    eps = eps_fraction * b_eff
    M = trunc_second_moment(measure, eps).matrix
    Y = rngs[_SMALL].standard_normal((size, d)) @ psd_sqrt(dt * M).T
    if eps < b_eff:
        S, _, _ = _radial_jumps(measure, dt, eps, b_eff, rngs[_MID], size)
        Y += S - dt * _radial_mean_annulus(measure, eps, b_eff)
    Z = np.zeros((size, d))
    zc = np.zeros(size, dtype=np.int64)
    if b_eff < 1.0:
        Z, zc, _ = _radial_jumps(measure, dt, b_eff, 1.0, rngs[_BIG], size)
    return Y, Z, zc


def sample_increments(
    measure: LevyMeasure,
    gamma,
    dt: float,
    trunc_b: float,
    rngs,
    size: int,
    lambda_pn: float = 1e4,
    eps_fraction: float = 1.0 / 32.0,
    debug: bool = False,
) -> Increment:
    """``size`` independent copies of ``X_dt`` split into drift, Y and Z parts.

    ``rngs`` is a single generator or a sequence indexed by component.
    """
    if not dt >= 0:
        raise ValueError("dt must be nonnegative")
    if not trunc_b > 0:
        raise ValueError("truncation level must be positive")
    if isinstance(rngs, np.random.Generator):
        rngs = [rngs] * 4
    d = measure.dim
    if dt == 0:
        z = np.zeros((size, d))
        return Increment(np.zeros(d), z, z.copy(), np.zeros(size, dtype=np.int64))
    drift = dt * drift_compensator(measure, gamma, min(trunc_b, 1.0))
    if isinstance(measure, RadialPower):
        Y, Z, zc = _radial_increments(measure, dt, trunc_b, rngs, size, eps_fraction, debug)
    else:
        Y, Z, zc = _atom_increments(measure, dt, trunc_b, rngs[_ATOMS], size, lambda_pn, debug)
    return Increment(drift, Y, Z, zc)


def sample_increment(measure, gamma, dt, trunc_b, rng, **kw) -> np.ndarray:
    return sample_increments(measure, gamma, dt, trunc_b, rng, 1, **kw).total[0]


def calibrated_atoms(lam: float, norm: Normalizer, n_atoms: int = 40, step: float = 0.5) -> Atoms:
    """One-dimensional atoms whose truncated variance follows ``lam^2 / (2 h^2(1/t))`` along ``b``.

    Radii are ``b(t0) exp(-j step)``; masses telescope so that
    ``V(r_j) = lam^2 / (2 h^2(1/b^{<-}(r_j)))`` exactly at every radius, which
    makes the integral-test constant of the profile equal to ``lam`` on the
    represented range.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    lb0 = float(norm.log_b(-norm.s0))
    log_r = lb0 - step * np.arange(n_atoms)
    log_target = np.array(
        [2 * math.log(lam) - math.log(2.0) - 2 * float(norm.log_h_of_t(norm.log_b_inverse(x))) for x in log_r]
    )
    target = np.exp(log_target)
    w = target - np.append(target[1:], 0.0)
    if np.any(w <= 0):
        raise ValueError("profile is not increasing on the radius grid")
    r = np.exp(log_r)
    return Atoms(r[:, None], w / r**2)


# -- paths on geometric grids -------------------------------------------------


@dataclass(frozen=True)
class PathStats:
    n: np.ndarray
    t: np.ndarray
    b: np.ndarray
    X: np.ndarray  # (R, blocks, d)
    increments: np.ndarray  # (R, blocks, d)
    normalized: np.ndarray  # (R, blocks)
    running_max: np.ndarray  # (R, blocks), over n_min..n
    z_hit: np.ndarray  # (R, blocks): Z part jumped inside the block

    @property
    def replications(self) -> int:
        return self.X.shape[0]

    def window_max(self) -> np.ndarray:
        return self.normalized.max(axis=1)


def _chunk_rngs(seed, chunk, block):
    return [derived_rng(seed, chunk, block, k) for k in range(4)]


def simulate_path_grid(
    measure: LevyMeasure, gamma, config: SimConfig, validate: bool = True, threads: int = 1
) -> PathStats:
    """``X`` at ``t_n = r^n`` built from independent block increments with truncation ``b(t_n)``.

    Chunks of replications may run on ``threads`` workers; every chunk owns
    its random streams and output slice, so the result is thread-count independent.
    """
    if validate:
        validate_normalizer(config.norm)
    ns = np.arange(config.n_min, config.n_max + 1)
    t = config.r ** ns.astype(float)
    b = np.array([float(config.norm.b(x)) for x in t])
    R, B, d = config.replications, len(ns), measure.dim
    inc = np.zeros((R, B, d))
    zhit = np.zeros((R, B), dtype=bool)

    def run_chunk(c0: int) -> None:
        size = min(CHUNK, R - c0)
        chunk = c0 // CHUNK
        for j, n in enumerate(ns):
            # block (t_{n+1}, t_n]; the last block also covers [0, t_{n_max+1}]
            dt = t[j] if j == B - 1 else t[j] - t[j + 1]
            res = sample_increments(
                measure, gamma, dt, b[j], _chunk_rngs(config.seed, chunk, int(n)), size,
                config.lambda_pn, config.eps_fraction, config.debug,
            )
            inc[c0:c0 + size, j] = res.total
            zhit[c0:c0 + size, j] = res.z_count > 0

    starts = range(0, R, CHUNK)
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_chunk, starts))
    else:
        for c0 in starts:
            run_chunk(c0)
    X = np.cumsum(inc[:, ::-1], axis=1)[:, ::-1]
    normalized = np.linalg.norm(X, axis=2) / b
    return PathStats(ns, t, b, X, inc, normalized, np.maximum.accumulate(normalized, axis=1), zhit)


# -- diagnostics ----------------------------------------------------------------


@dataclass(frozen=True)
class TruncationReport:
    n: np.ndarray
    exact: np.ndarray
    mc: np.ndarray
    se: np.ndarray
    agree: np.ndarray
    partial_sums: np.ndarray


def truncation_event_prob(
    measure: LevyMeasure, norm: Normalizer, n, r: float = 0.5, replications: int = 100_000, seed: int = 0
) -> TruncationReport:
    """``P{Z^{(b(r^n))} jumps on [0, r^n]} = 1 - exp(-r^n tail(b(r^n)))``, exact and simulated."""
    ns = np.atleast_1d(np.asarray(n, dtype=int))
    exact, mc, se = [], [], []
    for n_ in ns:
        t = r ** float(n_)
        lb = float(norm.log_b(math.log(t)))
        lt = log_tail_mass(measure, min(lb, 0.0))
        p = -math.expm1(-math.exp(lt + math.log(t))) if lt > -math.inf else 0.0
        exact.append(p)
        hits = 0
        for c0 in range(0, replications, CHUNK):
            size = min(CHUNK, replications - c0)
            res = sample_increments(measure, None, t, math.exp(lb), _chunk_rngs(seed, c0 // CHUNK, int(n_)), size)
            hits += int((res.z_count > 0).sum())
        ph = hits / replications
        mc.append(ph)
        se.append(math.sqrt(max(p * (1 - p), 1e-300) / replications))
    exact, mc, se = map(np.array, (exact, mc, se))
    agree = np.abs(mc - exact) <= 3 * se + 1e-15
    return TruncationReport(ns, exact, mc, se, agree, np.cumsum(exact))


@dataclass(frozen=True)
class LimsupTrace:
    window: tuple
    window_max: np.ndarray
    quantiles: dict
    trend_slope: float
    median_running_max: np.ndarray


def limsup_diagnostic(stats: PathStats, window: tuple[int, int] | None = None) -> LimsupTrace:
    """Windowed maxima of ``|X_t|/b(t)``; a diagnostic, not an estimate of the a.s. limit."""
    lo, hi = (int(stats.n[0]), int(stats.n[-1])) if window is None else window
    sel = (stats.n >= lo) & (stats.n <= hi)
    if not sel.any():
        raise ValueError("empty window")
    wm = stats.normalized[:, sel].max(axis=1)
    q = {p: float(np.quantile(wm, p)) for p in (0.05, 0.5, 0.95)}
    rm = np.maximum.accumulate(stats.normalized[:, sel], axis=1)
    med = np.median(rm, axis=0)
    slope = float(np.polyfit(stats.n[sel], med, 1)[0]) if sel.sum() > 1 else 0.0
    return LimsupTrace((lo, hi), wm, q, slope, med)


@dataclass(frozen=True)
class ClusterHits:
    hits: np.ndarray  # (R, blocks)
    counts: np.ndarray  # per replication
    cumulative: np.ndarray  # (R, blocks)
    frequency: np.ndarray  # per block
    model_prob: np.ndarray | None


def empirical_cluster_hits(stats: PathStats, x, epsilon: float, profile=None, norm=None) -> ClusterHits:
    """Indicators of ``|X_{t_n}/b(t_n) - x| < epsilon``, optionally against the Gaussian model."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    Xn = stats.X / stats.b[None, :, None]
    hits = np.linalg.norm(Xn - x, axis=2) < epsilon
    model = None
    if profile is not None and norm is not None and epsilon > 0:
        from .cluster import _hit_prob

        model = []
        for j, t in enumerate(stats.t):
            lt = math.log(t)
            ls, S = profile.log_cov(lt)
            p, *_ = _hit_prob(x, epsilon, ls - float(norm.log_b2_over_t(lt)), S, derived_rng(0, 2, j, 0), 100_000)
            model.append(p)
        model = np.array(model)
    return ClusterHits(hits, hits.sum(axis=1), np.cumsum(hits, axis=1), hits.mean(axis=0), model)


# -- switch diagnostics ----------------------------------------------------------


def poisson_normal_distance(lam: float, draws: int, rng: np.random.Generator) -> float:
    """Sup distance between the Poisson CDF and the empirical CDF of the normal substitute.

    The substitute is continuous, so it is compared on the lattice with a
    half-unit continuity shift: ``F_emp(k + 1/2)`` against ``P{N <= k}``.
    """
    from scipy.stats import poisson

    sample = np.sort(lam + math.sqrt(lam) * rng.standard_normal(draws))
    sd = math.sqrt(lam)
    k = np.arange(max(0, int(lam - 8 * sd)), int(lam + 8 * sd) + 1)
    emp = np.searchsorted(sample, k + 0.5, side="right") / draws
    return float(np.abs(emp - poisson.cdf(k, lam)).max())

