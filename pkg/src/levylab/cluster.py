"""Star-like target sets, the discrete measure realising them, and Gaussian cluster membership.

The constructed measure has atoms at radii ``b(1/a_{k,l})``.  Every number
attached to an atom is kept in structured log coordinates:

    H    = log h(a_{k,l})               (set by the schedule)
    lu   = log log log a_{k,l}          (from the inverse of h)
    logD = log(m r^2)                   (a difference of two h^-2 terms)

``log r`` itself is ``-e^{e^lu}/2 + lu/2 - H`` and usually overflows, so
radii and masses are stored as :class:`NestedLogNumber`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr, logsumexp

from .divergence import DivergenceVerdict, Verdict, classify_series
from .integral_test import MeasureProfile, SyntheticProfile, alpha0_estimate, n_grid
from .measures import InvariantBreach, NestedLogAtom, NestedLogAtoms, _log_lambda_max, atom_view, psd_sqrt
from .nestedlog import NestedLogNumber
from .normalizers import Normalizer, atom_binverse_log_terms
from .seeding import derived_rng


class ConstructionError(ValueError):
    """The schedule cannot produce nonnegative masses."""


# -- star sets and schedules -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StarSet:
    directions: np.ndarray
    sigmas: np.ndarray

    def __post_init__(self):
        Z = np.atleast_2d(np.asarray(self.directions, dtype=float))
        s = np.asarray(self.sigmas, dtype=float).reshape(-1)
        if len(Z) != len(s) or len(s) == 0:
            raise ValueError("need one sigma per direction")
        if np.any(np.abs(np.linalg.norm(Z, axis=1) - 1) > 1e-12):
            raise ValueError("directions must be unit vectors")
        if np.any(s < 0) or np.any(s > 1):
            raise ValueError("sigmas must lie in [0, 1]")
        if s[0] != 1.0:
            raise ValueError("the first segment must have sigma = 1")
        object.__setattr__(self, "directions", Z)
        object.__setattr__(self, "sigmas", s)

    @property
    def dim(self) -> int:
        return self.directions.shape[1]

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        for z, s in zip(self.directions, self.sigmas):
            c = float(z @ x)
            if np.linalg.norm(x - c * z) <= tol and abs(c) <= s + tol:
                return True
        return False


def active_indices(star: StarSet, k: int) -> list[int]:
    """1-based segment indices ``l <= k`` with ``sigma_l^2 >= 1/k``, in increasing order."""
    if k < 1:
        raise ValueError("k must be at least 1")
    J = min(k, len(star.sigmas))
    return [j + 1 for j in range(J) if star.sigmas[j] ** 2 >= 1.0 / k]


@dataclass(frozen=True)
class PaperSchedule:
    """``log h(a_{k,l}) = exp(k^3) + l k``."""

    k_max: int = 2

    def log_h(self, k: int, l: int) -> float:
        return math.exp(k ** 3) + l * k

    def gap(self, k1: int, l1: int, k2: int, l2: int) -> float:
        """``log h(a_{k2,l2}) - log h(a_{k1,l1})`` without cancellation."""
        head = 0.0 if k1 == k2 else math.exp(k2 ** 3) - math.exp(k1 ** 3)
        return head + (l2 * k2 - l1 * k1)


@dataclass(frozen=True)
class MildSchedule:
    """``log h(a_{k,l}) = k^beta + l (k/4 + 1)``."""

    beta: float = 2.0
    k_max: int = 8

    def log_h(self, k: int, l: int) -> float:
        return k ** self.beta + l * (k / 4.0 + 1.0)

    def gap(self, k1: int, l1: int, k2: int, l2: int) -> float:
        return self.log_h(k2, l2) - self.log_h(k1, l1)


# -- construction ---------------------------------------------------------------


@dataclass(frozen=True)
class AtomRecord:
    k: int
    l: int
    segment: int
    sigma: float
    H: float
    lu: float
    log_D: float


@dataclass(frozen=True, eq=False)
class Construction:
    measure: NestedLogAtoms
    records: tuple
    k0: int
    star: StarSet
    norm: Normalizer
    schedule: object


def _index_list(star: StarSet, k0: int, k_max: int):
    out = []
    for k in range(k0, k_max + 1):
        for l, j in enumerate(active_indices(star, k), start=1):
            out.append((k, l, j))
    return out


def construct_pi0(star: StarSet, norm: Normalizer, schedule, k0: int | None = None) -> Construction:
    """Discrete measure with ``int_{|y| <= |y_{k,l}|} |y|^2 dPi = sigma_{k,l}^2 / (2 h^2(a_{k,l}))``.

    The list is a finite prefix of the infinite family; the last atom keeps
    the full tail ``sigma^2/(2h^2)`` so the identity holds exactly on the prefix.
    """
    h = norm.h
    if not getattr(h, "unbounded", False):
        raise ConstructionError("h must be unbounded")
    if k0 is None:
        k0 = 2
        # stay inside the formula region of b: log log a >= 2
        while math.exp(min(h.lu_from_log_h(schedule.log_h(k0, 1)), 700.0)) < max(2.0, math.log(norm.s0)):
            k0 += 1
            if k0 > schedule.k_max:
                raise ConstructionError("no admissible k0 below k_max")
    idx = _index_list(star, k0, schedule.k_max)
    Hs = [schedule.log_h(k, l) for k, l, _ in idx]
    gaps = [schedule.gap(a[0], a[1], b[0], b[1]) for a, b in zip(idx, idx[1:])]
    if any(g <= 0 for g in gaps):
        raise ConstructionError("schedule is not strictly increasing in (k, l)")
    records = []
    atoms = []
    for i, (k, l, j) in enumerate(idx):
        sig = float(star.sigmas[j - 1])
        H = Hs[i]
        head = 2 * math.log(sig) - math.log(2.0) - 2 * H if sig > 0 else -math.inf
        if i + 1 < len(idx):
            sig_next = float(star.sigmas[idx[i + 1][2] - 1])
            ratio = (sig_next / sig) ** 2 * math.exp(-2 * gaps[i])
            if ratio >= 1:
                raise ConstructionError(f"negative mass at (k, l) = ({k}, {l})")
            log_D = head + math.log1p(-ratio)
        else:
            log_D = head
        lu = h.lu_from_log_h(H)
        radius = norm.radius_nested(lu)
        _, L = radius.log_magnitude()
        log_m = _log_mass(log_D, L)
        z = star.directions[j - 1]
        atoms.append(NestedLogAtom(z.copy(), radius, log_m, log_D))
        records.append(AtomRecord(k, l, j, sig, H, lu, log_D))
    measure = NestedLogAtoms(tuple(atoms), star.dim, truncated=True)
    return Construction(measure, tuple(records), k0, star, norm, schedule)


def _log_mass(log_D: float, L: NestedLogNumber) -> NestedLogNumber:
    """``m = D / r^2 = exp(log_D + 2L)`` with ``L = log(1/r)`` nested."""
    Lf = float(L)
    if math.isfinite(Lf):
        return NestedLogNumber.from_log(log_D + 2 * Lf)
    # log_D is negligible next to 2L here
    return NestedLogNumber.from_log_nested(L * NestedLogNumber.from_float(2.0))


# -- identities -------------------------------------------------------------------


@dataclass(frozen=True)
class TelescopingReport:
    residuals: np.ndarray
    max_residual: float


def verify_telescoping(measure: NestedLogAtoms, construction: Construction) -> TelescopingReport:
    """``log sum_{|y| <= |y_{k,l}|} m |y|^2`` against ``log(sigma^2/2) - 2 log h(a_{k,l})``."""
    recs = construction.records
    ref = construction.measure.atoms
    v = atom_view(measure)
    radii = [a.radius for a in measure.atoms]
    res = []
    for rec, a in zip(recs, ref):
        target = 2 * math.log(rec.sigma) - math.log(2.0) - 2 * rec.H if rec.sigma > 0 else -math.inf
        inside = np.array([not (r > a.radius) for r in radii], dtype=bool)
        # stable descending-order accumulation: smallest radii first
        order = np.argsort(v.rank[inside], kind="stable")
        got = float(logsumexp(v.log_w[inside][order])) if inside.any() else -math.inf
        res.append(abs(got - target) if math.isfinite(target) or math.isfinite(got) else 0.0)
    res = np.array(res)
    return TelescopingReport(res, float(res.max()) if res.size else 0.0)


@dataclass(frozen=True)
class VBoundReport:
    probe_lu: np.ndarray
    log_ratio: np.ndarray
    holds: bool


def verify_v_bound(construction: Construction, n_probes: int = 30, tol: float = 1e-9) -> VBoundReport:
    """``V(b(t)) 2 h^2(1/t) <= 1`` at atom preimages and between them (in ``lu``)."""
    recs = construction.records
    norm = construction.norm
    lus = np.array([r.lu for r in recs])
    lu_min = math.log(math.log(norm.s0))
    if len(lus) >= n_probes:
        probes = lus[np.unique(np.round(np.linspace(0, len(lus) - 1, n_probes)).astype(int))]
    else:
        # atom preimages are the tight points; fill the rest uniformly in lu
        lo, hi = max(lus[0] - 1.0, lu_min), lus[-1] + 1.0
        fill = np.linspace(lo, hi, n_probes - len(lus) + 2)[1:-1]
        probes = np.sort(np.concatenate([lus, fill]))
    v = atom_view(construction.measure)
    radii = [a.radius for a in construction.measure.atoms]
    out = []
    for lu in probes:
        bt = norm.radius_nested(float(lu))
        inside = np.array([not (r > bt) for r in radii], dtype=bool)
        lv = _log_lambda_max(v.U, v.log_w, inside)
        out.append(lv + math.log(2.0) + 2 * float(norm.h.log_h(lu)))
    out = np.array(out)
    return VBoundReport(probes, out, bool(np.all(out <= tol)))


@dataclass(frozen=True)
class BinverseReport:
    log_terms: np.ndarray
    log_bound_terms: np.ndarray
    identity_residual: np.ndarray
    partial: np.ndarray
    per_k: dict
    k1: int | None
    verdict: str


def verify_binverse_sum(measure: NestedLogAtoms, norm: Normalizer, construction: Construction) -> BinverseReport:
    """Terms ``m b^{<-}(r)`` and their bounds ``(1/a)/(2 b^2(1/a) h^2(a)) = (2 log log a)^{-1}``.

    ``b^{<-}`` is recomputed from the stored radius, so the identity residual
    measures how well the nested radius pins down ``a_{k,l}``.
    """
    recs = construction.records
    terms = atom_binverse_log_terms(measure, norm)
    bound = []
    resid = []
    for a, rec, term in zip(measure.atoms, recs, terms):
        _, L = a.radius.log_magnitude()
        lu_back = norm.lu_from_log_inv_radius(L)
        # (1/a)/(2 b^2 h^2) with s cancelled: -log 2 - lu
        lb = -math.log(2.0) - lu_back
        bound.append(lb)
        resid.append(abs(lb - (-math.log(2.0) - rec.lu)))
    bound = np.array(bound)
    resid = np.array(resid)
    if np.any(terms > bound + 1e-9):
        raise InvariantBreach("an atom term exceeds its (2 log log a)^-1 bound")
    partial = np.exp(np.logaddexp.accumulate(terms))
    per_k: dict[int, float] = {}
    for rec, b in zip(recs, bound):
        per_k[rec.k] = float(np.logaddexp(per_k.get(rec.k, -math.inf), b))
    # domination by sum k^-2 from some k1 on
    ks = sorted(per_k)
    ok = [per_k[k] <= -2 * math.log(k) for k in ks]
    k1 = None
    for i in range(len(ks)):
        if all(ok[i:]):
            k1 = ks[i]
            break
    verdict = "finite" if k1 is not None else "inconclusive"
    return BinverseReport(terms, bound, resid, partial, per_k, k1, verdict)


# -- membership ---------------------------------------------------------------------


@dataclass(frozen=True)
class MembershipReport:
    x: np.ndarray
    epsilon: float
    verdict: DivergenceVerdict
    label: str
    log_t: np.ndarray
    log_integrand: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    method: str


_MEMBER = {Verdict.DIVERGES: "Member", Verdict.CONVERGES: "NonMember", Verdict.INCONCLUSIVE: "Inconclusive"}


def _log_interval_prob(mu_lo: np.ndarray, mu_hi: np.ndarray) -> np.ndarray:
    """``log(Phi(hi) - Phi(lo))`` computed on the tail side that avoids cancellation."""
    lo = np.asarray(mu_lo, dtype=float)
    hi = np.asarray(mu_hi, dtype=float)
    flip = lo > 0
    a = np.where(flip, -hi, lo)
    b = np.where(flip, -lo, hi)
    la, lb = log_ndtr(a), log_ndtr(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        return lb + np.log1p(-np.exp(la - lb))


def gaussian_hit_log_prob_1d(x: float, eps: float, log_sd: float) -> float:
    """``log P{|sd eta - x| < eps}`` for scalar standard normal ``eta``."""
    if log_sd == -math.inf:
        return 0.0 if abs(x) < eps else -math.inf
    sd = math.exp(log_sd)
    return float(_log_interval_prob(np.array((x - eps) / sd), np.array((x + eps) / sd)))


def wilson_interval(k: float, n: int, z: float = 1.96) -> tuple[float, float]:
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


RANK_ONE_RATIO = 1e-12


def _hit_prob(x, eps, log_scale, S, rng, budget):
    """Probability that ``N(0, exp(log_scale) S)`` lies within ``eps`` of ``x``: (p, lo, hi, method)."""
    d = len(x)
    lam, Q = np.linalg.eigh(S)
    lam = np.clip(lam, 0.0, None)
    top = lam[-1]
    if top <= 0 or log_scale == -math.inf:
        hit = float(np.linalg.norm(x) < eps)
        return hit, hit, hit, "degenerate"
    if d == 1:
        lp = gaussian_hit_log_prob_1d(float(x[0]), eps, 0.5 * (log_scale + math.log(top)))
        p = math.exp(lp)
        return p, p, p, "closed-form"
    if lam[-2] <= RANK_ONE_RATIO * top:
        q = Q[:, -1]
        c = float(q @ x)
        perp = float(np.linalg.norm(x - c * q))
        if perp >= eps:
            return 0.0, 0.0, 0.0, "rank-one"
        lp = gaussian_hit_log_prob_1d(c, math.sqrt(eps * eps - perp * perp), 0.5 * (log_scale + math.log(top)))
        p = math.exp(lp)
        return p, p, p, "rank-one"
    A = psd_sqrt(S) * math.exp(0.5 * log_scale)
    half = budget // 2
    eta = rng.standard_normal((half, d))
    Y = eta @ A.T
    hits = int((np.linalg.norm(Y - x, axis=1) < eps).sum() + (np.linalg.norm(-Y - x, axis=1) < eps).sum())
    n = 2 * half
    lo, hi = wilson_interval(hits, n)
    return hits / n, lo, hi, "monte-carlo"


def membership(
    x,
    profile,
    norm: Normalizer,
    epsilon: float,
    r: float = 0.5,
    n_max: int = 1_000_000,
    grid_points: int = 60,
    mc_budget: int = 100_000,
    seed: int = 0,
    check_alpha0: bool = True,
) -> MembershipReport:
    """Classify ``x`` via divergence of ``sum_n P{|sqrt(t) A(b(t)) eta / b(t) - x| < eps}`` on ``t = r^n``.

    ``profile`` is a :class:`SyntheticProfile` or :class:`MeasureProfile`
    (anything with ``log_cov(log_t)`` returning the covariance of ``A(b(t)) eta``).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if check_alpha0:
        est = alpha0_estimate(profile, norm, r, max(n_max, 10_000), samples=400)
        if est.unbounded:
            raise ValueError("alpha_0 is not finite for this profile")
    n = n_grid(n_max, grid_points)
    lt = n * math.log(r)
    # covariance of sqrt(t) A eta / b: t/b^2 * M(b(t))
    log_ratio = -np.asarray(norm.log_b2_over_t(lt), dtype=float)
    p_hat, p_lo, p_hi, methods = [], [], [], set()
    for i, (lti, lr) in enumerate(zip(lt, log_ratio)):
        log_scale, S = profile.log_cov(float(lti))
        # shared stream across +-x and across calls: seed depends on (seed, i) only
        rng = derived_rng(seed, 0, i, 0)
        p, lo, hi, m = _hit_prob(x, epsilon, log_scale + lr, S, rng, mc_budget)
        methods.add(m)
        p_hat.append(p)
        p_lo.append(lo)
        p_hi.append(hi)
    p_hat, p_lo, p_hi = map(np.array, (p_hat, p_lo, p_hi))
    block = math.log(math.log(1.0 / r))
    with np.errstate(divide="ignore"):
        c = -(np.log(p_hat) + block)
        c_lo = -(np.log(p_hi) + block)
        c_hi = -(np.log(p_lo) + block)
    v = classify_series(c, n=n, r=r)
    if "monte-carlo" in methods:
        v_a = classify_series(c_lo, n=n, r=r).verdict
        v_b = classify_series(c_hi, n=n, r=r).verdict
        if not (v_a is v_b is v.verdict):
            v = DivergenceVerdict(Verdict.INCONCLUSIVE, v.margin, v.n_lo, v.n_hi, r, v.slope, v.loglog_coef, "ci-split")
    method = "monte-carlo" if "monte-carlo" in methods else sorted(methods)[0]
    with np.errstate(divide="ignore"):
        return MembershipReport(
            x, epsilon, v, _MEMBER[v.verdict], lt, -c, np.log(p_lo) + block, np.log(p_hi) + block, method
        )


# -- Anderson ray monotonicity ---------------------------------------------------


@dataclass(frozen=True)
class AndersonReport:
    s_values: np.ndarray
    log_t: np.ndarray
    prob: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    monotone: bool


def anderson_ray_check(
    x,
    profile,
    norm: Normalizer,
    log_t_grid,
    epsilon: float,
    s_values=None,
    mc_budget: int = 100_000,
    seed: int = 0,
) -> AndersonReport:
    """Hit probability at ``s x`` must not decrease as ``s`` goes from 1 to 0 (CI-aware)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    s_values = np.linspace(1.0, 0.0, 6) if s_values is None else np.asarray(s_values, dtype=float)
    lt = np.asarray(log_t_grid, dtype=float)
    P = np.zeros((len(lt), len(s_values)))
    LO = np.zeros_like(P)
    HI = np.zeros_like(P)
    for i, ti in enumerate(lt):
        log_scale, S = profile.log_cov(float(ti))
        ls = log_scale - float(norm.log_b2_over_t(ti))
        for j, s in enumerate(s_values):
            rng = derived_rng(seed, 1, i, 0)
            P[i, j], LO[i, j], HI[i, j], _ = _hit_prob(s * x, epsilon, ls, S, rng, mc_budget)
    # violation only when a later (smaller s) upper bound is below an earlier lower bound
    ok = True
    for i in range(len(lt)):
        for j in range(1, len(s_values)):
            if HI[i, j] < LO[i, j - 1] - 1e-15:
                ok = False
    return AndersonReport(s_values, lt, P, LO, HI, ok)
