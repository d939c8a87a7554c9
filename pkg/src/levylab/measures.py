"""Levy measures on the closed unit ball and their moment and tail functionals.

Three representations are supported:

* ``Atoms``: finitely many point masses.
* ``RadialPower``: radial density ``c u^(-1-alpha)`` on ``(0, 1]`` times a
  finite angular measure, optionally symmetrised.
* ``NestedLogAtoms``: point masses whose radii and masses are stored as
  :class:`NestedLogNumber`, together with the exact ``log(m r^2)``.

Truncated integrals include the boundary (``|y| <= t``); tails are strict
(``|y| > x``).  Every functional of a discrete measure is evaluated from
``log r`` and ``log(m r^2)`` so that radii far below float range still
contribute their (finite) second-moment weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.special import logsumexp

from .directions import SphereSearch, brute_force_max, compass_polish, maximize_atoms, sphere_grid
from .divergence import DivergenceVerdict, Verdict, classify_log_terms
from .nestedlog import NestedLogNumber

PSD_TOL = 1e-10
UNDERFLOW_LOG = -745.0


class InvariantBreach(RuntimeError):
    """An internal consistency check failed."""


def _check_level(t: float, name: str = "t") -> None:
    if not (t > 0):
        raise ValueError(f"{name} must be positive, got {t!r}")
    if t > 1 + 1e-15:
        raise ValueError(f"{name} must be at most 1, got {t!r}")


def _as_gamma(gamma, d: int) -> np.ndarray:
    if gamma is None:
        return np.zeros(d)
    g = np.asarray(gamma, dtype=float).reshape(d)
    return g


# -- representations -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Atoms:
    points: np.ndarray
    masses: np.ndarray
    gamma: np.ndarray | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        ms = np.asarray(self.masses, dtype=float).reshape(-1)
        if pts.shape[0] != ms.shape[0]:
            raise ValueError("points and masses differ in length")
        r = np.linalg.norm(pts, axis=1)
        if np.any(r <= 0) or np.any(r > 1 + 1e-12):
            raise ValueError("atoms must satisfy 0 < |y| <= 1")
        if np.any(~(ms > 0)) or np.any(~np.isfinite(ms)):
            raise ValueError("atom masses must be finite and positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", ms)
        object.__setattr__(self, "gamma", _as_gamma(self.gamma, pts.shape[1]))

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True, eq=False)
class RadialPower:
    dim: int
    alpha: float
    coef: float
    directions: np.ndarray | None = None
    weights: np.ndarray | None = None
    symmetric: bool = True
    gamma: np.ndarray | None = None

    def __post_init__(self):
        if not 0 < self.alpha < 2:
            raise ValueError("alpha must lie in (0, 2)")
        if not self.coef > 0:
            raise ValueError("coefficient must be positive")
        dirs = np.eye(self.dim)[:1] if self.directions is None else np.atleast_2d(np.asarray(self.directions, float))
        if dirs.shape[1] != self.dim:
            raise ValueError("direction dimension mismatch")
        dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        w = np.ones(len(dirs)) if self.weights is None else np.asarray(self.weights, float).reshape(-1)
        if len(w) != len(dirs) or np.any(~(w > 0)):
            raise ValueError("angular weights must be positive, one per direction")
        object.__setattr__(self, "directions", dirs)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "gamma", _as_gamma(self.gamma, self.dim))

    def angular(self) -> tuple[np.ndarray, np.ndarray]:
        """Directions and weights after symmetrisation."""
        if self.symmetric:
            return np.concatenate([self.directions, -self.directions]), np.concatenate([self.weights, self.weights])
        return self.directions, self.weights

    @property
    def total_weight(self) -> float:
        return float(self.angular()[1].sum())

    def angular_matrix(self) -> np.ndarray:
        Z, w = self.angular()
        return (Z * w[:, None]).T @ Z

    def radial_tail(self, x: float) -> float:
        """int_x^1 c u^(-1-alpha) du."""
        if x >= 1:
            return 0.0
        return self.coef * (x ** -self.alpha - 1.0) / self.alpha

    def radial_moment(self, p: float, t: float) -> float:
        """int_0^t u^p c u^(-1-alpha) du for p > alpha."""
        t = min(t, 1.0)
        return self.coef * t ** (p - self.alpha) / (p - self.alpha)

    def radial_first_annulus(self, b: float) -> float:
        """int_b^1 u c u^(-1-alpha) du."""
        if b >= 1:
            return 0.0
        if abs(self.alpha - 1.0) < 1e-14:
            return self.coef * math.log(1.0 / b)
        return self.coef * (1.0 - b ** (1.0 - self.alpha)) / (1.0 - self.alpha)


@dataclass(frozen=True, eq=False)
class NestedLogAtom:
    direction: np.ndarray
    radius: NestedLogNumber
    mass: NestedLogNumber
    log_mr2: float


@dataclass(frozen=True, eq=False)
class NestedLogAtoms:
    atoms: tuple[NestedLogAtom, ...]
    dim: int
    truncated: bool = False
    gamma: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))
        object.__setattr__(self, "gamma", _as_gamma(self.gamma, self.dim))
        for a in self.atoms:
            if a.radius > NestedLogNumber(0, 1.0) and float(a.radius) > 1 + 1e-12:
                raise ValueError("atom radius exceeds 1")


LevyMeasure = Union[Atoms, RadialPower, NestedLogAtoms]


@dataclass(frozen=True)
class AtomView:
    """Log-coordinate summary of a discrete measure."""

    U: np.ndarray
    log_r: np.ndarray
    log_m: np.ndarray
    log_w: np.ndarray
    rank: np.ndarray

    def log_V_at(self, i: int) -> float:
        """``log V(|y_i|)`` using exact radius ordering."""
        return _log_lambda_max(self.U, self.log_w, self.rank <= self.rank[i])

    @property
    def r(self) -> np.ndarray:
        return np.exp(self.log_r)

    @property
    def w(self) -> np.ndarray:
        return np.exp(self.log_w)


def atom_view(measure: Atoms | NestedLogAtoms) -> AtomView:
    if isinstance(measure, Atoms):
        r = np.linalg.norm(measure.points, axis=1)
        U = measure.points / r[:, None]
        log_r = np.log(r)
        log_m = np.log(measure.masses)
        rank = np.unique(log_r, return_inverse=True)[1]
        return AtomView(U, log_r, log_m, log_m + 2 * log_r, rank)
    U = np.array([a.direction for a in measure.atoms], dtype=float).reshape(-1, measure.dim)
    log_r = np.array([_safe_log(a.radius) for a in measure.atoms])
    log_m = np.array([_safe_log(a.mass) for a in measure.atoms])
    log_w = np.array([a.log_mr2 for a in measure.atoms])
    return AtomView(U, log_r, log_m, log_w, _nested_rank([a.radius for a in measure.atoms]))


def _nested_rank(radii: list[NestedLogNumber]) -> np.ndarray:
    order = sorted(range(len(radii)), key=lambda i: radii[i])
    rank = np.zeros(len(radii), dtype=int)
    k = 0
    for pos, i in enumerate(order):
        if pos and not radii[i] == radii[order[pos - 1]]:
            k += 1
        rank[i] = k
    return rank


def _log_lambda_max(U: np.ndarray, log_w: np.ndarray, sel: np.ndarray) -> float:
    if not sel.any():
        return -math.inf
    ls = float(log_w[sel].max())
    w = np.exp(log_w[sel] - ls)
    M = (U[sel] * w[:, None]).T @ U[sel]
    lam = float(np.linalg.eigvalsh(0.5 * (M + M.T))[-1])
    return math.log(lam) + ls if lam > 0 else -math.inf


def _inside_mask(measure, v: AtomView, log_t: float) -> np.ndarray:
    """Atoms with ``|y| <= t``; nested radii are compared exactly."""
    if isinstance(measure, NestedLogAtoms) and not np.all(np.isfinite(v.log_r)):
        t = NestedLogNumber.from_log(log_t)
        return np.array([not (a.radius > t) for a in measure.atoms], dtype=bool)
    return v.log_r <= log_t


def _safe_log(x: NestedLogNumber) -> float:
    try:
        return x.log()
    except OverflowError:
        negative, _ = x.log_magnitude()
        return -math.inf if negative else math.inf


# -- functionals ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MomentMatrix:
    """``exp(log_scale) * scaled`` equals the truncated second-moment matrix."""

    scaled: np.ndarray
    level: float
    log_scale: float = 0.0

    @property
    def matrix(self) -> np.ndarray:
        if self.log_scale < UNDERFLOW_LOG:
            return np.zeros_like(self.scaled)
        return math.exp(self.log_scale) * self.scaled

    @property
    def underflow(self) -> bool:
        return self.log_scale < UNDERFLOW_LOG and bool(np.any(self.scaled != 0))

    def log_max_eigenvalue(self) -> float:
        lam = float(np.linalg.eigvalsh(self.scaled)[-1])
        return math.log(lam) + self.log_scale if lam > 0 else -math.inf

    def max_eigenvalue_nested(self) -> NestedLogNumber | None:
        lv = self.log_max_eigenvalue()
        return None if lv == -math.inf else NestedLogNumber.from_log(lv)


def tail_mass(measure: LevyMeasure, x: float) -> float:
    if not x > 0:
        raise ValueError(f"x must be positive, got {x!r}")
    return _tail(measure, math.log(x))


def log_tail_mass(measure: LevyMeasure, log_x: float) -> float:
    """``log tail_mass``; accepts arguments far below float range."""
    t = _tail(measure, log_x, log_out=True)
    return t


def _tail(measure, log_x, log_out=False):
    if isinstance(measure, RadialPower):
        if log_x >= 0:
            val = 0.0
        else:
            a = measure.alpha
            W = measure.total_weight
            # c W (x^-a - 1)/a in logs
            la = -a * log_x
            if log_out:
                return math.log(measure.coef * W / a) + la + math.log(-math.expm1(-la))
            val = W * measure.coef * math.expm1(la) / a if la < 709 else math.inf
        return (math.log(val) if val > 0 else -math.inf) if log_out else val
    v = atom_view(measure)
    sel = v.log_r > log_x
    if log_out:
        return float(logsumexp(v.log_m[sel])) if sel.any() else -math.inf
    return float(np.exp(v.log_m[sel]).sum())


def trunc_second_moment(measure: LevyMeasure, t: float) -> MomentMatrix:
    _check_level(t)
    return log_trunc_second_moment(measure, math.log(min(t, 1.0)), level=t)


def log_trunc_second_moment(measure: LevyMeasure, log_t: float, level: float | None = None) -> MomentMatrix:
    lvl = math.exp(log_t) if level is None else level
    if isinstance(measure, RadialPower):
        a = measure.alpha
        ls = math.log(measure.coef / (2 - a)) + (2 - a) * min(log_t, 0.0)
        return MomentMatrix(measure.angular_matrix(), lvl, ls)
    v = atom_view(measure)
    d = v.U.shape[1]
    sel = _inside_mask(measure, v, log_t)
    if not sel.any():
        return MomentMatrix(np.zeros((d, d)), lvl, 0.0)
    ls = float(v.log_w[sel].max())
    w = np.exp(v.log_w[sel] - ls)
    U = v.U[sel]
    M = (U * w[:, None]).T @ U
    return MomentMatrix(0.5 * (M + M.T), lvl, ls)


def V(measure: LevyMeasure, t: float) -> float:
    M = trunc_second_moment(measure, t)
    lv = M.log_max_eigenvalue()
    return math.exp(lv) if lv > UNDERFLOW_LOG else 0.0


def log_V(measure: LevyMeasure, log_t: float) -> float:
    return log_trunc_second_moment(measure, log_t).log_max_eigenvalue()


def trace_moment(measure: LevyMeasure, t: float) -> float:
    return float(np.trace(trunc_second_moment(measure, t).matrix))


@dataclass(frozen=True)
class V1Result:
    value: float
    direction: np.ndarray
    flagged: bool


def V1(measure: LevyMeasure, t: float, search: SphereSearch = SphereSearch()) -> V1Result:
    """Direction-wise truncation ``sup_z int_{|<y,z>| <= t} <y,z>^2 dPi``."""
    _check_level(t)
    d = measure.dim
    if isinstance(measure, RadialPower):
        return _v1_radial(measure, t, search)
    v = atom_view(measure)
    finite = np.isfinite(v.log_r)
    # radii below float range sit in every truncated region: fold them into a fixed matrix
    U, r, w = v.U[finite], np.exp(v.log_r[finite]), np.exp(v.log_w[finite])
    if (~finite).any():
        tiny = v.log_w[~finite]
        extra = (v.U[~finite] * np.exp(tiny)[:, None]).T @ v.U[~finite]
    else:
        extra = np.zeros((d, d))
    if d == 1:
        val = V(measure, t)
        return V1Result(val, np.ones(1), False)
    if not extra.any():
        res = maximize_atoms(U, r, w, t, search)
    else:
        res = _maximize_with_extra(U, r, w, t, extra, search)
    floor = V(measure, t)
    value = max(res.value, floor)
    return V1Result(value, res.direction, not res.converged)


def _maximize_with_extra(U, r, w, t, extra, search):
    from .directions import SearchResult, atom_objective

    def f(Z):
        Z = np.atleast_2d(Z)
        return atom_objective(Z, U, r, w, t) + np.einsum("ij,jk,ik->i", Z, extra, Z)

    Z = sphere_grid(search.grid_size, U.shape[1])
    vals = f(Z)
    best, bz = -1.0, Z[0]
    for i in np.argsort(vals)[::-1][: search.keep]:
        v, z = compass_polish(f, Z[i], 0.05)
        if v > best:
            best, bz = v, z
    return SearchResult(best, bz, True)


def _radial_v1_objective(measure: RadialPower, t: float):
    Z0, w0 = measure.angular()
    a, c = measure.alpha, measure.coef

    def f(Z):
        C = np.abs(np.atleast_2d(Z) @ Z0.T)
        with np.errstate(divide="ignore"):
            cap = np.where(C > 0, np.minimum(1.0, t / np.where(C > 0, C, 1.0)), 0.0)
        return (c / (2 - a)) * (w0 * C * C * cap ** (2 - a)).sum(axis=1)

    return f


def _v1_radial(measure: RadialPower, t: float, search: SphereSearch) -> V1Result:
    d = measure.dim
    f = _radial_v1_objective(measure, t)
    if d == 1:
        return V1Result(float(f(np.ones((1, 1)))[0]), np.ones(1), False)
    Z = sphere_grid(search.grid_size, d)
    vals = f(Z)
    best, bz = -1.0, Z[0]
    for i in np.argsort(vals)[::-1][: search.keep]:
        v, z = compass_polish(f, Z[i], 0.05)
        if v > best:
            best, bz = v, z
    floor = V(measure, t)
    return V1Result(max(best, floor), bz, False)


def v1_oracle(measure: LevyMeasure, t: float, n_dirs: int = 100_000) -> float:
    """Brute-force reference value for V1 (dense scan plus pattern search)."""
    if isinstance(measure, RadialPower):
        f = _radial_v1_objective(measure, t)
    else:
        from .directions import atom_objective

        v = atom_view(measure)
        r, w = np.exp(v.log_r), np.exp(v.log_w)

        def f(Z):
            return atom_objective(Z, v.U, r, w, t)

    return brute_force_max(f, measure.dim, n_dirs=n_dirs)


def third_moment_ball(measure: LevyMeasure, t: float) -> float:
    _check_level(t)
    if isinstance(measure, RadialPower):
        return measure.total_weight * measure.radial_moment(3.0, t)
    v = atom_view(measure)
    sel = v.log_r <= math.log(t)
    return float(np.exp(v.log_w[sel] + v.log_r[sel]).sum())


def abs_first_moment_annulus(measure: LevyMeasure, b: float) -> float:
    """``int_{b < |y| <= 1} |y| Pi(dy)``."""
    _check_level(b, "b")
    if isinstance(measure, RadialPower):
        return measure.total_weight * measure.radial_first_annulus(b)
    v = atom_view(measure)
    sel = v.log_r > math.log(b)
    return float(np.exp(v.log_m[sel] + v.log_r[sel]).sum())


def drift_compensator(measure: LevyMeasure, gamma, b: float) -> np.ndarray:
    """``gamma - int_{b < |y| <= 1} y Pi(dy)``."""
    _check_level(b, "b")
    g = _as_gamma(gamma, measure.dim)
    if isinstance(measure, RadialPower):
        Z, w = measure.angular()
        return g - measure.radial_first_annulus(b) * (w[:, None] * Z).sum(axis=0)
    v = atom_view(measure)
    sel = v.log_r > math.log(b)
    if not sel.any():
        return g.copy()
    return g - (np.exp(v.log_m[sel] + v.log_r[sel])[:, None] * v.U[sel]).sum(axis=0)


def psd_sqrt(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    sym = 0.5 * (M + M.T)
    if np.abs(M - M.T).max(initial=0.0) > 1e-12 * max(1.0, np.abs(M).max(initial=0.0)):
        raise InvariantBreach("moment matrix is not symmetric")
    lam, Q = np.linalg.eigh(sym)
    tr = max(float(np.trace(sym)), 0.0)
    if lam.size and lam[0] < -PSD_TOL * max(tr, 1e-300):
        raise InvariantBreach(f"moment matrix not PSD (min eigenvalue {lam[0]:.3e})")
    lam = np.clip(lam, 0.0, None)
    A = (Q * np.sqrt(lam)) @ Q.T
    return 0.5 * (A + A.T)


def A_matrix(measure: LevyMeasure, b: float) -> np.ndarray:
    return psd_sqrt(trunc_second_moment(measure, b).matrix)


# -- diagnostic for the integrability lemma -----------------------------------


@dataclass(frozen=True)
class IntegrabilityReport:
    cutoffs: np.ndarray
    partial: np.ndarray
    verdict: str
    series: DivergenceVerdict | None = None


def _log_plus(x):
    return np.maximum(1.0, x)


def integrability_diagnostic_41(
    measure: LevyMeasure, delta: float, cut: float = 1.0, n_blocks: int = 10_000
) -> IntegrabilityReport:
    """Partial sums of ``|y|^2 / (V(|y|) log_+(1/V(|y|))^(1+delta))`` over ``|y| <= cut``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    _check_level(cut, "cut")
    if isinstance(measure, RadialPower):
        return _diag41_radial(measure, delta, cut, n_blocks)
    v = atom_view(measure)
    sel = np.flatnonzero(_inside_mask(measure, v, math.log(cut)))
    if sel.size == 0:
        return IntegrabilityReport(np.zeros(0), np.zeros(0), "trivial-finite")
    order = sel[np.argsort(-v.rank[sel], kind="stable")]
    log_terms = []
    for i in order:
        lv = v.log_V_at(i)
        if lv == -math.inf:
            return IntegrabilityReport(np.zeros(0), np.zeros(0), "trivial-finite")
        # |y|^2 m / (V * L^(1+delta)), L = log_+(1/V)
        L = max(1.0, -lv)
        log_terms.append(v.log_w[i] - lv - (1 + delta) * math.log(L))
    log_terms = np.array(log_terms)
    partial = np.exp(np.logaddexp.accumulate(log_terms))
    cutoffs = np.exp(v.log_r[order])
    if not measure_is_truncated(measure):
        return IntegrabilityReport(cutoffs, partial, "finite")
    verdict = classify_log_terms(log_terms, boundary="loglog")
    label = {Verdict.CONVERGES: "finite", Verdict.DIVERGES: "infinite"}.get(verdict.verdict, "inconclusive")
    return IntegrabilityReport(cutoffs, partial, label, verdict)


def measure_is_truncated(measure: LevyMeasure) -> bool:
    return isinstance(measure, NestedLogAtoms) and measure.truncated


def doubling_block_atoms(n_blocks: int, start: int = 1) -> NestedLogAtoms:
    """First blocks of the one-dimensional family with radii ``exp(-2^n)``
    and masses ``(3/4) 4^-n exp(2^(n+1))``.

    Every block adds an order-one amount to ``int Pibar(b(t)) dt`` when
    ``h(x) = log x``, so the full family violates the finiteness condition
    even though its truncated second moments stay tiny.
    """
    if n_blocks < 1 or start < 1 or start + n_blocks - 1 > 1020:
        raise ValueError("block range must lie in [1, 1020]")
    atoms = []
    for n in range(start, start + n_blocks):
        log_mr2 = math.log(0.75) - n * math.log(4.0)
        atoms.append(
            NestedLogAtom(
                np.ones(1),
                NestedLogNumber.from_log(-(2.0**n)),
                NestedLogNumber.from_log(log_mr2 + 2.0 ** (n + 1)),
                log_mr2,
            )
        )
    return NestedLogAtoms(tuple(atoms), 1, truncated=True)


def _diag41_radial(measure: RadialPower, delta: float, cut: float, n_blocks: int) -> IntegrabilityReport:
    # V(u) = kappa u^(2-a); in w = log(1/u) the integrand is (W c/kappa) / max(1, a2 w + b0)^(1+delta)
    a2 = 2.0 - measure.alpha
    lam = float(np.linalg.eigvalsh(measure.angular_matrix())[-1])
    kappa = measure.coef * lam / a2
    scale = measure.total_weight * measure.coef / kappa
    b0 = -math.log(kappa)
    w_cut = math.log(1.0 / cut)

    def antider(w):
        # F(w) with F' = 1/max(1, a2 w + b0)^(1+delta)
        knot = (1.0 - b0) / a2
        if w <= knot:
            return w
        x = a2 * w + b0
        return knot + (1.0 - x ** -delta) / (a2 * delta)

    edges = w_cut + np.arange(n_blocks + 1, dtype=float)
    F = np.array([antider(w) for w in edges])
    inc = scale * np.diff(F)
    partial = np.cumsum(inc)
    cutoffs = np.exp(-edges[1:])
    with np.errstate(divide="ignore"):
        verdict = classify_log_terms(np.log(inc))
    label = {Verdict.CONVERGES: "finite", Verdict.DIVERGES: "infinite"}.get(verdict.verdict, "inconclusive")
    return IntegrabilityReport(cutoffs, partial, label, verdict)
