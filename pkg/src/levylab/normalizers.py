"""Normalizing functions ``b(t) = sqrt(t log log 1/t) / h(1/t)``.

Coordinates used throughout:

    s  = log(1/t)
    u  = log s            (= log log 1/t)
    lu = log u            (= log log log 1/t)

A slowly varying ``h`` is described by ``log h`` as a function of ``lu``, so
that arguments like ``exp(exp(k^3))`` stay representable: the cluster
construction only ever needs ``lu`` and ``log h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import integrate, optimize

from .divergence import DivergenceVerdict, Verdict, classify_log_terms
from .measures import (
    Atoms,
    LevyMeasure,
    NestedLogAtoms,
    RadialPower,
    abs_first_moment_annulus,
    atom_view,
    measure_is_truncated,
    third_moment_ball,
)
from .nestedlog import NestedLogNumber

E = math.e
T0_DEFAULT = math.exp(-E * E)


# -- slowly varying families ----------------------------------------------------


@dataclass(frozen=True)
class Const:
    c: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("constant must be positive")

    def log_h(self, lu):
        return np.full_like(np.asarray(lu, dtype=float), math.log(self.c)) if np.ndim(lu) else math.log(self.c)

    def dlog_h(self, lu):
        return 0.0 * np.asarray(lu, dtype=float)

    def lu_from_log_h(self, H: float) -> float:
        raise ValueError("a constant function has no inverse")

    unbounded = False


@dataclass(frozen=True)
class PowLogLog:
    """``h(x) = (log log x)^gamma``."""

    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("exponent must be positive")

    def log_h(self, lu):
        return self.gamma * np.asarray(lu, dtype=float) if np.ndim(lu) else self.gamma * lu

    def dlog_h(self, lu):
        return self.gamma + 0.0 * np.asarray(lu, dtype=float)

    def lu_from_log_h(self, H: float) -> float:
        return H / self.gamma

    unbounded = True


@dataclass(frozen=True)
class PowLog:
    """``h(x) = (log x)^gamma``."""

    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("exponent must be positive")

    def log_h(self, lu):
        return self.gamma * np.exp(lu)

    def dlog_h(self, lu):
        return self.gamma * np.exp(lu)

    def lu_from_log_h(self, H: float) -> float:
        return math.log(H / self.gamma)

    unbounded = True


@dataclass(frozen=True)
class ExpLogLogPow:
    """``h(x) = exp(scale (log log x)^theta)``."""

    scale: float
    theta: float

    def __post_init__(self):
        if not self.scale > 0 or not 0 < self.theta < 1:
            raise ValueError("need scale > 0 and 0 < theta < 1")

    def log_h(self, lu):
        return self.scale * np.exp(self.theta * np.asarray(lu, dtype=float))

    def dlog_h(self, lu):
        return self.theta * self.scale * np.exp(self.theta * np.asarray(lu, dtype=float))

    def lu_from_log_h(self, H: float) -> float:
        return math.log(H / self.scale) / self.theta

    unbounded = True


@dataclass(frozen=True)
class Product:
    parts: tuple

    def log_h(self, lu):
        return sum(p.log_h(lu) for p in self.parts)

    def dlog_h(self, lu):
        return sum(p.dlog_h(lu) for p in self.parts)

    @property
    def unbounded(self) -> bool:
        return any(p.unbounded for p in self.parts)

    def lu_from_log_h(self, H: float) -> float:
        if not self.unbounded:
            raise ValueError("a bounded product has no inverse")
        lo, hi = -50.0, 1.0
        while float(self.log_h(hi)) < H:
            hi *= 2.0
            if hi > 1e300:
                raise OverflowError("inverse out of range")
        return optimize.brentq(lambda x: float(self.log_h(x)) - H, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)


SlowFunction = Union[Const, PowLogLog, PowLog, ExpLogLogPow, Product]


def class_index(h: SlowFunction) -> float:
    """Index ``q`` of the smallest class ``H_q`` containing ``h``; all supported families are very slowly varying."""
    return 0.0


def slow_variation_ratio(h: SlowFunction, log_x: np.ndarray) -> np.ndarray:
    """``h(2x)/h(x)`` evaluated through ``log h``."""
    log_x = np.asarray(log_x, dtype=float)
    lu1 = np.log(np.log(log_x))
    lu2 = np.log(np.log(log_x + math.log(2.0)))
    return np.exp(np.asarray(h.log_h(lu2)) - np.asarray(h.log_h(lu1)))


def f_tau_ratio(h: SlowFunction, tau: float, log_x: np.ndarray) -> np.ndarray:
    """``h(x f_tau(x))/h(x)`` with ``f_tau(x) = exp((log x)^tau)``."""
    log_x = np.asarray(log_x, dtype=float)
    lu1 = np.log(np.log(log_x))
    lu2 = np.log(np.log(log_x + log_x ** tau))
    return np.exp(np.asarray(h.log_h(lu2)) - np.asarray(h.log_h(lu1)))


# -- normalizer ----------------------------------------------------------------


class ConditionFailure(ValueError):
    """A normalizer failed a regularity condition required downstream."""


@dataclass(frozen=True)
class Normalizer:
    h: SlowFunction
    t0: float = T0_DEFAULT

    def __post_init__(self):
        if not 0 < self.t0 <= math.exp(-E):
            raise ValueError("t0 must lie in (0, e^-e]")
        if self.log_b_formula_s(self.s0) >= 0:
            raise ValueError("b(t0) >= 1: the continuation to b(1)=1 would not be increasing")

    @property
    def s0(self) -> float:
        return -math.log(self.t0)

    @property
    def kappa(self) -> float:
        """Exponent of the power continuation ``b(t) = t^kappa`` on ``[t0, 1]``."""
        return self.log_b_formula_s(self.s0) / (-self.s0)

    def log_h_lu(self, lu):
        return self.h.log_h(lu)

    def log_b_formula_s(self, s):
        s = np.asarray(s, dtype=float)
        u = np.log(s)
        lu = np.log(u)
        out = -0.5 * s + 0.5 * lu - np.asarray(self.h.log_h(lu), dtype=float)
        return float(out) if out.ndim == 0 else out

    def log_b(self, log_t):
        """``log b(t)`` from ``log t``; works for ``log t`` far below float range of ``t``."""
        log_t = np.asarray(log_t, dtype=float)
        if np.any(log_t > 1e-15) or np.any(np.isnan(log_t)):
            raise ValueError("t must lie in (0, 1]")
        s = -log_t
        formula = s >= self.s0
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(formula, self.log_b_formula_s(np.where(formula, s, self.s0)), -self.kappa * s)
        return float(out) if out.ndim == 0 else out

    def b(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0) or np.any(t > 1):
            raise ValueError("t must lie in (0, 1]")
        out = np.exp(self.log_b(np.log(t)))
        return float(out) if out.ndim == 0 else out

    def log_b_from_lu(self, lu: float) -> float:
        return float(self.log_b(-math.exp(math.exp(lu))))

    def log_b2_over_t(self, log_t):
        """``log(b(t)^2 / t)`` without the cancelling ``log t`` terms of the formula region."""
        lt = np.asarray(log_t, dtype=float)
        s = -lt
        formula = s >= self.s0
        with np.errstate(invalid="ignore", divide="ignore"):
            lu = np.log(np.log(np.where(formula, s, self.s0)))
            out = np.where(formula, lu - 2 * np.asarray(self.h.log_h(lu), dtype=float), (2 * self.kappa - 1) * lt)
        return float(out) if out.ndim == 0 else out

    def log_h_of_t(self, log_t):
        """``log h(1/t)``; held at its ``t0`` value on the continuation interval."""
        s = np.maximum(-np.asarray(log_t, dtype=float), self.s0)
        out = np.asarray(self.h.log_h(np.log(np.log(s))), dtype=float)
        return float(out) if out.ndim == 0 else out

    def loglog_of_t(self, log_t):
        """``log log(1/t)``; held at its ``t0`` value on the continuation interval."""
        s = np.maximum(-np.asarray(log_t, dtype=float), self.s0)
        out = np.log(s)
        return float(out) if out.ndim == 0 else out

    # -- inversion ---------------------------------------------------------------
    def log_b_inverse(self, log_x: float) -> float:
        """``log b^{<-}(x)`` from ``log x``."""
        if log_x > 1e-15:
            raise ValueError("x must lie in (0, 1]")
        log_x = min(log_x, 0.0)
        lb0 = self.log_b_formula_s(self.s0)
        if log_x >= lb0:
            return log_x / self.kappa
        L = -log_x
        # s = 2L + lu - 2 log h(lu) with lu = log log s: fixed point, then bracketed polish
        s = 2.0 * L
        for _ in range(60):
            lu = math.log(math.log(s))
            s_new = 2.0 * L + lu - 2.0 * float(self.h.log_h(lu))
            s_new = max(s_new, self.s0)
            if abs(s_new - s) <= 1e-15 * s:
                s = s_new
                break
            s = s_new
        f = lambda ss: self.log_b_formula_s(ss) - log_x
        lo, hi = max(self.s0, s * (1 - 1e-6) - 1.0), s * (1 + 1e-6) + 1.0
        while f(lo) < 0 and lo > self.s0:
            lo = max(self.s0, lo - 2 * (hi - lo))
        while f(hi) > 0:
            hi = hi + 2 * (hi - lo)
        if np.sign(f(lo)) != np.sign(f(hi)):
            s = optimize.brentq(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=200)
        return -s

    def b_inverse(self, x: float) -> float:
        if not 0 < x <= 1:
            raise ValueError("x must lie in (0, 1]")
        return math.exp(self.log_b_inverse(math.log(x)))

    def lu_from_log_inv_radius(self, L: NestedLogNumber) -> float:
        """``log log log(1/t)`` for ``t = b^{<-}(x)`` given ``L = log(1/x)`` in nested form.

        Only valid in the formula region (``x <= b(t0)``).
        """
        try:
            Lf = float(L)
        except OverflowError:
            Lf = math.inf
        if math.isfinite(Lf) and Lf < 1e300:
            s = -self.log_b_inverse(-Lf)
            return math.log(math.log(s))
        # s = 2L + lu - 2H: relative corrections below 1e-290
        _, logL = L.log_magnitude()
        if logL.depth <= 1 or (logL.depth == 2 and not logL.inverse and logL.representable):
            lL = float(logL)
            if math.isfinite(lL):
                return math.log(math.log(2.0) + lL)
        # log L itself beyond float: u = log L to full precision, lu = log u
        return logL.log()

    def radius_nested(self, lu: float) -> NestedLogNumber:
        """``b(t)`` as a nested number for ``t`` given by ``lu = log log log 1/t``."""
        H = float(self.h.log_h(lu))
        u = math.exp(lu) if lu < 709.0 else math.inf
        if u < 700.0:
            s = math.exp(u)
            if s < 1e300:
                return NestedLogNumber.from_log(self.log_b_formula_s(s))
            log_L = u - math.log(2.0) + math.log1p((2.0 * H - lu) * math.exp(-u)) if u < 745 else u - math.log(2.0)
            return NestedLogNumber.from_log_nested(NestedLogNumber.from_log(log_L), negative=True)
        if math.isfinite(u):
            return NestedLogNumber.from_log_nested(NestedLogNumber.from_log(u - math.log(2.0)), negative=True)
        # u = exp(lu) beyond float: log(1/b) = exp(exp(lu)) to relative precision 1e-300
        return NestedLogNumber.from_log_nested(NestedLogNumber.from_loglog(lu), negative=True)


def log_t_grid(norm: Normalizer, u_max: float = 6.0, n: int = 400, continuation: bool = False) -> np.ndarray:
    """Increasing ``log t`` values from ``t = exp(-exp(e^u_max))`` up to ``t0`` (or 1)."""
    u0 = math.log(norm.s0)
    u = np.linspace(u_max, u0, n)
    lt = -np.exp(u)
    if continuation:
        lt = np.concatenate([lt, np.linspace(-norm.s0, 0.0, n // 4)[1:]])
    return lt


# -- condition checks -----------------------------------------------------------


@dataclass(frozen=True)
class ConditionResult:
    passed: bool
    worst: float
    witness: tuple | None = None


def check_condition_49(norm: Normalizer, rho: float, grid: np.ndarray | None = None) -> ConditionResult:
    """``b(t)/t^rho`` nondecreasing in ``t`` over the grid (given as ``log t`` values)."""
    if not rho > 1.0 / 3.0:
        raise ValueError("rho must exceed 1/3")
    lt = np.sort(log_t_grid(norm) if grid is None else np.asarray(grid, dtype=float))
    f = norm.log_b(lt) - rho * lt
    step = np.diff(f)
    tol = 1e-12 * np.maximum(1.0, np.abs(f[1:]))
    bad = np.flatnonzero(step < -tol)
    worst = float(step.min()) if step.size else 0.0
    if bad.size:
        i = int(bad[np.argmin(step[bad])])
        return ConditionResult(False, worst, (float(lt[i]), float(lt[i + 1])))
    return ConditionResult(True, worst)


def check_condition_50(
    norm: Normalizer, epsilon: float, grid: np.ndarray | None = None, delta_log_t: float | None = None
) -> ConditionResult:
    """min over pairs ``s <= t <= delta`` of ``(b(s)/b(t)) (t/s)``; passes iff ``>= 1 - epsilon``."""
    lt = np.sort(log_t_grid(norm, n=120) if grid is None else np.asarray(grid, dtype=float))
    if delta_log_t is not None:
        lt = lt[lt <= delta_log_t]
    lb = norm.log_b(lt)
    g = lb - lt
    # log ratio for pair (s, t) with s <= t: g(s) - g(t)
    D = g[:, None] - g[None, :]
    iu = np.triu_indices(len(lt))
    vals = D[iu]
    k = int(np.argmin(vals))
    worst = float(math.exp(vals[k]))
    witness = (float(lt[iu[0][k]]), float(lt[iu[1][k]]))
    return ConditionResult(worst >= 1.0 - epsilon, worst, witness)


def validate_normalizer(norm: Normalizer, rho: float = 0.4, epsilon: float = 0.01) -> None:
    r49 = check_condition_49(norm, rho)
    if not r49.passed:
        raise ConditionFailure(f"monotonicity of b(t)/t^{rho} fails between log t = {r49.witness}")
    r50 = check_condition_50(norm, epsilon)
    if not r50.passed:
        raise ConditionFailure(f"ratio condition fails: worst ratio {r50.worst:.6g} at log t = {r50.witness}")


@dataclass(frozen=True)
class XYResult:
    passed: bool
    threshold_lu: float | None
    witness_lu: float | None


def check_condition_xy(
    h: SlowFunction, theta: float, x0_lu: float | None = None, lu_max: float = 60.0, n: int = 2000
) -> XYResult:
    """``log h(x) <= (log log x)^theta`` above ``x0`` (compared in ``lu`` coordinates).

    Without ``x0`` the check passes when violations stop before the top tenth
    of the grid; ``threshold_lu`` reports where the bound starts to hold.
    """
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    lo = 0.0 if x0_lu is None else x0_lu
    lu = np.linspace(lo, lu_max, n)
    lhs = np.asarray(h.log_h(lu), dtype=float)
    rhs = np.exp(theta * lu)
    bad = lhs > rhs * (1 + 1e-12) + 1e-300
    if x0_lu is not None:
        if bad.any():
            return XYResult(False, x0_lu, float(lu[np.argmax(bad)]))
        return XYResult(True, x0_lu, None)
    if not bad.any():
        return XYResult(True, float(lu[0]), None)
    last = int(np.flatnonzero(bad)[-1])
    if last >= int(0.9 * n):
        return XYResult(False, None, float(lu[last]))
    return XYResult(True, float(lu[last + 1]), float(lu[last]))


# -- b-inverse integrability -------------------------------------------------------


@dataclass(frozen=True)
class Condition3Report:
    verdict: str
    value: float
    partial: np.ndarray
    series: DivergenceVerdict | None = None
    direct_value: float | None = None
    direct_verdict: str | None = None


_LABEL = {Verdict.CONVERGES: "finite", Verdict.DIVERGES: "infinite", Verdict.INCONCLUSIVE: "inconclusive"}


def atom_binverse_log_terms(measure: Atoms | NestedLogAtoms, norm: Normalizer, eps: float = 1.0) -> np.ndarray:
    """``log(m_i b^{<-}(|y_i|/eps))`` per atom, in the measure's atom order.

    In the formula region ``m b^{<-}(r) = m r^2 h^2 / u``, so the term only
    needs ``log(m r^2)`` and ``lu``; the ``s`` parts cancel exactly.
    """
    out = []
    v = atom_view(measure)
    lb0 = norm.log_b_formula_s(norm.s0)
    for i in range(len(v.log_r)):
        lr = v.log_r[i] - math.log(eps)
        if lr >= 0:
            out.append(v.log_m[i])
            continue
        if lr >= lb0:
            out.append(v.log_m[i] + lr / norm.kappa)
            continue
        if isinstance(measure, NestedLogAtoms) and not math.isfinite(lr):
            a = measure.atoms[i]
            L = a.radius.reciprocal()
            _, mag = L.log_magnitude()
            lu = norm.lu_from_log_inv_radius(mag)
            log_mr2 = a.log_mr2 - 2 * math.log(eps)
        else:
            lu = math.log(math.log(-norm.log_b_inverse(lr)))
            log_mr2 = v.log_w[i] - 2 * math.log(eps)
        out.append(log_mr2 + 2 * float(norm.h.log_h(lu)) - lu)
    return np.array(out)


def _radial_log_tail(measure: RadialPower, log_x):
    a = measure.alpha
    la = -a * np.minimum(log_x, 0.0)
    with np.errstate(divide="ignore"):
        return np.where(
            log_x >= 0, -np.inf, math.log(measure.coef * measure.total_weight / a) + la + np.log(-np.expm1(-la))
        )


def _block_integrals(log_integrand, n_blocks: int, s_start: float = 0.0) -> np.ndarray:
    """``int_{j}^{j+1} exp(log_integrand(s)) ds`` for unit blocks, returned as logs."""
    out = np.empty(n_blocks)
    for j in range(n_blocks):
        a, b = s_start + j, s_start + j + 1
        ref = float(max(log_integrand(a), log_integrand(0.5 * (a + b)), log_integrand(b)))
        if ref == -math.inf:
            out[j] = -math.inf
            continue
        val, _ = integrate.quad(lambda s: math.exp(float(log_integrand(s)) - ref), a, b, limit=100, epsabs=0, epsrel=1e-10)
        out[j] = ref + math.log(val) if val > 0 else -math.inf
    return out


def check_condition_3(
    measure: LevyMeasure, norm: Normalizer, eps: float = 1.0, n_blocks: int = 1000, direct: bool = True
) -> Condition3Report:
    """Finiteness of ``int_0^1 Pibar(eps b(t)) dt``."""
    if isinstance(measure, RadialPower):
        def log_integrand(s):
            return float(_radial_log_tail(measure, norm.log_b(-s) + math.log(eps))) - s

        blocks = _block_integrals(log_integrand, n_blocks)
        partial = np.exp(np.logaddexp.accumulate(blocks))
        ser = classify_log_terms(blocks, boundary="loglog")
        verdict = _LABEL[ser.verdict]
        value = float(partial[-1])
        if verdict == "finite":
            fin = blocks[np.isfinite(blocks)]
            if fin.size >= 2:
                q = math.exp(min(fin[-1] - fin[-2], 0.0))
                value += math.exp(fin[-1]) * q / (1 - q) if q < 1 else math.inf
        return Condition3Report(verdict, value, partial, ser)

    log_terms = atom_binverse_log_terms(measure, norm, eps)
    order = np.argsort(-atom_view(measure).rank, kind="stable")
    lt = log_terms[order]
    with np.errstate(over="ignore"):
        partial = np.exp(np.logaddexp.accumulate(lt))
    if measure_is_truncated(measure):
        ser = classify_log_terms(lt, boundary="loglog")
        verdict = _LABEL[ser.verdict]
    else:
        ser, verdict = None, "finite"
    value = float(partial[-1])
    direct_value = direct_verdict = None
    if direct and isinstance(measure, Atoms):
        direct_value = _direct_atoms_integral(measure, norm, eps)
        direct_verdict = "finite" if math.isfinite(direct_value) else "infinite"
    return Condition3Report(verdict, value, partial, ser, direct_value, direct_verdict)


def _direct_atoms_integral(measure: Atoms, norm: Normalizer, eps: float, s_max: float = 800.0) -> float:
    """``int_0^1 Pibar(eps b(t)) dt`` by quadrature in ``s = log 1/t`` (no use of ``b^{<-}``)."""
    r = np.linalg.norm(measure.points, axis=1)
    m = measure.masses

    def integrand(s):
        bt = eps * math.exp(norm.log_b(-s))
        return float(m[r > bt].sum()) * math.exp(-s)

    total = 0.0
    edges = np.concatenate([np.linspace(0, 20, 401), np.linspace(20, s_max, 200)[1:]])
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(integrand, a, b, limit=200, epsabs=1e-15, epsrel=1e-10)
        total += val
    return total


# -- lemma conditions -----------------------------------------------------------


@dataclass(frozen=True)
class LemmaCondReport:
    third_moment_partial: np.ndarray
    third_moment_verdict: str
    eps_verdicts: dict
    ratio_log_t: np.ndarray
    ratio: np.ndarray
    ratio_verdict: str


def check_lemma_cond(
    measure: LevyMeasure, norm: Normalizer, grid: np.ndarray | None = None, n_blocks: int = 1000
) -> LemmaCondReport:
    # (a) int_0^1 b(t)^-3 int_{|y| <= b(t)} |y|^3 dPi dt, blockwise in s
    def log_integrand(s):
        lb = float(norm.log_b(-s))
        tm = third_moment_ball(measure, math.exp(lb)) if lb > -745 else 0.0
        return (math.log(tm) if tm > 0 else -math.inf) - 3 * lb - s

    blocks = _block_integrals(log_integrand, n_blocks)
    partial = np.exp(np.logaddexp.accumulate(blocks))
    ser = classify_log_terms(blocks, boundary="loglog")
    eps_verdicts = {e: check_condition_3(measure, norm, eps=e, direct=False).verdict for e in (0.5, 0.1)}

    # (c) t/b(t) int_{b(t) < |y| <= 1} |y| dPi
    lt = np.linspace(-1.0, -60.0, 120) if grid is None else np.asarray(grid, dtype=float)
    ratio = np.array(
        [math.exp(x - float(norm.log_b(x))) * abs_first_moment_annulus(measure, math.exp(float(norm.log_b(x)))) for x in lt]
    )
    tail = ratio[len(ratio) // 2:]
    if np.all(tail == 0) or (tail[-1] < 1e-3 * max(ratio.max(), 1e-300) and np.all(np.diff(tail) <= 1e-15)):
        rv = "to-zero"
    elif tail[-1] < tail[0]:
        rv = "inconclusive"
    else:
        rv = "not-to-zero"
    return LemmaCondReport(partial, _LABEL[ser.verdict], eps_verdicts, lt, ratio, rv)


def lemma_xy_chain(measure: Atoms | NestedLogAtoms, norm: Normalizer, theta: float) -> np.ndarray:
    """Per-atom log ratio of the ``b^{<-}`` term to the integrand with ``log_+`` power ``1/theta``.

    Bounded ratios are the computable content of the domination step that
    turns the variance bound plus the growth bound on ``h`` into finiteness.
    """
    v = atom_view(measure)
    bt = atom_binverse_log_terms(measure, norm)
    out = []
    for i in range(len(v.log_r)):
        lv = v.log_V_at(i)
        L = max(1.0, -lv)
        log41 = v.log_w[i] - lv - math.log(L) / theta
        out.append(bt[i] - log41)
    return np.array(out)
