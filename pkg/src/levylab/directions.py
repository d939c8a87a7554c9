"""Maximisation of piecewise quadratic forms over the unit sphere.

The objective for a discrete measure with unit directions ``u_i``, radii
``r_i`` and second-moment weights ``w_i = m_i r_i^2`` is

    f(z) = sum_i w_i <u_i, z>^2  1{ r_i |<u_i, z>| <= t }

It is even in ``z``, quadratic on every region with a fixed active set and
drops when an atom leaves the region, so the supremum sits either at a top
eigenvector of an active-set matrix or on a breakpoint manifold
``r_i <u_i, z> = +-t``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

INCLUSION_SLACK = 1e-12


@dataclass(frozen=True)
class SphereSearch:
    grid_size: int = 4096
    keep: int = 16
    rounds: int = 3
    pair_manifolds: bool = True


@dataclass(frozen=True)
class SearchResult:
    value: float
    direction: np.ndarray
    converged: bool


def sphere_grid(n: int, d: int) -> np.ndarray:
    """Quasi-uniform unit vectors; half-sphere coverage suffices for even objectives."""
    if d == 1:
        return np.ones((1, 1))
    if d == 2:
        theta = math.pi * (np.arange(n) + 0.5) / n
        return np.column_stack([np.cos(theta), np.sin(theta)])
    if d == 3:
        k = np.arange(n) + 0.5
        z = 1.0 - 2.0 * k / n
        phi = math.pi * (1.0 + math.sqrt(5.0)) * k
        rho = np.sqrt(1.0 - z * z)
        return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    pts = qmc.Halton(d, scramble=False).random(n + 1)[1:]
    g = _norm_ppf(np.clip(pts, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _norm_ppf(p):
    from scipy.special import ndtri

    return ndtri(p)


def atom_objective(Z: np.ndarray, U: np.ndarray, r: np.ndarray, w: np.ndarray, t: float) -> np.ndarray:
    Z = np.atleast_2d(Z)
    C = Z @ U.T
    inside = r * np.abs(C) <= t * (1.0 + INCLUSION_SLACK)
    return (C * C * w * inside).sum(axis=1)


def _active_matrix(U, w, mask):
    Us = U[mask]
    return (Us * w[mask, None]).T @ Us


def _top_eigvec(M):
    vals, vecs = np.linalg.eigh(M)
    return vecs[:, -1]


def _complement_basis(B: np.ndarray, d: int) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of the columns of B."""
    q, _ = np.linalg.qr(B, mode="complete")
    return q[:, B.shape[1]:]


def trust_region_boundary(A: np.ndarray, g: np.ndarray) -> np.ndarray:
    """argmax of w'Aw + 2 g'w subject to |w| = 1."""
    k = A.shape[0]
    if k == 1:
        cands = np.array([[1.0], [-1.0]])
        vals = (cands @ A * cands).sum(1) + 2 * cands @ g
        return cands[np.argmax(vals)]
    lam, V = np.linalg.eigh(A)
    gp = V.T @ g
    lmax = lam[-1]
    scale = max(1.0, np.abs(lam).max(), np.abs(g).max())

    def norm_sq(mu):
        return float(np.sum((gp / (mu - lam)) ** 2))

    top = np.isclose(lam, lmax, rtol=0, atol=1e-13 * scale)
    if np.all(np.abs(gp[top]) <= 1e-14 * scale):
        # hard case: pad with the top eigenvector if the secular curve stays short
        mu = lmax
        y = np.zeros(k)
        rest = ~top
        y[rest] = gp[rest] / (mu - lam[rest])
        n2 = float(np.sum(y * y))
        if n2 <= 1.0:
            y[np.argmax(top)] = math.sqrt(1.0 - n2)
            return V @ y
    lo = lmax
    hi = lmax + np.linalg.norm(g) + 1e-300
    while norm_sq(hi) > 1.0:
        hi = lmax + 2 * (hi - lmax)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if norm_sq(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    y = gp / (hi - lam)
    y /= np.linalg.norm(y)
    return V @ y


def sphere_stationary_points(A: np.ndarray, g: np.ndarray) -> list[np.ndarray]:
    """Every KKT point of w'Aw + 2 g'w on |w| = 1 (generic case).

    Stationary points solve (mu - A) w = g; mu runs over the roots of the
    secular function sum gp_i^2 / (mu - lam_i)^2 = 1, of which there are at
    most two between consecutive eigenvalues and one beyond each end.
    """
    k = A.shape[0]
    lam, V = np.linalg.eigh(A)
    gp = V.T @ g
    scale = max(1.0, float(np.abs(lam).max()), float(np.abs(g).max()))
    if np.all(np.abs(gp) <= 1e-14 * scale):
        return [V[:, i] * s for i in range(k) for s in (1.0, -1.0)]

    def phi(mu):
        return float(np.sum((gp / (mu - lam)) ** 2)) - 1.0

    def bisect(lo, hi, rising):
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if (phi(mid) > 0) == rising:
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)

    gn = float(np.linalg.norm(gp)) + 1e-300
    roots = [bisect(lam[-1], lam[-1] + gn + 1e-12, rising=False), bisect(lam[0] - gn - 1e-12, lam[0], rising=True)]
    for a, b in zip(lam[:-1], lam[1:]):
        if b - a <= 1e-13 * scale:
            continue
        # phi is convex on (a, b); locate its minimum by golden section
        lo, hi = a, b
        for _ in range(200):
            m1, m2 = lo + 0.382 * (hi - lo), lo + 0.618 * (hi - lo)
            if phi(m1) < phi(m2):
                hi = m2
            else:
                lo = m1
            if hi - lo <= 1e-15 * scale:
                break
        m = 0.5 * (lo + hi)
        if phi(m) < 0:
            roots.append(bisect(a, m, rising=False))
            roots.append(bisect(m, b, rising=True))
    out = []
    for mu in roots:
        den = mu - lam
        if np.any(den == 0):
            continue
        y = gp / den
        ny = np.linalg.norm(y)
        if ny > 0 and np.isfinite(ny):
            out.append(V @ (y / ny))
    return out


def _manifold_candidates(U, r, w, t, mask, tight_idx, d):
    """Maximisers of the active-set form on {r_i <u_i,z> = +-t for i in tight_idx}."""
    M = _active_matrix(U, w, mask | _index_mask(len(r), tight_idx))
    B = U[list(tight_idx)].T
    out = []
    for signs in itertools.product((1.0, -1.0), repeat=len(tight_idx)):
        c = np.array([s * t / r[i] for s, i in zip(signs, tight_idx)])
        G = B.T @ B
        try:
            coef = np.linalg.solve(G, c)
        except np.linalg.LinAlgError:
            continue
        z0 = B @ coef
        n0 = float(z0 @ z0)
        if n0 > 1.0:
            continue
        rho = math.sqrt(max(0.0, 1.0 - n0))
        Q = _complement_basis(B, d)
        if Q.shape[1] == 0:
            out.append(z0)
            continue
        A = rho * rho * (Q.T @ M @ Q)
        g = rho * (Q.T @ M @ z0)
        for wv in sphere_stationary_points(A, g):
            z = z0 + rho * (Q @ wv)
            out.append(z / np.linalg.norm(z))
    return out


def _index_mask(n, idx):
    m = np.zeros(n, dtype=bool)
    m[list(idx)] = True
    return m


def _circle_exact(U, r, w, t) -> SearchResult:
    phi = np.arctan2(U[:, 1], U[:, 0])
    breaks = [0.0, math.pi]
    for i in np.flatnonzero(r > t):
        delta = math.acos(t / r[i])
        for b in (phi[i] + delta, phi[i] - delta):
            breaks.append(b % math.pi)
    breaks = np.unique(np.array(breaks))
    cands = [breaks]
    mids = 0.5 * (breaks[:-1] + breaks[1:])
    for lo, hi, m in zip(breaks[:-1], breaks[1:], mids):
        z = np.array([math.cos(m), math.sin(m)])
        mask = r * np.abs(U @ z) <= t
        if not mask.any():
            continue
        v = _top_eigvec(_active_matrix(U, w, mask))
        ang = math.atan2(v[1], v[0]) % math.pi
        if lo <= ang <= hi:
            cands.append(np.array([ang]))
    ang = np.concatenate(cands)
    Z = np.column_stack([np.cos(ang), np.sin(ang)])
    vals = atom_objective(Z, U, r, w, t)
    k = int(np.argmax(vals))
    return SearchResult(float(vals[k]), Z[k], True)


def maximize_atoms(U, r, w, t, search: SphereSearch = SphereSearch()) -> SearchResult:
    """Supremum of the truncated directional second moment of a discrete measure."""
    n, d = U.shape
    if n == 0:
        return SearchResult(0.0, np.eye(d)[0], True)
    if d == 1:
        val = float(atom_objective(np.ones((1, 1)), U, r, w, t)[0])
        return SearchResult(val, np.ones(1), True)
    if d == 2:
        return _circle_exact(U, r, w, t)

    Z = sphere_grid(search.grid_size, d)
    vals = atom_objective(Z, U, r, w, t)
    order = np.argsort(vals)[::-1][: search.keep]
    pool = [Z[i] for i in order]
    inside_all = r <= t
    if inside_all.any():
        pool.append(_top_eigvec(_active_matrix(U, w, inside_all)))

    best_val = -1.0
    best_z = pool[0]
    seen = set()
    converged = False
    loose = np.flatnonzero(r > t)
    for _ in range(search.rounds):
        new = []
        for z in pool:
            mask = r * np.abs(U @ z) <= t * (1.0 + INCLUSION_SLACK)
            key = mask.tobytes()
            if key in seen:
                continue
            seen.add(key)
            if mask.any():
                new.extend(np.linalg.eigh(_active_matrix(U, w, mask))[1].T)
            for i in loose:
                new.extend(_manifold_candidates(U, r, w, t, mask, (i,), d))
            if search.pair_manifolds and d >= 3:
                for i, j in itertools.combinations(loose, 2):
                    new.extend(_manifold_candidates(U, r, w, t, mask, (i, j), d))
        if not new:
            converged = True
            break
        cand = np.array(pool + new)
        cv = atom_objective(cand, U, r, w, t)
        k = int(np.argmax(cv))
        improved = cv[k] > best_val * (1 + 1e-15)
        if cv[k] > best_val:
            best_val, best_z = float(cv[k]), cand[k]
        if not improved and _:
            converged = True
            break
        top = np.argsort(cv)[::-1][: search.keep]
        pool = [cand[i] for i in top]
    else:
        converged = True
    return SearchResult(best_val, best_z, converged)


def compass_polish(f, z0: np.ndarray, step: float, min_step: float = 1e-12, max_iter: int = 20000):
    """Pattern search on the sphere using tangent-plane moves; f maps (m,d) -> (m,)."""
    z = z0 / np.linalg.norm(z0)
    fz = float(f(z[None, :])[0])
    d = z.shape[0]
    it = 0
    while step > min_step and it < max_iter:
        it += 1
        T = _complement_basis(z[:, None], d)
        moves = np.concatenate([T.T, -T.T]) * step
        trial = z[None, :] + moves
        trial /= np.linalg.norm(trial, axis=1, keepdims=True)
        tv = f(trial)
        k = int(np.argmax(tv))
        if tv[k] > fz:
            z, fz = trial[k], float(tv[k])
        else:
            step *= 0.5
    return fz, z


def brute_force_max(f, d: int, n_dirs: int = 100_000, polish: int = 20, seed: int = 0):
    """Independent oracle: dense quasi-uniform scan, then pattern-search polishing."""
    if d == 1:
        z = np.ones((1, 1))
        return float(f(z)[0])
    if d == 2:
        Z = sphere_grid(n_dirs, 2)
    else:
        rng = np.random.default_rng(seed)
        Z = rng.standard_normal((n_dirs, d))
        Z /= np.linalg.norm(Z, axis=1, keepdims=True)
    vals = f(Z)
    best = float(vals.max())
    spacing = math.pi / n_dirs if d == 2 else 4.0 / n_dirs ** (1.0 / (d - 1))
    for i in np.argsort(vals)[::-1][:polish]:
        v, _ = compass_polish(f, Z[i], spacing)
        best = max(best, v)
    return best
