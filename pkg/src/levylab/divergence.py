"""Three-valued classification of positive series ``sum_n exp(-c_n)``."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class Verdict(str, enum.Enum):
    DIVERGES = "Diverges"
    CONVERGES = "Converges"
    INCONCLUSIVE = "Inconclusive"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class DivergenceVerdict:
    verdict: Verdict
    margin: float
    n_lo: float
    n_hi: float
    r: float | None = None
    slope: float = math.nan
    loglog_coef: float = math.nan
    method: str = "band"


MIN_RANGE = 1000
MIN_SAMPLES = 8
# a larger shift would let short harmonic prefixes pass
MAX_SHIFT = 2


def classify_series(
    c,
    n=None,
    r: float | None = None,
    band: float = 2.0,
    slope_tol: float = 0.02,
    boundary: str = "inconclusive",
) -> DivergenceVerdict:
    """Decide whether ``sum exp(-c_n)`` diverges.

    ``g_n = log n - c_n`` is inspected on the window ``sqrt(n_max) <= n <= n_max``.
    A window entirely above ``band * log log n`` diverges and one entirely below
    ``-band * log log n`` converges.  Otherwise ``g`` is regressed on
    ``(1, log n, log log n, 1/n)``: a power-law slope beyond ``slope_tol`` decides.
    Inside the slope tolerance the result is Inconclusive, unless
    ``boundary="loglog"`` in which case the log-log coefficient decides
    (``> -1/2`` diverges, ``< -3/2`` converges), matching
    ``sum 1/(n (log n)^s)``.
    """
    c = np.asarray(c, dtype=float)
    n = np.arange(1, len(c) + 1, dtype=float) if n is None else np.asarray(n, dtype=float)
    if c.shape != n.shape or len(c) == 0:
        raise ValueError("c and n must be nonempty and of equal length")
    n_hi = float(n.max())
    lo = max(math.sqrt(n_hi), 3.0)
    win = n >= lo
    if n_hi < MIN_RANGE or win.sum() < MIN_SAMPLES or np.isnan(c[win]).any():
        return DivergenceVerdict(Verdict.INCONCLUSIVE, math.nan, lo, n_hi, r, method="too-few")
    nw, cw = n[win], c[win]
    ln = np.log(nw)
    lln = np.log(ln)
    g = ln - cw
    with np.errstate(invalid="ignore"):
        margin = float(np.median(g / lln))
    never_converges = bool(np.all(g >= 0))

    if np.all(g >= band * lln):
        return DivergenceVerdict(Verdict.DIVERGES, margin, lo, n_hi, r)
    if np.all(g <= -band * lln) and not never_converges:
        return DivergenceVerdict(Verdict.CONVERGES, margin, lo, n_hi, r)

    fin = np.isfinite(g)
    if fin.sum() < MIN_SAMPLES:
        return DivergenceVerdict(Verdict.INCONCLUSIVE, margin, lo, n_hi, r, method="regression")
    # the 1/n column soaks up finite-index corrections such as log(n/(n+1))
    X = np.column_stack([np.ones(fin.sum()), ln[fin], lln[fin], 1.0 / nw[fin]])
    coef, *_ = np.linalg.lstsq(X, g[fin], rcond=None)
    B, C = float(coef[1]), float(coef[2])
    if B > slope_tol:
        v = Verdict.DIVERGES
    elif B < -slope_tol:
        v = Verdict.CONVERGES
    elif boundary == "loglog" and C > -0.5:
        v = Verdict.DIVERGES
    elif boundary == "loglog" and C < -1.5:
        v = Verdict.CONVERGES
    else:
        v = Verdict.INCONCLUSIVE
    if v is Verdict.CONVERGES and never_converges:
        v = Verdict.INCONCLUSIVE
    return DivergenceVerdict(v, margin, lo, n_hi, r, B, C, "regression")


def classify_log_terms(log_terms, boundary: str = "inconclusive", p: float = 2.0) -> DivergenceVerdict:
    """Classify ``sum exp(log_terms[n-1])`` indexed by ``n = 1, 2, ...``.

    Long sequences go through :func:`classify_series`.  Prefixes shorter than
    ``MIN_RANGE`` (typically a few atoms of an infinite family) are declared
    convergent only when every term sits below a shifted p-series envelope
    ``term_1 ((1 + n0)/(n + n0))^p`` for some shift ``n0 <= MAX_SHIFT``;
    otherwise they are Inconclusive.
    """
    lt = np.asarray(log_terms, dtype=float)
    n = np.arange(1, len(lt) + 1, dtype=float)
    if len(lt) >= MIN_RANGE:
        return classify_series(-lt, n=n, boundary=boundary)
    if len(lt) == 0:
        return DivergenceVerdict(Verdict.CONVERGES, math.inf, 1, 0, method="empty")
    best = -math.inf
    for n0 in range(MAX_SHIFT + 1):
        envelope = lt[0] + p * (np.log(1.0 + n0) - np.log(n + n0))
        with np.errstate(invalid="ignore"):
            gap = envelope - lt
        margin = float(np.min(gap[1:])) if len(lt) > 1 else math.inf
        best = max(best, margin)
        if margin >= 0:
            break
    ok = len(lt) >= 3 and best >= 0
    v = Verdict.CONVERGES if ok else Verdict.INCONCLUSIVE
    return DivergenceVerdict(v, best, 1, float(len(lt)), method="dominance")
