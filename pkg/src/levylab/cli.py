"""Command-line entry point: ``levylab <command> --config PATH [--out DIR] [--seed N] [--threads N]``.

Exit codes: 0 definitive results, 2 some verdict is Inconclusive,
3 configuration error, 4 internal invariant breach.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .cluster import (
    ConstructionError,
    construct_pi0,
    membership,
    verify_binverse_sum,
    verify_telescoping,
    verify_v_bound,
)
from .config import ConfigError, RunConfig, build_measure, build_schedule, build_star, parse_config
from .integral_test import (
    MeasureProfile,
    ResolutionError,
    SyntheticProfile,
    alpha0_estimate,
    lil_constant,
    log_base_terms,
    measure_log_V_of_u,
    n_grid,
)
from .measures import (
    InvariantBreach,
    NestedLogAtoms,
    V1,
    integrability_diagnostic_41,
    log_tail_mass,
    log_trunc_second_moment,
)
from .normalizers import ConditionFailure, check_condition_3, check_condition_49, check_condition_50, check_lemma_cond
from .report import Table, render_directory, svg_from_csv, write_atomic, write_tables

COMMANDS = ("analyze", "alpha0", "lil", "construct", "membership", "simulate", "inequalities", "report")
RANDOMIZED = ("membership", "simulate", "inequalities")

EXIT_OK, EXIT_INCONCLUSIVE, EXIT_CONFIG, EXIT_BREACH = 0, 2, 3, 4


class UsageError(ValueError):
    pass


def _label(v: str) -> str:
    return {"finite": "Finite", "infinite": "Infinite", "inconclusive": "Inconclusive", "trivial-finite": "Finite"}.get(v, v)


def _passfail(ok: bool) -> str:
    return "Pass" if ok else "Fail"


# -- commands -----------------------------------------------------------------------


def cmd_analyze(cfg: RunConfig, seed, threads) -> list[Table]:
    measure, _ = build_measure(cfg)
    norm = cfg.normalizer
    f = Table("functionals", ["t", "tail", "V", "trace", "V1"])
    for t in np.geomspace(1e-6, 1.0, 25):
        lt = math.log(t)
        M = log_trunc_second_moment(measure, lt)
        lv = M.log_max_eigenvalue()
        tr = float(np.trace(M.scaled)) * math.exp(M.log_scale) if M.log_scale > -745 else 0.0
        v1 = V1(measure, float(t)).value if measure.dim <= 3 else math.nan
        f.add(float(t), math.exp(log_tail_mass(measure, lt)), math.exp(lv) if lv > -745 else 0.0, tr, v1)
    c = Table("conditions", ["check", "value", "verdict"])
    r49 = check_condition_49(norm, 0.4)
    r50 = check_condition_50(norm, 0.01)
    c.add("monotone_b_over_t_rho", r49.worst, _passfail(r49.passed))
    c.add("ratio_b", r50.worst, _passfail(r50.passed))
    c3 = check_condition_3(measure, norm, direct=False)
    c.add("tail_integral", c3.value, _label(c3.verdict))
    d41 = integrability_diagnostic_41(measure, 0.5)
    c.add("integrability_41", float(d41.partial[-1]) if d41.partial.size else 0.0, _label(d41.verdict))
    lc = check_lemma_cond(measure, norm)
    c.add("third_moment_integral", float(lc.third_moment_partial[-1]), _label(lc.third_moment_verdict))
    return [f, c]


def _alpha0_profile(cfg: RunConfig, block: dict):
    norm = cfg.normalizer
    if block.get("profile", "measure") == "synthetic":
        return SyntheticProfile(block.get("lam", 1.0), norm)
    measure, _ = build_measure(cfg)
    return MeasureProfile(measure, norm, use_v1=block.get("use_v1", False))


def cmd_alpha0(cfg: RunConfig, seed, threads) -> list[Table]:
    b = cfg.block("alpha0")
    norm = cfg.normalizer
    profile = _alpha0_profile(cfg, b)
    r, n_max = b.get("r", 0.5), b.get("n_max", 1_000_000)
    samples = b.get("samples", 400 if b.get("profile", "measure") == "measure" else None)
    summary = Table("alpha0", ["alpha_lo", "alpha_hi", "width", "r", "n_max", "unbounded", "zero_profile", "verdict"])
    # per-probe classes are intermediate; only the summary verdict decides the exit code
    probes = Table("alpha0_probes", ["alpha", "series_class", "margin", "slope", "loglog_coef", "method"])
    series = Table("alpha0_series", ["n", "c_n", "log_term"])
    try:
        est = alpha0_estimate(profile, norm, r, n_max, b.get("alpha_max", 10.0), samples=samples)
    except ResolutionError:
        summary.add(math.nan, math.nan, math.nan, r, n_max, False, False, "Inconclusive")
        return [summary, probes, series]
    verdict = "Unbounded" if est.unbounded else "Bracketed"
    summary.add(est.alpha_lo, est.alpha_hi, est.width, r, n_max, est.unbounded, est.zero_profile, verdict)
    for p in est.probes:
        v = p.verdict
        probes.add(p.alpha, str(v.verdict), v.margin, v.slope, v.loglog_coef, v.method)
    alpha = est.alpha_lo if est.unbounded else 0.5 * (est.alpha_lo + est.alpha_hi)
    n = n_grid(n_max, 200)
    base = log_base_terms(profile, norm, r, n)
    with np.errstate(over="ignore"):
        c = np.exp(2 * math.log(alpha) + base) if alpha > 0 else np.zeros_like(base)
    for ni, ci in zip(n, c):
        series.add(int(ni), float(ci), -float(ci))
    return [summary, probes, series]


def cmd_lil(cfg: RunConfig, seed, threads) -> list[Table]:
    b = cfg.block("lil")
    if b.get("profile", "loglog_power") == "loglog_power":
        beta = b.get("beta", 1.0)
        p = b.get("p", (1 - beta) / 2)

        def f(u):
            return -beta * np.log(u)

        u = np.geomspace(math.e, b.get("u_max", 1e12), b.get("points", 400))
    else:
        measure, _ = build_measure(cfg)
        f = measure_log_V_of_u(measure)
        p = b.get("p", 0.0)
        u = np.geomspace(math.e, min(b.get("u_max", 6.5), 6.5), b.get("points", 200))
    est = lil_constant(f, p, u)
    trace = Table("lil", ["u", "trace", "running_max"])
    for row in zip(est.u, est.trace, est.running_max):
        trace.add(*map(float, row))
    summary = Table("lil_summary", ["p", "lam", "stable", "verdict"])
    summary.add(p, est.lam, est.stable, "Stable" if est.stable else "Inconclusive")
    return [summary, trace]


def _require(cfg: RunConfig, name: str) -> dict:
    if name not in cfg.blocks:
        raise UsageError(f"{name}: block required for this command")
    return cfg.block(name)


def cmd_construct(cfg: RunConfig, seed, threads) -> list[Table]:
    b = _require(cfg, "construct")
    norm = cfg.normalizer
    con = construct_pi0(build_star(b), norm, build_schedule(b))
    m = con.measure
    atoms = Table("construction", ["k", "l", "segment", "sigma", "log_h", "lu", "radius", "mass", "log_mr2"])
    for a, rec in zip(m.atoms, con.records):
        atoms.add(rec.k, rec.l, rec.segment, rec.sigma, rec.H, rec.lu, a.radius, a.mass, a.log_mr2)
    tele = verify_telescoping(m, con)
    vb = verify_v_bound(con, b.get("probes", 30))
    bs = verify_binverse_sum(m, norm, con)
    radii = [a.radius for a in m.atoms]
    ident = Table("identities", ["check", "value", "tolerance", "verdict"])
    ident.add("k0", con.k0, 0.0, "Pass")
    ident.add("telescoping_residual", tele.max_residual, 1e-9, _passfail(tele.max_residual <= 1e-9))
    ident.add("variance_bound_max_log_ratio", float(vb.log_ratio.max()), 1e-9, _passfail(vb.holds))
    ires = float(bs.identity_residual.max())
    ident.add("binverse_term_residual", ires, 1e-9, _passfail(ires <= 1e-9))
    min_log_d = min(r.log_D for r in con.records)
    ident.add("masses_nonnegative", min_log_d, 0.0, _passfail(not math.isnan(min_log_d)))
    ident.add("radii_decreasing", 1.0, 0.0, _passfail(all(x > y for x, y in zip(radii, radii[1:]))))
    ident.add("binverse_sum", float(bs.partial[-1]), 0.0, _label(bs.verdict))
    terms = Table("binverse", ["k", "l", "log_term", "log_bound", "partial"])
    for rec, lt, lb, ps in zip(con.records, bs.log_terms, bs.log_bound_terms, bs.partial):
        terms.add(rec.k, rec.l, float(lt), float(lb), float(ps))
    return [atoms, ident, terms]


def cmd_membership(cfg: RunConfig, seed, threads) -> list[Table]:
    b = _require(cfg, "membership")
    norm = cfg.normalizer
    if b.get("profile", "synthetic") == "synthetic":
        shape = np.array(b["shape"], dtype=float) if "shape" in b else None
        profile = SyntheticProfile(b.get("lam", 1.0), norm, shape)
    else:
        measure, _ = build_measure(cfg)
        profile = MeasureProfile(measure, norm)
    pts = [np.array(p, dtype=float) for p in b["points"]]
    d = profile.dim
    if any(len(p) != d for p in pts):
        raise UsageError(f"membership.points: every point must have dimension {d}")
    summary = Table("membership", ["point"] + [f"x{i}" for i in range(d)] + ["epsilon", "label", "verdict", "method"])
    out = [summary]
    for i, x in enumerate(pts):
        rep = membership(
            x, profile, norm, b["epsilon"], b.get("r", 0.5), b.get("n_max", 1_000_000),
            b.get("grid_points", 60), b.get("mc_budget", 100_000), seed,
        )
        summary.add(i, *map(float, x), b["epsilon"], rep.label, str(rep.verdict.verdict), rep.method)
        tr = Table(f"membership_{i}", ["t", "log_integrand", "ci_lo", "ci_hi"])
        for lt, li, lo, hi in zip(rep.log_t, rep.log_integrand, rep.ci_lo, rep.ci_hi):
            tr.add(math.exp(lt), float(li), float(lo), float(hi))
        out.append(tr)
    return out


def cmd_simulate(cfg: RunConfig, seed, threads) -> list[Table]:
    from .simulate import SimConfig, empirical_cluster_hits, limsup_diagnostic, simulate_path_grid

    b = cfg.block("simulate")
    measure, _ = build_measure(cfg)
    sc = SimConfig(
        cfg.normalizer, b.get("r", 0.5), b.get("n_min", 1), b.get("n_max", 30), b.get("replications", 100), seed,
        b.get("lambda_pn", 1e4), b.get("eps_fraction", 1 / 32),
    )
    stats = simulate_path_grid(measure, measure.gamma, sc, threads=threads)
    d = measure.dim
    paths = Table(
        "paths",
        ["replication", "n", "t_n"] + [f"x{i}" for i in range(d)] + ["normalized", "running_max"],
        comment=f"config_hash={cfg.text_hash} seed={seed}",
    )
    for i in range(stats.replications):
        for j, n in enumerate(stats.n):
            paths.add(i, int(n), float(stats.t[j]), *map(float, stats.X[i, j]), float(stats.normalized[i, j]), float(stats.running_max[i, j]))
    window = tuple(b["window"]) if "window" in b else None
    L = limsup_diagnostic(stats, window)
    lim = Table("limsup", ["window_lo", "window_hi", "q05", "q50", "q95", "trend_slope"])
    lim.add(L.window[0], L.window[1], L.quantiles[0.05], L.quantiles[0.5], L.quantiles[0.95], L.trend_slope)
    out = [paths, lim]
    if "hit_point" in b:
        hits = empirical_cluster_hits(stats, b["hit_point"], b.get("hit_epsilon", 0.1))
        ht = Table("cluster_hits", ["n", "frequency", "mean_cumulative"])
        for j, n in enumerate(stats.n):
            ht.add(int(n), float(hits.frequency[j]), float(hits.cumulative[:, j].mean()))
        out.append(ht)
    return out


def cmd_inequalities(cfg: RunConfig, seed, threads) -> list[Table]:
    from .inequalities import (
        check_etemadi,
        check_lower_inequality,
        check_normal_lower,
        check_third_moment_limit,
        check_upper_inequality,
    )

    b = cfg.block("inequalities")
    measure, _ = build_measure(cfg)
    if isinstance(measure, NestedLogAtoms):
        raise UsageError("inequalities: constructed measures are not supported")
    t, trunc, delta = b.get("t", 0.01), b.get("b", 1.0), b.get("delta", 1.0)
    mc, sub = b.get("mc", 100_000), b.get("substeps", 64)
    x = np.array(b.get("x", [0.1, 0.2, 0.4, 0.8]), dtype=float)
    u = np.array(b.get("u", [0.05, 0.1, 0.2, 0.4]), dtype=float)
    nl = check_normal_lower()
    t_nl = Table("normal_lower", ["x", "tail", "bound", "margin", "verdict"])
    for row in zip(nl.x, nl.tail, nl.bound, nl.margin):
        t_nl.add(*map(float, row), _passfail(row[3] >= 0))
    cols = ["x", "estimate", "ci_lo", "ci_hi", "bound", "margin", "constant", "flagged", "verdict"]
    up = check_upper_inequality(measure, t, trunc, delta, x, mc, sub, seed)
    t_up = Table("upper", cols)
    for i in range(len(x)):
        t_up.add(float(x[i]), up.estimate[i], up.ci_lo[i], up.ci_hi[i], up.bound[i], up.margin[i], up.constant,
                 bool(up.flagged[i]), _passfail(not up.violation[i]))
    lo = check_lower_inequality(measure, t, trunc, delta, x, mc, seed + 1)
    t_lo = Table("lower", cols + ["exact"])
    for i in range(len(x)):
        ex = float(lo.exact[i]) if lo.exact is not None else math.nan
        t_lo.add(float(x[i]), lo.estimate[i], lo.ci_lo[i], lo.ci_hi[i], lo.bound[i], lo.margin[i], lo.constant,
                 bool(lo.flagged[i]), _passfail(not lo.violation[i]), ex)
    et = check_etemadi(measure, t, u, mc, sub, seed + 2)
    t_et = Table("etemadi", ["u", "lhs", "rhs", "method", "verdict"])
    for i in range(len(u)):
        t_et.add(float(u[i]), float(et.lhs[i]), float(et.rhs[i]), et.method, _passfail(not et.violation[i]))
    tm = check_third_moment_limit(measure, b.get("third_moment_t"), mc, seed + 3)
    t_tm = Table("third_moment", ["t", "estimate", "se", "limit"])
    for row in zip(tm.t, tm.estimate, tm.se):
        t_tm.add(*map(float, row), tm.limit)
    return [t_nl, t_up, t_lo, t_et, t_tm]


HANDLERS = {
    "analyze": cmd_analyze,
    "alpha0": cmd_alpha0,
    "lil": cmd_lil,
    "construct": cmd_construct,
    "membership": cmd_membership,
    "simulate": cmd_simulate,
    "inequalities": cmd_inequalities,
}


# -- driver --------------------------------------------------------------------------


def _threads(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("LEVYLAB_THREADS")
    return max(1, int(env)) if env and env.isdigit() else 1


def run(command: str, cfg: RunConfig | None, out_dir: Path | None = None, seed: int | None = None, threads: int = 1) -> int:
    """Execute one command; returns the exit code."""
    start = time.perf_counter()
    if command == "report":
        if out_dir is None:
            out_dir = Path(cfg.out_dir) if cfg is not None else Path("levylab-out")
        render_directory(out_dir)
        return EXIT_OK
    out_dir = Path(out_dir if out_dir is not None else cfg.out_dir)
    seed = cfg.seed if seed is None else seed
    if command in RANDOMIZED and seed is None:
        print(f"error: command '{command}' requires an explicit seed", file=sys.stderr)
        return EXIT_CONFIG
    try:
        tables = HANDLERS[command](cfg, 0 if seed is None else seed, threads)
    except (ConfigError, UsageError, ConstructionError, ConditionFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvariantBreach, AssertionError) as exc:
        print(f"invariant breach: {exc}", file=sys.stderr)
        return EXIT_BREACH
    paths = write_tables(out_dir, tables)
    if "svg" in cfg.formats:
        for p in paths:
            svg = svg_from_csv(p)
            if svg is not None:
                write_atomic(p.with_suffix(".svg"), svg)
    manifest = "\n".join(
        [
            f"command={command}",
            f"config_hash={cfg.text_hash}",
            f"seed={'none' if seed is None else seed}",
            f"version={__version__}",
            "tables=" + ",".join(t.name for t in tables),
        ]
    )
    write_atomic(out_dir / "manifest.txt", manifest + "\n")
    write_atomic(out_dir / "timing.txt", f"wall_time_seconds={time.perf_counter() - start:.3f}\nthreads={threads}\n")
    return EXIT_INCONCLUSIVE if any(t.has_inconclusive() for t in tables) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="levylab", description="Small-time LIL laboratory for pure-jump Levy processes.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="TOML run configuration (optional for 'report')")
    p.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
    p.add_argument("--seed", type=int, help="seed override")
    p.add_argument("--threads", type=int, help="worker threads (default: LEVYLAB_THREADS or 1)")
    p.add_argument("--version", action="version", version=f"levylab {__version__}")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = None
    if args.config is not None:
        try:
            text = args.config.read_text(encoding="utf-8")
        except OSError as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        try:
            cfg = parse_config(text)
        except ConfigError as exc:
            for e in exc.errors:
                print(f"config error: {e}", file=sys.stderr)
            return EXIT_CONFIG
    elif args.command != "report":
        print("error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and args.seed < 0:
        print("error: seed must be nonnegative", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.command, cfg, args.out, args.seed, _threads(args.threads))


if __name__ == "__main__":
    sys.exit(main())
