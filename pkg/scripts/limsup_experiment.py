"""Simulate the calibrated reference measure and compare windowed maxima of |X_t|/b(t) with lambda."""

import argparse

from levylab.normalizers import Normalizer, PowLogLog
from levylab.simulate import SimConfig, calibrated_atoms, limsup_diagnostic, simulate_path_grid


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lams", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    ap.add_argument("--n-min", type=int, default=12)
    ap.add_argument("--n-max", type=int, default=40)
    ap.add_argument("--replications", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    norm = Normalizer(PowLogLog(1.0))
    print("lam,window,q05,q50,q95,trend_slope")
    for lam in args.lams:
        m = calibrated_atoms(lam, norm)
        cfg = SimConfig(norm, 0.5, args.n_min, args.n_max, args.replications, args.seed)
        tr = limsup_diagnostic(simulate_path_grid(m, None, cfg, threads=args.threads))
        q = tr.quantiles
        print(f"{lam},{tr.window[0]}-{tr.window[1]},{q[0.05]:.4f},{q[0.5]:.4f},{q[0.95]:.4f},{tr.trend_slope:.5f}")


if __name__ == "__main__":
    main()
