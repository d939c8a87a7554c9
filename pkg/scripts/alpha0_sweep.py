"""Bracket the integral-test constant for synthetic profiles over a range of lambda and normalizers."""

import argparse
import time

from levylab.integral_test import SyntheticProfile, alpha0_estimate
from levylab.normalizers import ExpLogLogPow, Normalizer, PowLogLog


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lams", type=float, nargs="+", default=[0.5, 1.0, 2.0, 4.0])
    ap.add_argument("--r", type=float, default=0.5)
    ap.add_argument("--n-max", type=int, default=1_000_000)
    args = ap.parse_args()
    families = {"powloglog(1)": PowLogLog(1.0), "exploglogpow(1,0.5)": ExpLogLogPow(1.0, 0.5)}
    print("family,lam,alpha_lo,alpha_hi,width,seconds")
    for name, h in families.items():
        norm = Normalizer(h)
        for lam in args.lams:
            t0 = time.perf_counter()
            est = alpha0_estimate(SyntheticProfile(lam, norm), norm, r=args.r, n_max=args.n_max)
            dt = time.perf_counter() - t0
            print(f"{name},{lam},{est.alpha_lo:.5f},{est.alpha_hi:.5f},{est.width:.5f},{dt:.2f}")


if __name__ == "__main__":
    main()
