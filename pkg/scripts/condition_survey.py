"""b-inverse integrability verdicts for the test measures across normalizer families."""

import numpy as np

from levylab.cluster import MildSchedule, StarSet, construct_pi0
from levylab.measures import Atoms, RadialPower, doubling_block_atoms
from levylab.normalizers import Const, ExpLogLogPow, Normalizer, PowLog, PowLogLog, check_condition_3


def main() -> None:
    loglog = Normalizer(PowLogLog(1.0))
    star = StarSet(np.array([[1.0, 0.0]]), np.array([1.0]))
    measures = {
        "two_atoms": Atoms(np.array([[0.8, 0.0], [0.0, 0.3]]), np.array([1.0, 1.0])),
        "radial_alpha1": RadialPower(1, 1.0, 0.5),
        "doubling_blocks": doubling_block_atoms(1020),
        "constructed_single": construct_pi0(star, loglog, MildSchedule(k_max=8)).measure,
    }
    families = {
        "const": Const(1.0),
        "powloglog(0.5)": PowLogLog(0.5),
        "powloglog(1)": PowLogLog(1.0),
        "powlog(1)": PowLog(1.0),
        "exploglogpow(1,0.5)": ExpLogLogPow(1.0, 0.5),
    }
    print("measure,family,verdict,partial_sum")
    for mname, m in measures.items():
        for fname, h in families.items():
            rep = check_condition_3(m, Normalizer(h))
            print(f"{mname},{fname},{rep.verdict},{rep.value:.6g}")


if __name__ == "__main__":
    main()
