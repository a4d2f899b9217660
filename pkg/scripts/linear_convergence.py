"""First-order convergence of the implicit scheme on the linear driver F = lam * y.

Reports the node-wise relative error against e^{lam (T - t)} E_t[eta] for a
sequence of lattice sizes.

    python scripts/linear_convergence.py --lam 0.5 --N 100 200 400 800
"""
import argparse

import numpy as np

from bsvi.clock import build_grid
from bsvi.paths import LatticeBackend, martingale_representation
from bsvi.problem import Linear, Problem, TerminalSpec
from bsvi.solver import SolverConfig, solve
from bsvi.tables import ConvergenceTable


def nodewise_error(lam, N, scheme):
    g = build_grid(1.0, N)
    be = LatticeBackend(g)
    p = Problem(F=Linear(lam), eta=TerminalSpec("clip", lo=-2, hi=2))
    sol = solve(p, g, be, SolverConfig(scheme))
    xi = martingale_representation(be, g, p.eta_values).xi
    worst = 0.0
    for i in range(N + 1):
        ref = np.exp(lam * (1.0 - g.times[i])) * xi[i]
        nz = ref != 0
        if nz.any():
            worst = max(worst, float((np.abs(sol.Y[i][nz] - ref[nz]) / np.abs(ref[nz])).max()))
    return worst


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--lam", type=float, default=0.5)
    ap.add_argument("--N", type=int, nargs="+", default=[100, 200, 400, 800])
    ap.add_argument("--scheme", default="penalized_implicit")
    a = ap.parse_args()
    t = ConvergenceTable(["N", "relative_error", "error_times_N"])
    for N in a.N:
        e = nodewise_error(a.lam, N, a.scheme)
        t.add(N, e, e * N)
    print(t.to_csv(), end="")


if __name__ == "__main__":
    main()
