"""Penalized-implicit Y^eps against the projected scheme on an active interval constraint.

    python scripts/epsilon_sweep.py --N 200 --eps 1e-1 1e-2 1e-3 1e-4 --out sweep.csv
"""
import argparse
from dataclasses import dataclass

from bsvi.clock import LinearRate, build_grid
from bsvi.convex import IndicatorInterval
from bsvi.paths import LatticeBackend
from bsvi.problem import Constant, Problem, TerminalSpec
from bsvi.solver import epsilon_sweep


@dataclass
class SweepSetup:
    N: int = 200
    drift: float = 0.5
    lo: float = -10.0
    hi: float = 0.0
    a_rate: float = 0.0
    eps: tuple = (1e-1, 1e-2, 1e-3, 1e-4)


def run(s: SweepSetup):
    g = build_grid(1.0, s.N, LinearRate(s.a_rate))
    box = IndicatorInterval(s.lo, s.hi)
    p = Problem(F=Constant(s.drift), G=Constant(s.drift), phi=box, psi=box,
                eta=TerminalSpec("constant", c=0.0))
    return epsilon_sweep(p, g, LatticeBackend(g), sorted(s.eps, reverse=True))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--N", type=int, default=200)
    ap.add_argument("--drift", type=float, default=0.5)
    ap.add_argument("--a-rate", type=float, default=0.0, help="dA = rate * dt")
    ap.add_argument("--eps", type=float, nargs="+", default=[1e-1, 1e-2, 1e-3, 1e-4])
    ap.add_argument("--out", default=None)
    a = ap.parse_args()
    table = run(SweepSetup(N=a.N, drift=a.drift, a_rate=a.a_rate, eps=tuple(a.eps)))
    print(table.to_csv(), end="")
    if a.out:
        table.write(a.out)


if __name__ == "__main__":
    main()
