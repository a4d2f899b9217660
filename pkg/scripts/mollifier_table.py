"""Convergence of the exponential mollifier along Q = t + A for continuous and jump inputs.

    python scripts/mollifier_table.py --N 4096 --rate 1
"""
import argparse

from bsvi.clock import LinearRate, build_grid
from bsvi.verify import default_mollifier_specs, halving_indices, mollifier_lemma_check


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--N", type=int, default=4096)
    ap.add_argument("--rate", type=float, default=1.0)
    ap.add_argument("--halvings", type=int, default=6)
    a = ap.parse_args()
    g = build_grid(1.0, a.N, LinearRate(a.rate))
    rep = mollifier_lemma_check(g, default_mollifier_specs(g), halving_indices(a.N, halvings=a.halvings))
    for name, csv in rep.details["tables"].items():
        print(f"# {name}")
        print(csv, end="")
    print(f"# {'PASS' if rep.passed else 'FAIL'} violation {rep.max_violation:.3g}")


if __name__ == "__main__":
    main()
