"""Run every bundled scenario and print one line per check.

    python scripts/run_scenarios.py --out out
"""
import argparse
import os

from bsvi.cli import execute
from bsvi.config import parse_config
from bsvi.scenarios import SCENARIOS


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="out")
    ap.add_argument("--only", nargs="*", default=None, help="scenario names to run")
    a = ap.parse_args()
    worst = 0
    for name, sc in SCENARIOS.items():
        if a.only and name not in a.only:
            continue
        cfg = parse_config(sc.config)
        code, manifest = execute(cfg, cfg.command, os.path.join(a.out, name))
        worst = max(worst, code)
        for c in manifest["checks"]:
            print(f"{name:26s} {'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['max_violation']}")
    raise SystemExit(worst)


if __name__ == "__main__":
    main()
