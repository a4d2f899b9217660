"""Command-line entry point.

Exit codes: 0 all requested checks pass, 2 a check failed, 3 usage, config
or validation error, 4 numeric failure (non-convergence, step too large,
non-finite values, ill-conditioned regression).
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .config import RunConfig, load_config, parse_config
from .convex import check_yosida_properties
from .errors import (ConfigError, IllConditioned, InvalidSpec, NonConvergence, NonFinite,
                     StepTooLarge, ValidationFailure)
from .paths import martingale_representation
from .problem import Linear, ZeroDriver, validate
from .scenarios import SCENARIOS, list_scenarios
from .solver import SolverConfig, epsilon_sweep, solve, sup_distance
from .tables import ConvergenceTable
from .verify import (CheckReport, check_apriori, check_dynamics_residual, check_martingale_estimate,
                     check_subdiff_inclusion, check_weak_variational, default_mollifier_specs,
                     halving_indices, mollifier_lemma_check)

log = logging.getLogger("bsvi")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


class Run:
    """One run owns ``out_dir``: tables are written there and listed with
    their sha256 digests in manifest.json."""

    def __init__(self, cfg: RunConfig, out_dir: str, threads: int = 1):
        self.cfg = cfg
        self.out = out_dir
        self.threads = threads
        self.files = {}
        self.checks: list[CheckReport] = []
        self.sweeps = {}
        os.makedirs(out_dir, exist_ok=True)

    def write_table(self, name, table: ConvergenceTable):
        path = os.path.join(self.out, name)
        text = table.to_csv()
        with open(path, "w", newline="") as fh:
            fh.write(text)
        self.files[name] = hashlib.sha256(text.encode()).hexdigest()

    def check_table(self):
        t = ConvergenceTable(["check", "max_violation", "tolerance", "passed"])
        for c in self.checks:
            t.add(c.name, c.max_violation, c.tolerance, int(c.passed))
        return t

    def manifest(self, command, started):
        return {"config_hash": self.cfg.config_hash, "version": __version__, "command": command,
                "seed": self.cfg.seed, "threads": self.threads, "started": started,
                "finished": _now(), "checks": [c.to_dict() for c in self.checks],
                "sweeps": self.sweeps, "files": self.files,
                "passed": all(c.passed for c in self.checks)}


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------------------


def _solution_checks(run: Run, cfg: RunConfig, grid, backend, sol):
    cc = cfg.check_cfg
    p = cfg.problem
    for name in cfg.checks:
        log.info("check %s", name)
        if name == "residual":
            run.checks.append(check_dynamics_residual(sol, cc.tol_residual))
        elif name == "subdiff":
            run.checks.append(check_subdiff_inclusion(sol, p, grid, n_random=cc.n_random, seed=cfg.seed,
                                                      n_paths=cc.n_paths, tol=cc.tol_subdiff))
        elif name == "weak":
            run.checks.append(check_weak_variational(sol, p, grid, cc.eps_indices or None, cc.n_affine,
                                                     seed=cfg.seed, n_paths=cc.n_paths, tol=cc.tol_weak))
        elif name == "apriori":
            run.checks.append(check_apriori(sol, p, grid, 2.0, cc.apriori_C, n_paths=cc.n_paths,
                                            seed=cfg.seed))
        elif name == "martingale":
            run.checks.append(check_martingale_estimate(backend, grid, p.eta_values, cc.martingale_C,
                                                        n_paths=cc.n_paths, seed=cfg.seed))


def cmd_solve(run: Run, cfg: RunConfig):
    grid = cfg.build_grid()
    backend = cfg.build_backend(grid)
    validate(cfg.problem, grid, backend)
    sol = solve(cfg.problem, grid, backend, cfg.solver)
    run.write_table("solution.csv", sol.to_table())
    return grid, backend, sol


def cmd_verify(run: Run, cfg: RunConfig):
    needs_solution = [c for c in cfg.checks if c != "mollifier"]
    grid = cfg.build_grid()
    if needs_solution:
        grid, backend, sol = cmd_solve(run, cfg)
        _solution_checks(run, cfg, grid, backend, sol)
    if "mollifier" in cfg.checks:
        rep = mollifier_lemma_check(grid, default_mollifier_specs(grid), halving_indices(grid.N))
        run.checks.append(rep)
        for name, csv in rep.details["tables"].items():
            path = f"mollifier_{name}.csv"
            with open(os.path.join(run.out, path), "w", newline="") as fh:
                fh.write(csv)
            run.files[path] = hashlib.sha256(csv.encode()).hexdigest()
            run.sweeps[f"mollifier_{name}"] = csv
    run.write_table("checks.csv", run.check_table())


def cmd_sweep(run: Run, cfg: RunConfig):
    grid = cfg.build_grid()
    backend = cfg.build_backend(grid)
    validate(cfg.problem, grid, backend)
    eps = sorted(cfg.sweep_eps, reverse=True)
    table = epsilon_sweep(cfg.problem, grid, backend, eps, scheme=cfg.solver.scheme)
    run.write_table("sweep.csv", table)
    run.sweeps["epsilon_sweep"] = table.to_csv()
    d = table.column("sup_dist_reference")
    if not any(np.isnan(d)):
        incr = max((b - a for a, b in zip(d, d[1:])), default=0.0)
        run.checks.append(CheckReport("sweep_monotone", max(incr, 0.0), 1e-10, {"distances": d}))
    run.write_table("checks.csv", run.check_table())


def cmd_oracle(run: Run, cfg: RunConfig):
    grid, backend, sol = cmd_solve(run, cfg)
    p = cfg.problem
    table = ConvergenceTable(["step", "time", "oracle_error"])
    if (isinstance(p.F, (Linear, ZeroDriver)) and isinstance(p.G, ZeroDriver)
            and p.phi.is_indicator_type and p.psi.is_indicator_type
            and type(p.phi).__name__ == "Zero" and type(p.psi).__name__ == "Zero"
            and backend.kind == "lattice" and not grid.path_dependent and float(grid.A[-1]) == 0):
        lam = getattr(p.F, "lam", 0.0)
        rep = martingale_representation(backend, grid, p.eta_values)
        worst = 0.0
        for i in range(grid.N + 1):
            o = np.exp(lam * (grid.T - grid.times[i])) * rep.xi[i]
            err = np.abs(sol.Y[i] - o)
            scale = np.abs(o)
            rel = np.where(scale > 0, err / np.where(scale > 0, scale, 1.0), np.where(err > 1e-12, np.inf, 0.0))
            table.add(i, float(grid.times[i]), float(rel.max()))
            worst = max(worst, float(rel.max()))
        run.checks.append(CheckReport("oracle_linear_relative", worst, cfg.oracle_tol, {"kind": "closed_form"}))
    elif p.phi.is_indicator_type and p.psi.is_indicator_type:
        ref = solve(p, grid, backend, SolverConfig("projected"))
        for i in range(grid.N + 1):
            table.add(i, float(grid.times[i]), float(np.abs(sol.Y[i] - ref.Y[i]).max()))
        run.checks.append(CheckReport("oracle_projected_distance", sup_distance(sol, ref), cfg.oracle_tol,
                                      {"kind": "projected_scheme"}))
    else:
        raise ConfigError("no oracle available for this problem")
    run.write_table("oracle.csv", table)
    run.write_table("checks.csv", run.check_table())


def cmd_props(run: Run, cfg: RunConfig):
    samples = np.linspace(-3.0, 3.0, cfg.props_probes)
    table = ConvergenceTable(["function", "epsilon", "delta", "a", "b", "c", "d", "e"])
    worst = 0.0
    for label, f in (("phi", cfg.problem.phi), ("psi", cfg.problem.psi)):
        for eps in cfg.props_eps:
            rep = check_yosida_properties(f, samples, eps, eps / 10)
            table.add(label, eps, eps / 10, *[rep.violations[k] for k in "abcde"])
            worst = max(worst, rep.max_violation)
    run.write_table("props.csv", table)
    run.checks.append(CheckReport("yosida_properties", worst, 1e-9, {}))
    run.write_table("checks.csv", run.check_table())


COMMAND_FUNCS = {"solve": cmd_solve, "verify": cmd_verify, "sweep": cmd_sweep,
                 "oracle": cmd_oracle, "props": cmd_props}


def execute(cfg: RunConfig, command: str, out_dir: str, threads: int = 1):
    """Run one pipeline; returns (exit code, manifest dict)."""
    started = _now()
    run = Run(cfg, out_dir, threads)
    COMMAND_FUNCS[command](run, cfg)
    manifest = run.manifest(command, started)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return (EXIT_OK if manifest["passed"] else EXIT_CHECK), manifest


def build_parser():
    ap = _Parser(prog="bsvi", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("run", "solve", "verify", "sweep", "oracle", "props"):
        sp = sub.add_parser(name, help=f"{name} a configured problem" if name != "run"
                            else "execute the command named in the config")
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", help="path to a run config file")
        src.add_argument("--scenario", choices=sorted(SCENARIOS), help="bundled scenario name")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", default=None, help="output directory (default: out/<name>)")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker cap; computation is sequential, the value is recorded")
        sp.add_argument("--verbose", action="store_true")
    lp = sub.add_parser("list", help="list bundled scenarios")
    lp.add_argument("--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "list":
        print(list_scenarios(args.verbose))
        return EXIT_OK
    try:
        if args.scenario:
            cfg = parse_config(SCENARIOS[args.scenario].config, args.seed)
        else:
            cfg = load_config(args.config, args.seed)
        command = cfg.command if args.command == "run" else args.command
        out = args.out or os.path.join("out", cfg.problem.name)
        code, manifest = execute(cfg, command, out, args.threads)
    except (ConfigError, ValidationFailure, InvalidSpec) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonConvergence, StepTooLarge, NonFinite, IllConditioned, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for c in manifest["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: violation {c['max_violation']} "
              f"(tolerance {c['tolerance']})")
    return code


if __name__ == "__main__":
    sys.exit(main())
