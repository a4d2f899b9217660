"""Run configuration: a sectioned key-value file parsed with configparser.

Sections: [run] [grid] [backend] [problem] [driver.F] [driver.G]
[convex.phi] [convex.psi] [terminal] [solver] [sweep] [checks] [props].
Every key has a default except ``[run] seed``, and the [problem] section
must be present.
"""
from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field

from .clock import AZero, HorizonSpec, LinearRate, LocalTimeProxy, build_grid
from .convex import AbsValue, IndicatorInterval, Quadratic, Zero
from .errors import BSVIError, ConfigError
from .paths import LatticeBackend, PathBatch, RegressionBackend
from .problem import DRIVERS, Problem, TerminalSpec
from .solver import SolverConfig

COMMANDS = ("solve", "verify", "sweep", "oracle", "props")
CHECKS = ("residual", "subdiff", "weak", "apriori", "martingale", "mollifier")


def _float(s):
    s = s.strip().lower()
    if s in ("inf", "+inf", "infinity"):
        return math.inf
    if s in ("-inf", "-infinity"):
        return -math.inf
    return float(s)


def _floats(s):
    return [_float(x) for x in s.replace(";", ",").split(",") if x.strip()]


def _words(s):
    return [x.strip() for x in s.replace(";", ",").split(",") if x.strip()]


@dataclass(frozen=True)
class GridCfg:
    T: float = 1.0
    N: int = 200
    a_kind: str = "zero"
    a_rate: float = 0.0
    a_lo: float = -math.inf
    a_hi: float = math.inf

    def build(self, horizon: HorizonSpec):
        if self.a_kind == "zero":
            a = AZero()
        elif self.a_kind == "linear":
            a = LinearRate(self.a_rate)
        elif self.a_kind == "local_time":
            a = LocalTimeProxy(self.a_rate, self.a_lo, self.a_hi)
        else:
            raise ConfigError(f"unknown a_kind {self.a_kind!r}")
        return build_grid(self.T, self.N, a, horizon)


@dataclass(frozen=True)
class BackendCfg:
    kind: str = "lattice"
    n_paths: int = 20000
    degree: int = 3
    x0: float = 0.0

    def build(self, grid, seed, d_W=1):
        if self.kind == "lattice":
            return LatticeBackend(grid, self.x0)
        if self.kind == "regression":
            return RegressionBackend(PathBatch.generate(grid, self.n_paths, seed, d_W, self.x0), self.degree)
        raise ConfigError(f"unknown backend kind {self.kind!r}")


@dataclass(frozen=True)
class CheckCfg:
    apriori_C: float = 1.0
    martingale_C: float = 4.0
    tol_residual: float = 1e-10
    tol_subdiff: float = 1e-2
    tol_weak: float = 1e-2
    n_paths: int = 10000
    n_random: int = 20
    n_affine: int = 5
    eps_indices: tuple = ()


@dataclass(frozen=True)
class RunConfig:
    problem: Problem
    seed: int
    command: str = "verify"
    checks: tuple = ()
    grid: GridCfg = field(default_factory=GridCfg)
    backend: BackendCfg = field(default_factory=BackendCfg)
    solver: SolverConfig = field(default_factory=SolverConfig)
    sweep_eps: tuple = (1e-1, 1e-2, 1e-3)
    check_cfg: CheckCfg = field(default_factory=CheckCfg)
    props_eps: tuple = (1.0, 0.1, 0.01)
    props_probes: int = 201
    oracle_tol: float = 1e-2
    text: str = ""

    @property
    def config_hash(self):
        return hashlib.sha256(self.text.encode()).hexdigest()

    def build_grid(self):
        return self.grid.build(self.problem.horizon)

    def build_backend(self, grid):
        return self.backend.build(grid, self.seed, self.problem.d_W)


def _convex(sec):
    if sec is None:
        return Zero()
    kind = sec.get("kind", "zero")
    if kind == "zero":
        return Zero()
    if kind == "indicator":
        return IndicatorInterval(_float(sec.get("lo", "-inf")), _float(sec.get("hi", "inf")))
    if kind == "quadratic":
        return Quadratic(_float(sec.get("c", "1")))
    if kind == "abs":
        return AbsValue(_float(sec.get("lam", "1")))
    raise ConfigError(f"unknown convex kind {kind!r}")


def _driver(sec):
    if sec is None:
        return DRIVERS["zero"]()
    kind = sec.get("kind", "zero")
    if kind not in DRIVERS:
        raise ConfigError(f"unknown driver kind {kind!r}")
    cls = DRIVERS[kind]
    if kind == "linear":
        return cls(_float(sec.get("lam", "0")))
    if kind == "constant":
        return cls(_float(sec.get("c", "0")))
    if kind == "affine_z":
        beta = _floats(sec.get("beta", "0"))
        return cls(_float(sec.get("lam", "0")), beta[0] if len(beta) == 1 else tuple(beta))
    if kind == "table":
        return cls(tuple(_floats(sec["xs"])), tuple(_floats(sec["ys"])))
    return cls()


def _opt_float(sec, key):
    v = sec.get(key) if sec is not None else None
    if v is None:
        return None
    vals = _floats(v)
    return vals[0] if len(vals) == 1 else tuple(vals)


def parse_config(text: str, seed_override: int | None = None) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    sec = lambda name: cp[name] if cp.has_section(name) else None
    try:
        run = sec("run") or {}
        if seed_override is None and "seed" not in run:
            raise ConfigError("[run] seed is required")
        if not cp.has_section("problem"):
            raise ConfigError("[problem] section is required")
        seed = int(seed_override if seed_override is not None else run["seed"])
        command = run.get("command", "verify")
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}")
        checks = tuple(_words(run.get("checks", "")))
        bad = [c for c in checks if c not in CHECKS]
        if bad:
            raise ConfigError(f"unknown checks {bad}")

        g = sec("grid") or {}
        horizon = HorizonSpec(g.get("horizon", "deterministic"), _float(g.get("h_lo", "-inf")),
                              _float(g.get("h_hi", "inf")))
        grid = GridCfg(_float(g.get("T", "1")), int(g.get("N", "200")), g.get("a_kind", "zero"),
                       _float(g.get("a_rate", "0")), _float(g.get("a_lo", "-inf")),
                       _float(g.get("a_hi", "inf")))
        b = sec("backend") or {}
        backend = BackendCfg(b.get("kind", "lattice"), int(b.get("n_paths", "20000")),
                             int(b.get("degree", "3")), _float(b.get("x0", "0")))
        t = sec("terminal") or {}
        eta = TerminalSpec(t.get("kind", "state"), t.get("feature", "state"), _float(t.get("c", "0")),
                           _float(t.get("lo", "-inf")), _float(t.get("hi", "inf")),
                           _float(t.get("slope", "1")), _float(t.get("intercept", "0")))
        p = cp["problem"]
        ell = _opt_float(p, "ell")
        problem = Problem(F=_driver(sec("driver.F")), G=_driver(sec("driver.G")),
                          phi=_convex(sec("convex.phi")), psi=_convex(sec("convex.psi")),
                          eta=eta, horizon=horizon, d=int(p.get("d", "1")), d_W=int(p.get("d_W", "1")),
                          mu=_opt_float(p, "mu"), nu=_opt_float(p, "nu"),
                          mu_tilde=_opt_float(p, "mu_tilde"), nu_tilde=_opt_float(p, "nu_tilde"),
                          ell=ell, a=_float(p.get("a", "2")), p=_float(p.get("p", "2")),
                          name=p.get("name", "problem"))
        s = sec("solver") or {}
        solver = SolverConfig(s.get("scheme", "penalized_implicit"), _float(s.get("eps", "1e-2")),
                              _float(s.get("tol", "1e-12")), int(s.get("max_iter", "100")))
        sw = sec("sweep") or {}
        sweep_eps = tuple(_floats(sw.get("eps", "1e-1, 1e-2, 1e-3")))
        c = sec("checks") or {}
        check_cfg = CheckCfg(_float(c.get("apriori_C", "1")), _float(c.get("martingale_C", "4")),
                             _float(c.get("tol_residual", "1e-10")), _float(c.get("tol_subdiff", "1e-2")),
                             _float(c.get("tol_weak", "1e-2")), int(c.get("n_paths", "10000")),
                             int(c.get("n_random", "20")), int(c.get("n_affine", "5")),
                             tuple(int(x) for x in _floats(c.get("eps_indices", ""))))
        pr = sec("props") or {}
        return RunConfig(problem=problem, seed=seed, command=command, checks=checks, grid=grid,
                         backend=backend, solver=solver, sweep_eps=sweep_eps, check_cfg=check_cfg,
                         props_eps=tuple(_floats(pr.get("eps", "1, 0.1, 0.01"))),
                         props_probes=int(pr.get("n_probes", "201")),
                         oracle_tol=_float(run.get("oracle_tol", "1e-2")), text=text)
    except ConfigError:
        raise
    except (BSVIError, KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def load_config(path, seed_override=None) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, seed_override)
