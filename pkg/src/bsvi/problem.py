"""BSVI instances: drivers, terminal data, structural constants, and numerical
probes of the standing assumptions (monotonicity, compatibility, moments).

Drivers act coordinatewise on states of shape (n, d); ``z`` has shape
(n, d, d_W).  Every library driver carries its true monotonicity constant
``mu`` and z-Lipschitz constant ``ell``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clock import ClockGrid, HorizonSpec, build_grid
from .convex import ConvexFn, Zero as ZeroFn, combined_psi
from .errors import InvalidSpec, NonFinite, ValidationFailure

PROBE_TOL = 1e-8


def _y(y):
    y = np.asarray(y, dtype=float)
    return y[:, None] if y.ndim == 1 else y


class Driver:
    mu = 0.0
    ell = 0.0

    def __call__(self, t, y, z=None):
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroDriver(Driver):
    def __call__(self, t, y, z=None):
        return np.zeros_like(_y(y))


@dataclass(frozen=True)
class Linear(Driver):
    lam: float

    @property
    def mu(self):
        return self.lam

    def __call__(self, t, y, z=None):
        return self.lam * _y(y)


@dataclass(frozen=True)
class Constant(Driver):
    c: float

    def __call__(self, t, y, z=None):
        return np.full_like(_y(y), self.c)


@dataclass(frozen=True)
class AffineZ(Driver):
    """lam * y + beta . z, with beta a scalar or a d_W-vector."""

    lam: float
    beta: object = 0.0

    @property
    def mu(self):
        return self.lam

    @property
    def ell(self):
        return float(np.linalg.norm(np.atleast_1d(self.beta)))

    def __call__(self, t, y, z=None):
        y = _y(y)
        out = self.lam * y
        if z is not None:
            b = np.atleast_1d(np.asarray(self.beta, dtype=float))
            z = np.asarray(z, dtype=float)
            out = out + (z * b).sum(axis=-1) if b.size == z.shape[-1] else out + b[0] * z.sum(-1)
        return out


@dataclass(frozen=True)
class Cubic(Driver):
    """-y^3: decreasing, so monotone with mu = 0."""

    def __call__(self, t, y, z=None):
        y = _y(y)
        return -(y ** 3)


@dataclass(frozen=True)
class Table(Driver):
    """Piecewise-linear in y through (xs, ys), flat outside the table."""

    xs: tuple
    ys: tuple

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        if xs.ndim != 1 or len(xs) < 2 or np.any(np.diff(xs) <= 0) or len(self.ys) != len(xs):
            raise InvalidSpec("table driver needs increasing xs and matching ys")

    @property
    def mu(self):
        s = np.diff(np.asarray(self.ys, float)) / np.diff(np.asarray(self.xs, float))
        return float(max(s.max(), 0.0))

    def __call__(self, t, y, z=None):
        y = _y(y)
        return np.interp(y, self.xs, self.ys)


DRIVERS = {"zero": ZeroDriver, "linear": Linear, "constant": Constant,
           "affine_z": AffineZ, "cubic": Cubic, "table": Table}


# ---------------------------------------------------------------------------
# terminal data


@dataclass(frozen=True)
class TerminalSpec:
    """eta as a function of a path feature.

    kind: constant (c), state (x), clip (clip(x, lo, hi)), square (x^2),
    affine (slope * x + intercept).  feature: state, running_max, stop_time.
    """

    kind: str = "state"
    feature: str = "state"
    c: float = 0.0
    lo: float = -np.inf
    hi: float = np.inf
    slope: float = 1.0
    intercept: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "state", "clip", "square", "affine"):
            raise InvalidSpec(f"unknown terminal kind {self.kind!r}")
        if self.feature not in ("state", "running_max", "stop_time"):
            raise InvalidSpec(f"unknown terminal feature {self.feature!r}")

    def scalar(self, states, t, running_max=None):
        states = np.asarray(states, dtype=float)
        x = states[:, 0] if states.ndim > 1 else states
        if self.feature == "running_max":
            if running_max is None:
                raise InvalidSpec("running_max terminal needs path data")
            x = np.asarray(running_max, dtype=float)
        elif self.feature == "stop_time":
            x = np.broadcast_to(np.asarray(t, dtype=float), x.shape)
        if self.kind == "constant":
            return np.full(x.shape, self.c)
        if self.kind == "state":
            return x.astype(float)
        if self.kind == "clip":
            return np.clip(x, self.lo, self.hi)
        if self.kind == "square":
            return x * x
        return self.slope * x + self.intercept


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Problem:
    F: Driver = field(default_factory=ZeroDriver)
    G: Driver = field(default_factory=ZeroDriver)
    phi: ConvexFn = field(default_factory=ZeroFn)
    psi: ConvexFn = field(default_factory=ZeroFn)
    eta: TerminalSpec = field(default_factory=TerminalSpec)
    horizon: HorizonSpec = field(default_factory=HorizonSpec)
    d: int = 1
    d_W: int = 1
    mu: object = None
    nu: object = None
    mu_tilde: object = None
    nu_tilde: object = None
    ell: float | None = None
    a: float = 2.0
    p: float = 2.0
    name: str = "problem"

    def __post_init__(self):
        if self.mu is None:
            object.__setattr__(self, "mu", float(self.F.mu))
        if self.nu is None:
            object.__setattr__(self, "nu", float(self.G.mu))
        if self.ell is None:
            object.__setattr__(self, "ell", float(self.F.ell))
        mu = np.asarray(self.mu, dtype=float)
        nu = np.asarray(self.nu, dtype=float)
        if self.mu_tilde is None:
            object.__setattr__(self, "mu_tilde", np.maximum(mu, 0.5 * mu))
        if self.nu_tilde is None:
            object.__setattr__(self, "nu_tilde", np.maximum(nu, 0.5 * nu))

    def eta_values(self, states, t, running_max=None):
        """Terminal values broadcast to (n, d)."""
        v = self.eta.scalar(states, t, running_max)
        return np.repeat(v[:, None], self.d, axis=1)

    def psi_grad(self, alpha, on, y, eps):
        return combined_psi(self.phi, self.psi, alpha, on, y, eps)[1]

    def weights(self, grid: ClockGrid, dt=None, dA=None, active=None):
        from .clock import v_process
        return v_process(grid, self.mu, self.nu, self.ell, self.a, self.mu_tilde, self.nu_tilde,
                         dt=dt, dA=dA, active=active)


def phi_combined(problem: Problem, grid: ClockGrid | None, i, on_horizon, y, z=None, alpha=None,
                 t=None):
    """1_{on} [alpha F(t, y, z) + (1 - alpha) G(t, y)] for states y (n, d).

    ``alpha`` defaults to the grid density on step i; it may be an array over
    units for path-dependent clocks.
    """
    y = _y(y)
    if alpha is None:
        alpha = grid.alpha[i]
    if t is None:
        t = grid.times[i]
    alpha = np.asarray(alpha, dtype=float)
    a = alpha[:, None] if alpha.ndim == 1 else alpha
    out = np.zeros_like(y)
    wF = np.broadcast_to(a, y.shape)
    if np.any(wF != 0):
        out = out + wF * problem.F(t, y, z)
    if np.any(wF != 1):
        out = out + (1.0 - wF) * problem.G(t, y)
    on = np.asarray(on_horizon, dtype=bool)
    out = np.where(on[:, None] if on.ndim == 1 else on, out, 0.0)
    if not np.all(np.isfinite(out)):
        raise NonFinite(f"driver returned a non-finite value on step {i}")
    return out


# ---------------------------------------------------------------------------
# probes


@dataclass
class ProbeReport:
    estimates: dict
    declared: dict
    violations: dict

    @property
    def passed(self):
        return all(v <= 0 for v in self.violations.values())

    @property
    def max_violation(self):
        return max(self.violations.values()) if self.violations else 0.0


def _pairs(rng, n, d, d_W, scale):
    y1 = rng.uniform(-scale, scale, (n, d))
    y2 = rng.uniform(-scale, scale, (n, d))
    z1 = rng.normal(size=(n, d, d_W))
    z2 = rng.normal(size=(n, d, d_W))
    t = rng.uniform(0.0, 1.0)
    return y1, y2, z1, z2, t


def _mono(dy, df):
    den = (dy * dy).sum(-1)
    ok = den > 0
    return float(((dy * df).sum(-1)[ok] / den[ok]).max()) if ok.any() else -np.inf


def _lip(dz, df):
    den = np.sqrt((dz * dz).sum(axis=(-2, -1)))
    ok = den > 0
    return float((np.sqrt((df * df).sum(-1))[ok] / den[ok]).max()) if ok.any() else 0.0


def probe_monotonicity(problem: Problem, n_probes: int = 1000, seed: int = 0, scale: float = 3.0,
                       alphas=(0.0, 0.5, 1.0)) -> ProbeReport:
    """Empirical mu, nu, ell of the drivers and of the combined driver.

    A declared constant is violated when the estimate exceeds it by more than
    PROBE_TOL (relative).
    """
    if n_probes < 1:
        raise InvalidSpec("n_probes >= 1 required")
    rng = np.random.default_rng(seed)
    d, d_W = problem.d, problem.d_W
    y1, y2, z1, z2, t = _pairs(rng, n_probes, d, d_W, scale)
    F, G = problem.F, problem.G
    mu_hat = _mono(y2 - y1, F(t, y2, z1) - F(t, y1, z1))
    nu_hat = _mono(y2 - y1, G(t, y2) - G(t, y1))
    ell_hat = _lip(z2 - z1, F(t, y1, z2) - F(t, y1, z1))
    mu = float(np.max(problem.mu))
    nu = float(np.max(problem.nu))
    est = {"mu": mu_hat, "nu": nu_hat, "ell": ell_hat}
    dec = {"mu": mu, "nu": nu, "ell": float(problem.ell)}
    for al in alphas:
        on = np.ones(n_probes, bool)
        al_arr = np.full(n_probes, al)
        p1 = phi_combined(problem, None, 0, on, y1, z1, alpha=al_arr, t=t)
        p2 = phi_combined(problem, None, 0, on, y2, z1, alpha=al_arr, t=t)
        p3 = phi_combined(problem, None, 0, on, y1, z2, alpha=al_arr, t=t)
        est[f"Phi_mu@{al:g}"] = _mono(y2 - y1, p2 - p1)
        est[f"Phi_ell@{al:g}"] = _lip(z2 - z1, p3 - p1)
        dec[f"Phi_mu@{al:g}"] = al * mu + (1 - al) * nu
        dec[f"Phi_ell@{al:g}"] = al * float(problem.ell)
    viol = {k: est[k] - dec[k] - PROBE_TOL * max(1.0, abs(dec[k])) for k in est}
    return ProbeReport(estimates=est, declared=dec, violations=viol)


def probe_compatibility(problem: Problem, eps_list, n_probes: int = 1000, seed: int = 0,
                        points=None, scale: float = 3.0) -> ProbeReport:
    """Max violation of the three phi/psi/F/G compatibility inequalities.

    (i)   <grad phi_e, grad psi_e> >= 0
    (ii)  <grad phi_e, G + nu^- y> <= |grad psi_e| |G + nu^- y|
    (iii) <grad psi_e, F + mu^- y> <= |grad phi_e| |F + mu^- y|
    """
    rng = np.random.default_rng(seed)
    d, d_W = problem.d, problem.d_W
    if points is None:
        y = rng.uniform(-scale, scale, (n_probes, d))
    else:
        y = _y(np.asarray(points, dtype=float))
    n = y.shape[0]
    z = rng.normal(size=(n, d, d_W))
    t = 0.5
    mu_m = -min(float(np.min(problem.mu)), 0.0)
    nu_m = -min(float(np.min(problem.nu)), 0.0)
    g = problem.G(t, y) + nu_m * y
    f = problem.F(t, y, z) + mu_m * y
    worst = {"i": 0.0, "ii": 0.0, "iii": 0.0}
    for eps in eps_list:
        gp = problem.phi.gradient(y, eps)
        gs = problem.psi.gradient(y, eps)
        nrm = lambda v: np.sqrt((v * v).sum(-1))
        v1 = -(gp * gs).sum(-1)
        v2 = (gp * g).sum(-1) - nrm(gs) * nrm(g)
        v3 = (gs * f).sum(-1) - nrm(gp) * nrm(f)
        for k, v in zip(("i", "ii", "iii"), (v1, v2, v3)):
            worst[k] = max(worst[k], float(v.max()))
    return ProbeReport(estimates=dict(worst), declared={k: 0.0 for k in worst},
                       violations={k: v - PROBE_TOL for k, v in worst.items()})


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    items: dict
    moments: dict

    @property
    def failures(self):
        return [msg for ok, msg in self.items.values() if not ok]

    @property
    def passed(self):
        return not self.failures


def _eta_samples(problem: Problem, grid: ClockGrid, n, seed):
    from .paths import PathBatch, RegressionBackend, eta_at_horizon, realize_horizon

    batch = PathBatch.generate(grid, n, seed, d_W=problem.d_W)
    be = RegressionBackend(batch, degree=0)
    hz = realize_horizon(be, grid, problem.horizon)
    return eta_at_horizon(be, hz, problem.eta_values, grid)


def validate(problem: Problem, grid: ClockGrid | None = None, backend=None, n_samples: int = 2000,
             seed: int = 0, raise_on_failure: bool = True) -> ValidationReport:
    """Structural checks plus sampled moment estimates; raises ValidationFailure
    listing every failed item unless ``raise_on_failure`` is False."""
    items = {}

    def item(key, ok, msg):
        items[key] = (bool(ok), msg)

    item("p", problem.p >= 2, f"p ≥ 2 required (got p = {problem.p:g})")
    item("a", problem.a > 1, f"a > 1 required (got a = {problem.a:g})")
    mu = np.asarray(problem.mu, float)
    nu = np.asarray(problem.nu, float)
    item("mu_tilde", np.all(np.asarray(problem.mu_tilde) >= np.maximum(mu, mu / 2)),
         "μ̃ ≥ max{μ, μ/2} required")
    item("nu_tilde", np.all(np.asarray(problem.nu_tilde) >= np.maximum(nu, nu / 2)),
         "ν̃ ≥ max{ν, ν/2} required")
    item("ell", problem.ell is not None and problem.ell >= 0, "ℓ ≥ 0 required")
    z0 = np.zeros((1, problem.d))
    item("phi0", problem.phi.value(z0)[0] == 0, "φ(0) = 0 required")
    item("psi0", problem.psi.value(z0)[0] == 0, "ψ(0) = 0 required")

    moments = {}
    g = grid or build_grid(1.0, 16)
    if g.N >= 1:
        mu_plus = max(float(np.max(mu)), float(np.max(nu)), 0.0)
        if not g.path_dependent:
            cst = np.max(np.maximum(g.alpha * mu + (1 - g.alpha) * nu, 0.0) * g.dQ)
        else:
            cst = mu_plus * float(np.max(g.dt)) * (1 + float(getattr(g.a_spec, "rate", 0.0)))
        item("grid_guard", cst < 1, "μ⁺ΔQ < 1 required on every step (time-grid guard)")
    if backend is not None and backend.kind == "lattice" and problem.eta.feature != "running_max":
        eta = problem.eta_values(backend.states(g.N), g.T)
    else:
        eta = _eta_samples(problem, g, n_samples, seed)
    phv = problem.phi.value(eta)
    psv = problem.psi.value(eta)
    item("eta_phi", np.all(np.isfinite(phv)), "φ(η) = +∞ for some terminal value")
    item("eta_psi", np.all(np.isfinite(psv)), "ψ(η) = +∞ for some terminal value")
    if grid is not None and not g.path_dependent:
        _, Vt = problem.weights(g)
        sup_v = float(Vt.max())
        p = problem.p
        m1 = float(np.mean(np.exp(2 * sup_v) * (phv + psv)))
        m2 = float(np.mean(np.exp(p * sup_v) * np.abs(eta).sum(-1) ** p)) + float(g.Q[-1]) ** p
        moments = {"exp_weighted_psi_eta": m1, "exp_weighted_eta_p": m2}
        item("moments", np.isfinite(m1) and np.isfinite(m2), "terminal moments must be finite")
    rep = ValidationReport(items=items, moments=moments)
    if raise_on_failure and not rep.passed:
        raise ValidationFailure(rep.failures)
    return rep
