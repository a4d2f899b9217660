"""Backward solvers for the penalized, projected and unconstrained schemes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clock import ClockGrid
from .convex import psi_domain
from .errors import InnerNonConvergence, InvalidSpec, StepTooLarge
from .paths import realize_horizon
from .problem import Problem, phi_combined
from .tables import ConvergenceTable

SCHEMES = ("penalized_explicit", "penalized_implicit", "projected", "unconstrained")


@dataclass(frozen=True)
class SolverConfig:
    scheme: str = "penalized_implicit"
    eps: float = 1e-2
    tol: float = 1e-12
    max_iter: int = 100

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidSpec(f"unknown scheme {self.scheme!r}")
        if self.scheme.startswith("penalized") and not self.eps > 0:
            raise InvalidSpec("penalized schemes need eps > 0")


@dataclass
class SolutionProcess:
    """Per-step unit arrays.  ``Y`` has N+1 entries of shape (n_i, d); ``Z``
    (n_i, d, d_W); ``U``, ``dK``, ``E``, ``Phi`` (n_i, d); clock increments
    (n_i,) are zero on steps at or after a unit's horizon."""

    scheme: str
    eps: float | None
    times: np.ndarray
    Y: list
    Z: list
    U: list
    dK: list
    E: list
    Phi: list
    dt: list
    dA: list
    dQ: list
    alpha: list
    active: list
    horizon: object
    backend: object = field(repr=False, default=None)
    grid: ClockGrid | None = field(repr=False, default=None)
    diagnostics: dict = field(default_factory=dict)

    @property
    def N(self):
        return len(self.Z)

    @property
    def Y0(self):
        return float(np.mean(self.Y[0][:, 0]))

    def dynamics_residual(self):
        r = 0.0
        for i in range(self.N):
            res = self.Y[i] + self.U[i] * self.dQ[i][:, None] - self.E[i] - self.Phi[i] * self.dQ[i][:, None]
            a = self.active[i]
            if a.any():
                r = max(r, float(np.abs(res[a]).max()))
        return r

    def to_table(self) -> ConvergenceTable:
        cols = ["step", "time", "Q"]
        for name in ("Y", "Z", "U"):
            cols += [f"{name}_mean", f"{name}_min", f"{name}_max"]
        table = ConvergenceTable(cols)
        Q = np.concatenate([[0.0], np.cumsum([float(np.mean(q)) for q in self.dQ])])
        for i in range(self.N + 1):
            row = [i, float(self.times[i]), float(Q[i])]
            for arr in (self.Y, self.Z, self.U):
                if i < len(arr):
                    v = arr[i]
                    row += [float(v.mean()), float(v.min()), float(v.max())]
                else:
                    row += [0.0, 0.0, 0.0]
            table.add(*row)
        return table


# ---------------------------------------------------------------------------
# implicit step


def _monotone_root(g, E, y0, tol, max_iter, step):
    """Root of the increasing map g near y0, elementwise.  Brackets by doubling,
    then Illinois regula falsi with a bisection safeguard."""
    scale = tol * (1.0 + np.abs(E))
    g0 = g(y0)
    done = np.abs(g0) <= scale
    if done.all():
        return y0, 0
    width = np.maximum(np.abs(g0), 1e-8)
    lo, hi = y0.copy(), y0.copy()
    glo, ghi = g0.copy(), g0.copy()
    pos, neg = g0 > 0, g0 < 0
    for _ in range(200):
        need_lo = pos & (glo > 0)
        need_hi = neg & (ghi < 0)
        if not (need_lo.any() or need_hi.any()):
            break
        lo = np.where(need_lo, y0 - width, lo)
        hi = np.where(need_hi, y0 + width, hi)
        glo = np.where(need_lo, g(lo), glo)
        ghi = np.where(need_hi, g(hi), ghi)
        width = width * 2.0
    else:
        raise InnerNonConvergence(step, "could not bracket the implicit step")
    # bracket sides: lo has g <= 0, hi has g >= 0
    hi = np.where(neg, hi, y0)
    ghi = np.where(neg, ghi, g0)
    lo = np.where(pos, lo, y0)
    glo = np.where(pos, glo, g0)
    x = y0.copy()
    side = np.zeros(y0.shape, int)
    for it in range(1, max_iter + 1):
        denom = ghi - glo
        with np.errstate(invalid="ignore", divide="ignore"):
            xs = np.where(denom > 0, (lo * ghi - hi * glo) / np.where(denom > 0, denom, 1.0), 0.5 * (lo + hi))
        bad = ~((xs > lo) & (xs < hi)) | (it % 8 == 0)
        xs = np.where(bad, 0.5 * (lo + hi), xs)
        x = np.where(done, x, xs)
        gx = g(x)
        newly = (np.abs(gx) <= scale) | (hi - lo <= tol * (1.0 + np.abs(x)))
        up = (gx > 0) & ~done
        dn = (gx < 0) & ~done
        hi = np.where(up, x, hi)
        lo = np.where(dn, x, lo)
        ghi = np.where(up, gx, np.where(dn & (side == -1), ghi * 0.5, ghi))
        glo = np.where(dn, gx, np.where(up & (side == 1), glo * 0.5, glo))
        side = np.where(up, 1, np.where(dn, -1, side))
        done = done | newly
        if done.all():
            return x, it
    raise InnerNonConvergence(step)


def _box(problem: Problem, alpha):
    """Per-unit bounds (n, d) of the domain of alpha*phi + (1-alpha)*psi."""
    d = problem.d
    lo = np.empty((len(alpha), d))
    hi = np.empty((len(alpha), d))
    for val in np.unique(alpha):
        m = alpha == val
        l, h = psi_domain(problem.phi, problem.psi, float(val), d)
        lo[m], hi[m] = l, h
    return lo, hi


# ---------------------------------------------------------------------------


def _terminal(problem, grid, backend, hz):
    """Stop values per step for inactive units (list, None when all active)."""
    from .paths import eta_at_horizon

    N = grid.N
    if backend.kind == "lattice":
        Y_N = problem.eta_values(backend.states(N), grid.times[N])
        return Y_N, (lambda i: problem.eta_values(backend.states(i), grid.times[i]))
    stop = eta_at_horizon(backend, hz, problem.eta_values, grid)
    return stop, (lambda i: stop)


def solve(problem: Problem, grid: ClockGrid, backend, cfg: SolverConfig | None = None) -> SolutionProcess:
    cfg = cfg or SolverConfig()
    N = grid.N
    hz = realize_horizon(backend, grid, problem.horizon)
    Y_N, stop_value = _terminal(problem, grid, backend, hz)
    mu = np.broadcast_to(np.asarray(problem.mu, float), (N,))
    nu = np.broadcast_to(np.asarray(problem.nu, float), (N,))
    penal = cfg.scheme.startswith("penalized")
    if cfg.scheme == "projected" and not (problem.phi.is_indicator_type and problem.psi.is_indicator_type):
        raise InvalidSpec("the projected scheme needs indicator-type phi and psi")

    Y = [None] * (N + 1)
    Y[N] = Y_N
    out = {k: [None] * N for k in ("Z", "U", "dK", "E", "Phi", "dt", "dA", "dQ", "alpha", "active")}
    max_grad = np.zeros(N)
    iters = 0
    for i in range(N - 1, -1, -1):
        act = hz.active[i]
        x = backend.states(i)
        dt, dA, dQ, alpha = grid.increments(i, x)
        on = act.astype(float)
        dt, dA, dQ = dt * on, dA * on, dQ * on
        t = grid.times[i]
        E = backend.cond_expect(i, Y[i + 1], act)
        Z = backend.z_projection(i, Y[i + 1], act)
        Z = np.where(act[:, None, None], Z, 0.0)
        dq = dQ[:, None]
        if penal:
            mu_phi = np.max(np.maximum(alpha * mu[i] + (1 - alpha) * nu[i], 0.0) * dQ)
            if cfg.scheme == "penalized_implicit" and mu_phi >= 1:
                raise StepTooLarge(f"step {i}: mu+ dQ = {mu_phi:g} >= 1")
        if cfg.scheme == "penalized_explicit":
            Phi = phi_combined(problem, grid, i, act, E, Z, alpha=alpha)
            U = problem.psi_grad(alpha, act, E, cfg.eps)
            Yi = E + (Phi - U) * dq
        elif cfg.scheme == "penalized_implicit":
            def g(y):
                return (y + dq * problem.psi_grad(alpha, act, y, cfg.eps)
                        - dq * phi_combined(problem, grid, i, act, y, Z, alpha=alpha) - E)
            Yi, it = _monotone_root(g, E, E.copy(), cfg.tol, cfg.max_iter, i)
            iters = max(iters, it)
            Phi = phi_combined(problem, grid, i, act, Yi, Z, alpha=alpha)
            U = problem.psi_grad(alpha, act, Yi, cfg.eps)
        elif cfg.scheme == "projected":
            Phi = phi_combined(problem, grid, i, act, E, Z, alpha=alpha)
            pre = E + Phi * dq
            lo, hi = _box(problem, alpha)
            Yi = np.clip(pre, lo, hi)
            dK = pre - Yi
            U = np.where(dq > 0, dK / np.where(dq > 0, dq, 1.0), 0.0)
        else:
            Phi = phi_combined(problem, grid, i, act, E, Z, alpha=alpha)
            U = np.zeros_like(E)
            Yi = E + Phi * dq
        if not act.all():
            sv = stop_value(i)
            Yi = np.where(act[:, None], Yi, sv)
            U = np.where(act[:, None], U, 0.0)
        Y[i] = Yi
        out["Z"][i] = Z
        out["U"][i] = U
        out["dK"][i] = U * dq if cfg.scheme != "projected" else np.where(act[:, None], dK, 0.0)
        out["E"][i] = E
        out["Phi"][i] = Phi
        out["dt"][i], out["dA"][i], out["dQ"][i] = dt, dA, dQ
        out["alpha"][i] = np.asarray(alpha, float)
        out["active"][i] = act
        max_grad[i] = float(np.abs(U).max()) if U.size else 0.0
    diag = {"max_abs_U": max_grad, "inner_iterations": iters,
            "horizon_fraction_active": float(np.mean([a.mean() for a in hz.active]))}
    return SolutionProcess(scheme=cfg.scheme, eps=cfg.eps if penal else None, times=grid.times,
                           Y=Y, horizon=hz, backend=backend, grid=grid, diagnostics=diag, **out)


# ---------------------------------------------------------------------------


def sup_distance(a: SolutionProcess, b: SolutionProcess):
    """max over steps and units of |Y^a - Y^b| (same backend required)."""
    return max(float(np.abs(ya - yb).max()) for ya, yb in zip(a.Y, b.Y))


def penalization_energy(solution: SolutionProcess, problem: Problem, grid: ClockGrid, n_paths=20000,
                        seed=0):
    """Weighted energies E sum e^{2 Vt} |grad phi_eps(Y)|^2 dt and
    E sum e^{2 Vt} |grad psi_eps(Y)|^2 dA, plus per-step eps * max |grad phi_eps(Y_i)|.

    Exact node weighting on a lattice with deterministic clock and horizon,
    Monte Carlo over paths otherwise.
    """
    from .views import exact_lattice_route, lattice_node_weights, path_view

    eps = solution.eps
    if eps is None:
        raise InvalidSpec("penalization energy needs a penalized solution")
    N = solution.N
    resid = np.array([eps * float(np.abs(problem.phi.gradient(solution.Y[i], eps)).max())
                      for i in range(N)])
    if exact_lattice_route(solution, problem):
        _, Vt = problem.weights(grid)
        w = lattice_node_weights(solution)
        e_dt = e_dA = 0.0
        for i in range(N):
            gp = problem.phi.gradient(solution.Y[i], eps)
            gs = problem.psi.gradient(solution.Y[i], eps)
            wt = np.exp(2 * Vt[i]) * w[i]
            e_dt += float((wt * (gp * gp).sum(-1) * solution.dt[i]).sum())
            e_dA += float((wt * (gs * gs).sum(-1) * solution.dA[i]).sum())
        return e_dt, e_dA, resid
    v = path_view(solution, n_paths=n_paths, seed=seed)
    _, Vt = problem.weights(grid, dt=v.dt, dA=v.dA)
    Yl = v.Y[:, :-1, :]
    gp = problem.phi.gradient(Yl, eps)
    gs = problem.psi.gradient(Yl, eps)
    w = np.exp(2 * Vt[:, :-1])
    e_dt = float(np.mean((w * (gp * gp).sum(-1) * v.dt).sum(-1)))
    e_dA = float(np.mean((w * (gs * gs).sum(-1) * v.dA).sum(-1)))
    return e_dt, e_dA, resid


def epsilon_sweep(problem: Problem, grid: ClockGrid, backend, eps_list, reference=None,
                  scheme: str = "penalized_implicit", return_solutions: bool = False):
    """Distances of Y^eps to a reference and between consecutive eps, plus
    penalization energies, one row per eps.  The reference defaults to the
    projected-scheme solution when phi and psi are indicators."""
    eps_list = list(eps_list)
    if any(b > a for a, b in zip(eps_list, eps_list[1:])):
        raise InvalidSpec("eps_list must be decreasing")
    if reference is None and problem.phi.is_indicator_type and problem.psi.is_indicator_type:
        reference = solve(problem, grid, backend, SolverConfig("projected"))
    sols = [solve(problem, grid, backend, SolverConfig(scheme, eps=e)) for e in eps_list]
    table = ConvergenceTable(["epsilon", "sup_dist_reference", "cauchy_next", "energy_dt",
                              "energy_dA", "eps_max_grad_phi"])
    for k, (e, s) in enumerate(zip(eps_list, sols)):
        dref = sup_distance(s, reference) if reference is not None else np.nan
        dnext = sup_distance(s, sols[k + 1]) if k + 1 < len(sols) else np.nan
        e_dt, e_dA, res = penalization_energy(s, problem, grid)
        table.add(e, dref, dnext, e_dt, e_dA, float(res.max()) if res.size else 0.0)
    if return_solutions:
        return table, sols, reference
    return table
