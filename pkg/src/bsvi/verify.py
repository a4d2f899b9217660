"""Structural checks on computed solutions: dynamics residual, a-priori
estimate, subdifferential inclusion, weak variational inequality, the
mollifier limit, and the martingale-representation moment bound."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .clock import ClockGrid, mollifier_convergence_report, mollify
from .convex import _weighted, psi_domain, psi_value
from .errors import InvalidTestFunction
from .paths import martingale_representation
from .problem import Problem, phi_combined
from .views import exact_lattice_route, mean_se, path_view


@dataclass
class CheckReport:
    name: str
    max_violation: float
    tolerance: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return bool(self.max_violation <= self.tolerance)

    def to_dict(self):
        return {"name": self.name, "max_violation": _jsonable(self.max_violation),
                "tolerance": _jsonable(self.tolerance), "passed": self.passed,
                "details": {k: _jsonable(v) for k, v in self.details.items()}}


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else repr(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


# ---------------------------------------------------------------------------


def check_dynamics_residual(solution, tol: float = 1e-10) -> CheckReport:
    r = solution.dynamics_residual()
    z_after = 0.0
    for i in range(solution.N):
        off = ~solution.active[i]
        if off.any():
            z_after = max(z_after, float(np.abs(solution.Z[i][off]).max()))
    return CheckReport("dynamics_residual", max(r, z_after), tol,
                       {"residual": r, "max_Z_after_horizon": z_after})


def _phi0_path(problem: Problem, grid: ClockGrid, view):
    """|Phi(t, 0, 0)| per path and step."""
    P, N = view.dt.shape
    out = np.zeros((P, N))
    y0 = np.zeros((P, problem.d))
    z0 = np.zeros((P, problem.d, problem.d_W))
    for i in range(N):
        ph = phi_combined(problem, grid, i, view.active[:, i], y0, z0, alpha=view.alpha[:, i])
        out[:, i] = np.sqrt((ph * ph).sum(-1))
    return out


def check_apriori(solution, problem: Problem, grid: ClockGrid, q: float = 2.0, C: float = 1.0,
                  n_paths: int = 20000, seed: int = 0) -> CheckReport:
    """e^{q Vt_0}|Y_0|^q + E(sum e^{2Vt}|Z|^2 dt)^{q/2}
    <= C E[e^{q sup Vt}|eta|^q + (sum e^{Vt}|Phi(.,0,0)| dQ)^q].

    Exact node weighting on lattices with deterministic clock and horizon
    when q = 2; Monte Carlo over paths with a 3-standard-error margin
    otherwise.  Reports C_emp = LHS / RHS.
    """
    if not 2 <= q <= problem.p:
        raise ValueError("need 2 <= q <= p")
    N = solution.N
    if q == 2 and exact_lattice_route(solution, problem):
        _, Vt = problem.weights(grid)
        w = solution.backend.node_weights()
        y0 = float((solution.Y[0] ** 2).sum())
        lhs = np.exp(2 * Vt[0]) * y0
        for i in range(N):
            z2 = (solution.Z[i] ** 2).sum(axis=(-2, -1))
            lhs += np.exp(2 * Vt[i]) * grid.dt[i] * float((w[i] * z2).sum())
        e2 = (solution.Y[N] ** 2).sum(-1)
        rhs_eta = np.exp(2 * Vt.max()) * float((w[N] * e2).sum())
        one = np.zeros((1, problem.d))
        zz = np.zeros((1, problem.d, problem.d_W))
        B = 0.0
        for i in range(N):
            ph = phi_combined(problem, grid, i, np.ones(1, bool), one, zz)
            B += np.exp(Vt[i]) * float(np.sqrt((ph ** 2).sum())) * grid.dQ[i]
        rhs = rhs_eta + B ** 2
        se = 0.0
        route = "exact_lattice"
    else:
        v = path_view(solution, n_paths=n_paths, seed=seed)
        _, Vt = problem.weights(grid, dt=v.dt, dA=v.dA)
        y0 = float(np.mean(np.sqrt((v.Y[:, 0, :] ** 2).sum(-1))) ** q)
        zs = (np.exp(2 * Vt[:, :-1]) * (v.Z ** 2).sum(axis=(-2, -1)) * v.dt).sum(-1) ** (q / 2)
        eta = np.sqrt((v.eta ** 2).sum(-1)) ** q
        B = (np.exp(Vt[:, :-1]) * _phi0_path(problem, grid, v) * v.dQ).sum(-1) ** q
        lhs_p = np.exp(q * Vt[:, 0]) * y0 + zs
        rhs_p = np.exp(q * Vt.max(-1)) * eta + B
        lhs, rhs = float(lhs_p.mean()), float(rhs_p.mean())
        se = float(mean_se(lhs_p - C * rhs_p)[1])
        route = "monte_carlo"
    c_emp = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf)
    viol = lhs - C * rhs
    # float rounding allowance for the exact route
    return CheckReport("apriori", float(viol), 3 * se + 1e-12 * max(abs(rhs), 1.0),
                       {"lhs": float(lhs), "rhs": float(rhs), "C": C, "C_emp": float(c_emp),
                        "q": q, "route": route, "se": se})


# ---------------------------------------------------------------------------
# test processes


def _finite_box(lo, hi, width=4.0):
    lo = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi - width, -width / 2))
    hi2 = np.where(np.isfinite(hi), hi, lo + width)
    return lo, hi2


def common_box(problem: Problem, alphas):
    """Intersection over the alpha values present of the Psi-domain boxes."""
    lo = np.full(problem.d, -np.inf)
    hi = np.full(problem.d, np.inf)
    for a in np.unique(np.asarray(alphas)):
        l, h = psi_domain(problem.phi, problem.psi, float(a), problem.d)
        lo, hi = np.maximum(lo, l), np.minimum(hi, h)
    return lo, hi


def project_psi_domain(problem: Problem, alpha, y):
    """Clip y (P, N, d) into the Psi-domain box of each step's alpha."""
    out = np.array(y, dtype=float, copy=True)
    for a in np.unique(alpha):
        m = alpha == a
        lo, hi = psi_domain(problem.phi, problem.psi, float(a), problem.d)
        out[m] = np.clip(out[m], lo, hi)
    return out


@dataclass(frozen=True)
class SmoothProcess:
    """lo + (hi - lo) * sigmoid(a + b t + c x): a bounded adapted process
    with values strictly inside the box."""

    lo: np.ndarray
    hi: np.ndarray
    a: float
    b: float
    c: float

    def values(self, view, problem):
        s = 1.0 / (1.0 + np.exp(-(self.a + self.b * view.times[None, :] + self.c * view.X)))
        return self.lo + (self.hi - self.lo) * s[..., None]


@dataclass(frozen=True)
class AffineSemimartingale:
    """M = c + b (t ^ tau) + sigma (W ^ tau), with drift N = -b alpha, R = sigma."""

    c: float
    b: float
    sigma: float

    def parts(self, view, problem):
        P, N = view.dt.shape
        d, d_W = problem.d, problem.d_W
        dM = self.b * view.dt + self.sigma * view.dW[:, :, 0]
        M = self.c + np.concatenate([np.zeros((P, 1)), np.cumsum(dM, axis=1)], axis=1)
        M = np.repeat(M[..., None], d, axis=-1)
        Nd = np.where(view.dQ > 0, -self.b * view.alpha, 0.0)
        Nd = np.repeat(Nd[..., None], d, axis=-1)
        R = np.zeros((P, N, d, d_W))
        R[..., 0] = np.where(view.active, self.sigma, 0.0)[..., None]
        return M, Nd, R


@dataclass(frozen=True)
class MollifiedSolution:
    """Forward exponential average of Y along the path clock; N = (M - Y)/Q_eps,
    R = 0.  Q_eps is the clock at node ``eps_index``, taken as the largest
    value over the grid and the sampled paths so that it dominates every
    path increment on state-dependent clocks."""

    eps_index: int

    def parts(self, view, problem, grid):
        q_path = float(view.dQ[:, :self.eps_index].sum(axis=1).max())
        q = max(float(grid.Q[self.eps_index]), q_path)
        M = mollify(view.Y, grid, self.eps_index, dQ=view.dQ, node_axis=1, q_eps=q)
        Nd = (M[:, :-1] - view.Y[:, :-1]) / q
        R = np.zeros(view.Z.shape)
        return M, Nd, R


@dataclass(frozen=True)
class SolutionSemimartingale:
    """M = Y itself: N = Phi - U, R = Z (the equality case)."""

    def parts(self, view, problem):
        return view.Y.copy(), view.Phi - view.U, view.Z.copy()


def random_test_processes(problem: Problem, alphas, n: int = 20, seed: int = 0):
    rng = np.random.default_rng(seed)
    lo, hi = _finite_box(*common_box(problem, alphas))
    return [SmoothProcess(lo, hi, *rng.normal(size=3)) for _ in range(n)]


def affine_library(problem: Problem, alphas, n: int = 5, seed: int = 0):
    """Affine test semimartingales centred well inside the domain box."""
    rng = np.random.default_rng(seed)
    lo, hi = common_box(problem, alphas)
    lo, hi = float(lo[0]), float(hi[0])
    if np.isfinite(lo) and np.isfinite(hi):
        centre, r = 0.5 * (lo + hi), min(2.0, 0.25 * (hi - lo))
    elif np.isfinite(lo):
        centre, r = lo + 2.0, 1.0
    elif np.isfinite(hi):
        centre, r = hi - 2.0, 1.0
    else:
        centre, r = 0.0, 1.0
    return [AffineSemimartingale(centre + rng.uniform(-0.5, 0.5) * r, rng.uniform(-0.25, 0.25) * r,
                                 rng.uniform(0.0, 0.1) * r) for _ in range(n)]


def probe_nodes(N, n_points=10):
    return np.unique(np.round(np.linspace(0, N, n_points)).astype(int))


def _psi_steps(problem, view, y):
    """Psi(t_k, y_k) dQ_k with 0 * inf = 0 on frozen steps; (P, N)."""
    val = psi_value(problem.phi, problem.psi, view.alpha, y)
    return _weighted(view.dQ, val)


# ---------------------------------------------------------------------------


def check_subdiff_inclusion(solution, problem: Problem, grid: ClockGrid, test_functions=None,
                            n_random: int = 20, seed: int = 0, n_paths: int = 10000,
                            n_points: int = 10, tol: float = 1e-2,
                            psi_policy: str = "project") -> CheckReport:
    """sum <y_k - Y_k, dK_k> + sum Psi(Y_k) dQ_k - sum Psi(y_k) dQ_k <= tol
    pathwise, over all probe intervals and test processes.

    ``psi_policy='project'`` evaluates Psi(Y) at the projection of Y onto the
    closed domain, so penalized iterates slightly outside the domain are
    scored by their nearest admissible point; 'literal' uses Psi(Y) as is.
    """
    v = path_view(solution, n_paths=n_paths, seed=seed)
    if test_functions is None:
        test_functions = random_test_processes(problem, v.alpha, n_random, seed + 1)
    Yl = v.Y[:, :-1, :]
    Ypol = project_psi_domain(problem, v.alpha, Yl) if psi_policy == "project" else Yl
    psiY = _psi_steps(problem, v, Ypol)
    dK = v.U * v.dQ[..., None]
    nodes = probe_nodes(v.N, n_points)
    pairs = [(a, b) for a, b in itertools.combinations(nodes, 2)]
    worst, worst_mean, worst_se = -np.inf, -np.inf, 0.0
    per_test = []
    for tf in test_functions:
        yv = tf.values(v, problem) if hasattr(tf, "values") else np.asarray(tf(v), dtype=float)
        yl = yv[:, :-1, :]
        psi_y = _psi_steps(problem, v, yl)
        if not np.all(np.isfinite(psi_y)):
            raise InvalidTestFunction("test process leaves the domain of Psi")
        step = ((yl - Yl) * dK).sum(-1) + psiY - psi_y
        cs = np.concatenate([np.zeros((v.P, 1)), np.cumsum(step, axis=1)], axis=1)
        tmax = -np.inf
        for a, b in pairs:
            with np.errstate(invalid="ignore"):
                # inf - inf: an infinite Psi(Y) already breaks the inequality
                S = np.nan_to_num(cs[:, b] - cs[:, a], nan=np.inf, posinf=np.inf)
                m, se = mean_se(S)
            tmax = max(tmax, float(S.max()))
            if m > worst_mean:
                worst_mean, worst_se = float(m), float(se)
            worst = max(worst, float(S.max()))
        per_test.append(tmax)
    viol = max(worst, 0.0)
    return CheckReport("subdiff_inclusion", viol, tol,
                       {"max_pathwise": worst, "max_mean": worst_mean, "se": worst_se,
                        "per_test_max": per_test, "n_pairs": len(pairs), "n_paths": v.P,
                        "psi_policy": psi_policy})


def default_eps_indices(N):
    return sorted({max(1, N // 4), max(1, N // 16), max(1, N // 64)}, reverse=True)


def check_weak_variational(solution, problem: Problem, grid: ClockGrid, eps_indices=None,
                           n_affine: int = 5, extra=(), seed: int = 0, n_paths: int = 10000,
                           n_points: int = 10, tol: float = 1e-2,
                           psi_policy: str = "project") -> CheckReport:
    """Expectation form of the weak variational inequality for t < s on probe
    pairs: E[1/2|M_t - Y_t|^2 + 1/2 sum |R - Z|^2 dt + sum Psi(Y) dQ
    - 1/2|M_s - Y_s|^2 - sum Psi(M) dQ - sum <M - Y, N - Phi> dQ] <= tol,
    the stochastic integral having zero mean.  A probe fails when its mean
    minus three standard errors exceeds ``tol``.

    Test processes: forward mollifications of Y at ``eps_indices`` (whose
    Psi is evaluated under ``psi_policy``, like Y), ``n_affine`` affine
    semimartingales inside the domain (literal Psi), plus ``extra``.
    """
    v = path_view(solution, n_paths=n_paths, seed=seed)
    eps_indices = default_eps_indices(v.N) if eps_indices is None else list(eps_indices)
    tests = [MollifiedSolution(k) for k in eps_indices]
    tests += affine_library(problem, v.alpha, n_affine, seed + 2)
    tests += list(extra)
    Yl = v.Y[:, :-1, :]
    proj = (lambda y: project_psi_domain(problem, v.alpha, y)) if psi_policy == "project" else (lambda y: y)
    psiY = _psi_steps(problem, v, proj(Yl))
    nodes = probe_nodes(v.N, n_points)
    pairs = list(itertools.combinations(nodes, 2))
    worst, worst_mean, worst_se, worst_name = -np.inf, -np.inf, 0.0, ""
    rows = []
    for tf in tests:
        if isinstance(tf, MollifiedSolution):
            M, Nd, R = tf.parts(v, problem, grid)
            psiM = _psi_steps(problem, v, proj(M[:, :-1, :]))
        else:
            M, Nd, R = tf.parts(v, problem)
            mm = M[:, :-1, :] if not isinstance(tf, SolutionSemimartingale) else proj(M[:, :-1, :])
            psiM = _psi_steps(problem, v, mm)
        D = M - v.Y
        half = 0.5 * (D * D).sum(-1)
        zz = 0.5 * ((R - v.Z) ** 2).sum(axis=(-2, -1)) * v.dt
        cross = (D[:, :-1] * (Nd - v.Phi)).sum(-1) * v.dQ
        inf_M = ~np.isfinite(psiM)
        step = zz + psiY - np.where(inf_M, 0.0, psiM) - cross
        cs = np.concatenate([np.zeros((v.P, 1)), np.cumsum(step, axis=1)], axis=1)
        ci = np.concatenate([np.zeros((v.P, 1)), np.cumsum(inf_M, axis=1)], axis=1)
        name = type(tf).__name__
        for a, b in pairs:
            diff = half[:, a] + cs[:, b] - cs[:, a] - half[:, b]
            if np.any(ci[:, b] - ci[:, a] > 0):
                m, se = -np.inf, 0.0  # +inf on the right: the inequality holds
            else:
                m, se = mean_se(diff)
                m, se = float(m), float(se)
            score = m - 3 * se
            rows.append((name, int(a), int(b), m, se))
            if score > worst:
                worst, worst_mean, worst_se, worst_name = score, m, se, name
    return CheckReport("weak_variational", float(worst), tol,
                       {"max_mean": worst_mean, "se": worst_se, "worst_test": worst_name,
                        "n_tests": len(tests), "n_pairs": len(pairs), "eps_indices": eps_indices,
                        "n_paths": v.P, "psi_policy": psi_policy})


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MollifierSpec:
    name: str
    f: np.ndarray
    jump_times: tuple = ()


def mollifier_lemma_check(grid: ClockGrid, f_specs, eps_indices, sup_tol: float = 1e-2,
                          point_tol: float = 2e-2, probe_distance: float = 0.1,
                          nonvanishing: float = 0.25, direction: str = "forward") -> CheckReport:
    """Continuous specs: sup error strictly decreasing along eps_indices and
    final sup error <= sup_tol.  Jump specs: final errors at probe times at
    least ``probe_distance`` from every jump <= point_tol, and the sup error
    stays >= ``nonvanishing``."""
    tables = {}
    parts = []
    T = grid.T
    for spec in f_specs:
        if spec.jump_times:
            probes = [t for t in np.linspace(0, T, 21)
                      if min(abs(t - j) for j in spec.jump_times) >= probe_distance]
        else:
            probes = []
        tab = mollifier_convergence_report(spec.f, grid, eps_indices, probes, direction)
        tables[spec.name] = tab
        sup = tab.column("sup_error")
        if spec.jump_times:
            final = [tab.rows[-1][3 + j] for j in range(len(probes))]
            parts.append(max(final) - point_tol if final else -point_tol)
            parts.append(nonvanishing - min(sup))
        else:
            parts.append(max((b - a for a, b in zip(sup, sup[1:])), default=-np.inf))
            parts.append(sup[-1] - sup_tol)
    viol = max(parts) if parts else 0.0
    return CheckReport("mollifier_lemma", float(viol), 0.0,
                       {"tables": {k: t.to_csv() for k, t in tables.items()}})


def check_martingale_estimate(backend, grid: ClockGrid, eta, C: float = 4.0, n_paths: int = 20000,
                              seed: int = 0, recon_tol: float = 1e-12) -> CheckReport:
    """E sup_i |xi_i|^2 + E sum |zeta_i|^2 dt <= C E|eta|^2 (3 SE margin), and
    on a lattice the one-step reconstruction error <= recon_tol."""
    rep = martingale_representation(backend, grid, eta)
    N = grid.N
    if backend.kind == "lattice":
        k = backend.sample_paths(n_paths, seed)
        xi = np.stack([rep.xi[i][k[:, i]] for i in range(N + 1)], axis=1)
        zeta = np.stack([rep.zeta[i][k[:, i]] for i in range(N)], axis=1)
    else:
        xi = np.stack(rep.xi, axis=1)
        zeta = np.stack(rep.zeta, axis=1)
    xi2 = (xi.reshape(xi.shape[0], N + 1, -1) ** 2).sum(-1)
    z2 = (zeta.reshape(zeta.shape[0], N, -1) ** 2).sum(-1)
    lhs_p = xi2.max(axis=1) + (z2 * grid.dt).sum(-1)
    rhs_p = xi2[:, -1]
    m, se = mean_se(lhs_p - C * rhs_p)
    parts = [float(m) - 3 * float(se)]
    if backend.kind == "lattice":
        parts.append(rep.reconstruction_error - recon_tol)
    return CheckReport("martingale_estimate", max(parts), 0.0,
                       {"lhs": float(lhs_p.mean()), "rhs": float(rhs_p.mean()), "C": C,
                        "C_emp": float(lhs_p.mean() / rhs_p.mean()) if rhs_p.mean() > 0 else 0.0,
                        "se": float(se), "reconstruction_error": rep.reconstruction_error})


def default_mollifier_specs(grid: ClockGrid):
    """A continuous piecewise-linear input and a unit jump at t = 0.5."""
    t = grid.times
    cont = np.interp(t, [0.0, 0.3, 0.6, 1.0], [0.0, 1.0, -0.5, 0.2])
    jump = (t >= 0.5 * grid.T).astype(float)
    return [MollifierSpec("piecewise_linear", cont), MollifierSpec("jump", jump, (0.5 * grid.T,))]


def halving_indices(N, start=None, halvings=6):
    k = start or max(1, N // 8)
    out = [k]
    for _ in range(halvings):
        k = max(1, k // 2)
        out.append(k)
    return out
