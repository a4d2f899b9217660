"""Discretized mixed clock Q = t + A, Stieltjes sums, weights and the mollifier.

All Stieltjes integrals use the left-endpoint rule on the grid.  Step arrays
have length ``N`` (one entry per ``[t_i, t_{i+1})``), node arrays length
``N + 1``.  Leading axes (paths) broadcast throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IndexOutOfRange, InvalidSpec
from .tables import ConvergenceTable

INF = math.inf


# ---------------------------------------------------------------------------
# generators for the increasing process A


class ASpec:
    path_dependent = False

    def increments(self, times, dt=None):
        raise NotImplementedError


@dataclass(frozen=True)
class AZero(ASpec):
    def increments(self, times, dt=None):
        return np.zeros(len(times) - 1)


@dataclass(frozen=True)
class LinearRate(ASpec):
    """dA = rate * dt."""

    rate: float

    def increments(self, times, dt=None):
        if self.rate < 0:
            raise InvalidSpec("LinearRate needs rate >= 0")
        return self.rate * (np.diff(times) if dt is None else dt)


@dataclass(frozen=True)
class PiecewiseLinear(ASpec):
    """A interpolated linearly through ``(t, A)`` breakpoints, flat after the last."""

    breakpoints: tuple

    def increments(self, times, dt=None):
        bp = np.asarray(self.breakpoints, dtype=float).reshape(-1, 2)
        if bp[0, 0] != 0.0 or bp[0, 1] != 0.0:
            raise InvalidSpec("PiecewiseLinear must start at (0, 0)")
        a = np.interp(times, bp[:, 0], bp[:, 1])
        inc = np.diff(a)
        if np.any(inc < 0):
            raise InvalidSpec("PiecewiseLinear breakpoints give a decreasing A")
        return inc


@dataclass(frozen=True)
class LocalTimeProxy(ASpec):
    """dA = rate * dt while the (first) state coordinate lies in (lo, hi).

    A band approximation of local time: with band half-width h around a
    level, ``rate = 1 / (2h)`` mimics Brownian local time at that level.
    """

    rate: float
    lo: float
    hi: float
    path_dependent = True

    def __post_init__(self):
        if self.rate < 0 or not self.lo < self.hi:
            raise InvalidSpec("LocalTimeProxy needs rate >= 0 and lo < hi")

    def increments(self, times, dt=None):
        raise InvalidSpec("LocalTimeProxy increments depend on the state path")

    def state_increments(self, dt, x):
        x = np.asarray(x, dtype=float)
        inside = (x > self.lo) & (x < self.hi)
        return self.rate * dt * inside


@dataclass(frozen=True)
class HorizonSpec:
    """Deterministic horizon T, or first exit of the state from (lo, hi)."""

    kind: str = "deterministic"
    lo: float = -INF
    hi: float = INF

    def __post_init__(self):
        if self.kind not in ("deterministic", "exit"):
            raise InvalidSpec(f"unknown horizon kind {self.kind!r}")
        if not self.lo < self.hi:
            raise InvalidSpec("horizon band needs lo < hi")

    @property
    def deterministic(self):
        return self.kind == "deterministic" or (self.lo == -INF and self.hi == INF)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClockGrid:
    times: np.ndarray
    dt: np.ndarray
    dA: np.ndarray
    a_spec: ASpec = field(default_factory=AZero)
    horizon: HorizonSpec = field(default_factory=HorizonSpec)

    def __post_init__(self):
        dt = np.asarray(self.dt, dtype=float)
        dA = np.asarray(self.dA, dtype=float)
        if dt.shape != dA.shape or len(self.times) != len(dt) + 1:
            raise InvalidSpec("inconsistent grid array lengths")
        if np.any(dA < 0) or np.any(dt < 0):
            raise InvalidSpec("clock increments must be nonnegative")
        dQ = dt + dA
        if np.any(dQ <= 0) and not self.a_spec.path_dependent:
            raise InvalidSpec("dQ must be strictly positive on every step")
        object.__setattr__(self, "dt", dt)
        object.__setattr__(self, "dA", dA)
        object.__setattr__(self, "dQ", dQ)
        with np.errstate(invalid="ignore", divide="ignore"):
            object.__setattr__(self, "alpha", np.where(dQ > 0, dt / np.where(dQ > 0, dQ, 1.0), 1.0))
        object.__setattr__(self, "Q", np.concatenate([[0.0], np.cumsum(dQ)]))
        object.__setattr__(self, "A", np.concatenate([[0.0], np.cumsum(dA)]))

    @property
    def N(self):
        return len(self.dt)

    @property
    def T(self):
        return float(self.times[-1])

    @property
    def path_dependent(self):
        return self.a_spec.path_dependent

    @property
    def horizon_index(self):
        return self.N

    @property
    def uniform(self):
        return bool(np.all(self.dt == self.dt[0]))

    def increments(self, i, x=None):
        """(dt, dA, dQ, alpha) on step ``i``; arrays over units when ``x`` is given."""
        dt = self.dt[i]
        if self.path_dependent:
            if x is None:
                raise InvalidSpec("path-dependent clock needs the current states")
            xs = np.asarray(x, dtype=float)
            xs = xs[..., 0] if xs.ndim > 1 else xs
            dA = self.a_spec.state_increments(dt, xs)
            dt = np.full_like(dA, dt)
        elif x is not None:
            n = np.shape(x)[0]
            dt = np.full(n, dt)
            dA = np.full(n, self.dA[i])
        else:
            dA = self.dA[i]
        dQ = dt + dA
        alpha = np.where(dQ > 0, dt / np.where(dQ > 0, dQ, 1.0), 1.0)
        return dt, dA, dQ, alpha

    def path_increments(self, X):
        """(dt, dA, dQ, alpha) of shape (M, N) along state paths X (M, N+1[, d])."""
        X = np.asarray(X, dtype=float)
        xs = X[..., 0] if X.ndim > 2 else X
        M = xs.shape[0]
        dt = np.broadcast_to(self.dt, (M, self.N)).copy()
        if self.path_dependent:
            dA = self.a_spec.state_increments(dt, xs[:, :-1])
        else:
            dA = np.broadcast_to(self.dA, (M, self.N)).copy()
        dQ = dt + dA
        alpha = np.where(dQ > 0, dt / np.where(dQ > 0, dQ, 1.0), 1.0)
        return dt, dA, dQ, alpha


def build_grid(T: float, N: int, a_spec: ASpec | None = None,
               horizon: HorizonSpec | None = None) -> ClockGrid:
    if not T > 0 or int(N) != N or N < 1:
        raise InvalidSpec("need T > 0 and integer N >= 1")
    N = int(N)
    a_spec = a_spec or AZero()
    h = T / N
    times = np.arange(N + 1) * h
    times[-1] = T
    dt = np.full(N, h)
    dA = np.zeros(N) if a_spec.path_dependent else a_spec.increments(times, dt)
    return ClockGrid(times=times, dt=dt, dA=dA, a_spec=a_spec,
                     horizon=horizon or HorizonSpec())


# ---------------------------------------------------------------------------
# weights V and V-tilde


def default_tilde(mu):
    mu = np.asarray(mu, dtype=float)
    return np.maximum(mu, 0.5 * mu)


def v_process(grid: ClockGrid, mu, nu, ell: float, a: float, mu_tilde=None, nu_tilde=None,
              *, dt=None, dA=None, active=None):
    """Cumulative weights (V, Vtilde), node arrays with V_0 = 0.

    ``dt``/``dA``/``active`` override the grid increments for path-level use.
    """
    if not a > 1:
        raise InvalidSpec("a > 1 required")
    if ell < 0:
        raise InvalidSpec("ell >= 0 required")
    dt = grid.dt if dt is None else np.asarray(dt, dtype=float)
    dA = grid.dA if dA is None else np.asarray(dA, dtype=float)
    mu = np.broadcast_to(np.asarray(mu, dtype=float), dt.shape)
    nu = np.broadcast_to(np.asarray(nu, dtype=float), dt.shape)
    mu_t = default_tilde(mu) if mu_tilde is None else np.broadcast_to(np.asarray(mu_tilde, float), dt.shape)
    nu_t = default_tilde(nu) if nu_tilde is None else np.broadcast_to(np.asarray(nu_tilde, float), dt.shape)
    if np.any(mu_t < np.maximum(mu, 0.5 * mu)) or np.any(nu_t < np.maximum(nu, 0.5 * nu)):
        raise InvalidSpec("mu_tilde >= max(mu, mu/2) and nu_tilde >= max(nu, nu/2) required")
    on = 1.0 if active is None else np.asarray(active, dtype=float)
    half = 0.5 * a * ell ** 2
    inc = on * ((mu + half) * dt + nu * dA)
    inc_t = on * ((mu_t + half) * dt + nu_t * dA)
    zero = np.zeros(dt.shape[:-1] + (1,))
    V = np.concatenate([zero, np.cumsum(inc, axis=-1)], axis=-1)
    Vt = np.concatenate([zero, np.cumsum(inc_t, axis=-1)], axis=-1)
    return V, Vt


# ---------------------------------------------------------------------------
# Stieltjes sums


def stieltjes_integrate(values, grid: ClockGrid, measure: str = "dt", start: int = 0,
                        stop: int | None = None, increments=None):
    """Left-endpoint sum of ``values_i * d(measure)_i`` over steps [start, stop)."""
    N = grid.N
    stop = N if stop is None else stop
    if not (0 <= start <= stop <= N):
        raise IndexOutOfRange(f"need 0 <= start <= stop <= {N}, got [{start}, {stop})")
    if increments is None:
        if grid.path_dependent and measure != "dt":
            raise InvalidSpec("path-dependent clock: pass path increments explicitly")
        increments = {"dt": grid.dt, "dA": grid.dA, "dQ": grid.dQ}[measure]
    values = np.asarray(values, dtype=float)
    if values.shape[-1] == N + 1:
        values = values[..., :-1]
    w = np.asarray(increments, dtype=float)
    return (values[..., start:stop] * w[..., start:stop]).sum(axis=-1)


# ---------------------------------------------------------------------------
# exponential mollifier along the clock


def _q_eps(Q, eps_index):
    N = Q.shape[-1] - 1
    if not (1 <= eps_index <= N):
        raise InvalidSpec(f"eps_index must lie in [1, {N}]")
    q = Q[..., eps_index]
    if np.any(q <= 0):
        raise InvalidSpec("Q_eps must be positive")
    return q


def mollify(f, grid: ClockGrid, eps_index: int, direction: str = "forward", dQ=None,
            node_axis: int = -1, q_eps=None):
    """Exponential average of node values ``f`` along the clock.

    Forward: ``M_0 = f_0`` and ``M_{i+1} = M_i - N_i dQ_i`` with drift
    ``N_i = (M_i - f_i) / Q_eps``.  Backward: anchored at ``f_N`` and run from
    the right.  ``Q_eps`` is the clock value at node ``eps_index``.

    ``dQ`` of shape (*lead, N) overrides the grid for path-level clocks; the
    axes of ``f`` other than ``node_axis`` are (*lead, *state).  ``q_eps``
    fixes Q_eps directly (e.g. the grid value when path clocks freeze early).
    """
    fm = np.moveaxis(np.asarray(f, dtype=float), node_axis, 0)
    dQ = grid.dQ if dQ is None else np.asarray(dQ, dtype=float)
    Q = np.concatenate([np.zeros(dQ.shape[:-1] + (1,)), np.cumsum(dQ, axis=-1)], axis=-1)
    if q_eps is None:
        q = np.asarray(_q_eps(Q, eps_index))
    else:
        if not q_eps > 0:
            raise InvalidSpec("Q_eps must be positive")
        q = np.full(dQ.shape[:-1], float(q_eps))
    r = dQ / q[..., None]
    if np.any(r > 1.0):
        raise InvalidSpec("mollifier step dQ_i / Q_eps exceeds 1; refine the grid")
    rm = np.moveaxis(r, -1, 0)
    while rm.ndim < fm.ndim:
        rm = rm[..., None]
    M = np.empty_like(fm)
    N = rm.shape[0]
    if direction == "forward":
        M[0] = fm[0]
        for i in range(N):
            M[i + 1] = M[i] + (fm[i] - M[i]) * rm[i]
    elif direction == "backward":
        M[N] = fm[N]
        for i in range(N - 1, -1, -1):
            M[i] = M[i + 1] + (fm[i] - M[i + 1]) * rm[i]
    else:
        raise InvalidSpec(f"unknown direction {direction!r}")
    return np.moveaxis(M, 0, node_axis)


def mollifier_drift(M, f, q_eps):
    """Drift N_i = (M_i - f_i) / Q_eps of the forward mollifier, steps 0..N-1."""
    M = np.asarray(M, dtype=float)
    f = np.asarray(f, dtype=float)
    return (M[..., :-1] - f[..., :-1]) / q_eps


def mollifier_convergence_report(f, grid: ClockGrid, eps_indices, probe_times=(),
                                 direction: str = "forward") -> ConvergenceTable:
    """sup_i |M^eps_i - f_i| and pointwise errors at probe times, per eps."""
    f = np.asarray(f, dtype=float)
    probes = [int(np.argmin(np.abs(grid.times - t))) for t in probe_times]
    cols = ["epsilon", "q_eps", "sup_error"] + [f"pointwise_error_at_{t:g}" for t in probe_times]
    table = ConvergenceTable(cols)
    for k in eps_indices:
        M = mollify(f, grid, k, direction)
        err = np.abs(M - f)
        table.add(float(grid.times[k]), float(grid.Q[k]), float(err.max()),
                  *[float(err[j]) for j in probes])
    return table
