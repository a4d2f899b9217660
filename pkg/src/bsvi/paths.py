"""Conditional-expectation backends: a recombining binomial lattice and a
seeded Monte Carlo path batch with least-squares regression.

Unit arrays at step ``i`` have the units (lattice nodes or paths) on the
first axis; any trailing axes (state coordinates) are carried through.
"""
from __future__ import annotations

import itertools
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .clock import ClockGrid, HorizonSpec
from .errors import IllConditioned, InvalidSpec

MAGIC = b"BSVP"
DUMP_VERSION = 1
BLOCK = 4096


class DegenerateStepWarning(UserWarning):
    """z_projection on a step with dt = 0; Z is set to 0 there."""


# ---------------------------------------------------------------------------
# lattice


@dataclass(frozen=True)
class Lattice:
    N: int
    dt: float
    x0: float = 0.0

    @property
    def sqrt_dt(self):
        return float(np.sqrt(self.dt))

    def states(self, i):
        return self.x0 + (2.0 * np.arange(i + 1) - i) * self.sqrt_dt


class LatticeBackend:
    kind = "lattice"
    d_W = 1

    def __init__(self, grid: ClockGrid, x0: float = 0.0):
        if not grid.uniform:
            raise InvalidSpec("the lattice needs a uniform t-mesh")
        self.lattice = Lattice(grid.N, float(grid.dt[0]), x0)
        self.N = grid.N

    def n_units(self, i):
        return i + 1

    def states(self, i):
        return self.lattice.states(i)[:, None]

    def cond_expect(self, i, values_next, mask=None):
        v = np.asarray(values_next, dtype=float)
        if v.shape[0] != i + 2:
            raise InvalidSpec(f"step {i}: expected {i + 2} node values, got {v.shape[0]}")
        return 0.5 * (v[1:] + v[:-1])

    def z_projection(self, i, values_next, mask=None):
        v = np.asarray(values_next, dtype=float)
        z = (v[1:] - v[:-1]) / (2.0 * self.lattice.sqrt_dt)
        return z[..., None]

    def increments_dW(self, i):
        return None

    def node_weights(self, active=None):
        """Probability of standing at node (i, k) before the horizon, per step.

        Mass at a node whose step is inactive is not propagated further.
        """
        w = [np.ones(1)]
        for i in range(self.N):
            p = w[-1] if active is None else w[-1] * active[i]
            nxt = np.zeros(i + 2)
            nxt[:-1] += 0.5 * p
            nxt[1:] += 0.5 * p
            w.append(nxt)
        return w

    def sample_paths(self, n, seed):
        """Node indices (n, N+1) of ``n`` random lattice walks."""
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        ups = rng.integers(0, 2, size=(n, self.N))
        return np.concatenate([np.zeros((n, 1), dtype=np.int64), np.cumsum(ups, axis=1)], axis=1)

    def path_states(self, k):
        steps = np.arange(k.shape[1])
        return self.lattice.x0 + (2.0 * k - steps) * self.lattice.sqrt_dt


# ---------------------------------------------------------------------------
# Monte Carlo paths


@dataclass(frozen=True)
class PathBatch:
    dW: np.ndarray
    dt: np.ndarray
    seed: int | None = None
    x0: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        object.__setattr__(self, "dW", np.asarray(self.dW, dtype=float))
        object.__setattr__(self, "x0", np.atleast_1d(np.asarray(self.x0, dtype=float)))
        if self.dW.ndim != 3:
            raise InvalidSpec("dW must have shape (M, N, d_W)")
        X = np.concatenate([np.zeros((self.M, 1, self.d_W)), np.cumsum(self.dW, axis=1)], axis=1)
        object.__setattr__(self, "states", X + self.x0)

    @property
    def M(self):
        return self.dW.shape[0]

    @property
    def N(self):
        return self.dW.shape[1]

    @property
    def d_W(self):
        return self.dW.shape[2]

    @classmethod
    def generate(cls, grid: ClockGrid, n_paths: int, seed: int, d_W: int = 1, x0=0.0):
        """i.i.d. N(0, dt_i) increments; block ``b`` of BLOCK paths draws from
        its own stream keyed by (seed, b), so output is independent of how
        blocks are scheduled."""
        N = grid.N
        sd = np.sqrt(grid.dt)
        parts = []
        for b, start in enumerate(range(0, n_paths, BLOCK)):
            m = min(BLOCK, n_paths - start)
            rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(b,))))
            parts.append(rng.standard_normal((m, N, d_W)) * sd[None, :, None])
        dW = np.concatenate(parts, axis=0) if parts else np.zeros((0, N, d_W))
        return cls(dW=dW, dt=grid.dt.copy(), seed=seed, x0=np.full(d_W, float(x0)) if np.ndim(x0) == 0 else x0)

    def dump(self, path):
        """Little-endian float64 increments, row-major, after a 16-byte header."""
        with open(path, "wb") as fh:
            fh.write(struct.pack("<4sIII", MAGIC, DUMP_VERSION, self.M, self.N))
            fh.write(np.ascontiguousarray(self.dW, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path, dt, x0=0.0, seed=None):
        with open(path, "rb") as fh:
            raw = fh.read()
        magic, version, M, N = struct.unpack("<4sIII", raw[:16])
        if magic != MAGIC or version != DUMP_VERSION:
            raise InvalidSpec("not a path batch dump")
        data = np.frombuffer(raw[16:], dtype="<f8")
        if M * N == 0 or data.size % (M * N):
            raise InvalidSpec("corrupt path batch dump")
        d_W = data.size // (M * N)
        x0 = np.full(d_W, float(x0)) if np.ndim(x0) == 0 else x0
        return cls(dW=data.reshape(M, N, d_W).astype(float), dt=np.asarray(dt, float), seed=seed, x0=x0)


def monomial_exponents(n_vars, degree):
    """Exponent tuples of all monomials of total degree <= degree."""
    out = []
    for deg in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(n_vars), deg):
            e = [0] * n_vars
            for c in combo:
                e[c] += 1
            out.append(tuple(e))
    return out


class RegressionBackend:
    kind = "regression"

    def __init__(self, batch: PathBatch, degree: int = 3, ridge: float = 1e-10):
        if not 0 <= degree <= 4:
            raise InvalidSpec("basis degree must lie in [0, 4]")
        self.batch = batch
        self.degree = degree
        self.ridge = ridge
        self.N = batch.N
        self.d_W = batch.d_W

    def n_units(self, i):
        return self.batch.M

    def states(self, i):
        return self.batch.states[:, i, :]

    def increments_dW(self, i):
        return self.batch.dW[:, i, :]

    def _basis(self, x, rows):
        xr = x[rows]
        mean = xr.mean(axis=0)
        std = xr.std(axis=0)
        keep = std > 1e-14 * (1.0 + np.abs(mean))
        n_rows = int(rows.sum())
        deg = self.degree if keep.any() else 0
        while deg > 0 and n_rows < 2 * len(monomial_exponents(int(keep.sum()), deg)):
            deg -= 1
        u = (x[:, keep] - mean[keep]) / std[keep]
        cols = []
        for e in monomial_exponents(u.shape[1], deg):
            c = np.ones(x.shape[0])
            for j, k in enumerate(e):
                if k:
                    c = c * u[:, j] ** k
            cols.append(c)
        return np.stack(cols, axis=1)

    def _fit(self, i, targets, mask):
        x = self.states(i)
        M = x.shape[0]
        rows = np.ones(M, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        flat = targets.reshape(M, -1)
        if not rows.any():
            return np.zeros_like(targets)
        B = self._basis(x, rows)
        Br = B[rows]
        n = Br.shape[0]
        G = Br.T @ Br / n
        ev = np.linalg.eigvalsh(G)
        if ev[0] <= 1e-12 * ev[-1]:
            raise IllConditioned(f"step {i}: regression Gram matrix is rank deficient")
        coef = np.linalg.solve(G + self.ridge * np.eye(G.shape[0]), Br.T @ flat[rows] / n)
        return (B @ coef).reshape(targets.shape)

    def cond_expect(self, i, values_next, mask=None):
        return self._fit(i, np.asarray(values_next, dtype=float), mask)

    def z_projection(self, i, values_next, mask=None):
        v = np.asarray(values_next, dtype=float)
        dt = self.batch.dt[i]
        if dt == 0:
            warnings.warn(f"step {i} has dt = 0; Z set to 0", DegenerateStepWarning)
            return np.zeros(v.shape + (self.d_W,))
        dW = self.batch.dW[:, i, :]
        shp = (v.shape[0],) + (1,) * (v.ndim - 1) + (self.d_W,)
        target = v[..., None] * dW.reshape(shp) / dt
        return self._fit(i, target, mask)


Backend = LatticeBackend | RegressionBackend


def cond_expect(backend, i, values_next, mask=None):
    return backend.cond_expect(i, values_next, mask)


def z_projection(backend, i, values_next, mask=None):
    return backend.z_projection(i, values_next, mask)


# ---------------------------------------------------------------------------
# horizon


@dataclass
class HorizonRealization:
    active: list
    index: object

    def stopped(self, i):
        N = len(self.active)
        return ~self.active[i] if i < N else np.ones_like(self.active[-1] if N else np.ones(1), bool)


def _outside(x, horizon):
    return (x <= horizon.lo) | (x >= horizon.hi)


def realize_horizon(backend, grid: ClockGrid, horizon: HorizonSpec | None = None):
    """Per-step activity masks; step i is active for a unit iff i < its horizon.

    Lattice: a node outside the open band (lo, hi) is a stopping node (paths
    on a +-sqrt(dt) lattice cannot reach it without stopping), ``index`` lists
    per-step node stop indices (i for stopping nodes, N otherwise).
    Paths: ``index`` is the first exit step of each path, or N.
    """
    horizon = horizon or grid.horizon
    N = grid.N
    if backend.kind == "lattice":
        index, active = [], []
        for i in range(N + 1):
            x = backend.lattice.states(i)
            out = np.zeros(i + 1, bool) if horizon.deterministic else _outside(x, horizon)
            index.append(np.where(out, i, N))
            if i < N:
                active.append(~out)
        return HorizonRealization(active=active, index=index)
    X = backend.batch.states[:, :, 0]
    M = X.shape[0]
    if horizon.deterministic:
        h = np.full(M, N)
    else:
        out = _outside(X, horizon)
        h = np.where(out.any(axis=1), out.argmax(axis=1), N)
    active = [i < h for i in range(N)]
    return HorizonRealization(active=active, index=h)


# ---------------------------------------------------------------------------
# martingale representation


@dataclass
class MartingaleRep:
    xi: list
    zeta: list
    reconstruction_error: float


def eta_at_horizon(backend, hz, eta, grid):
    X = backend.batch.states
    h = hz.index
    rows = np.arange(X.shape[0])
    xs = X[rows, h, :]
    runmax = np.maximum.accumulate(X[:, :, 0], axis=1)[rows, h]
    return eta(xs, grid.times[h], running_max=runmax)


def martingale_representation(backend, grid: ClockGrid, eta, horizon=None) -> MartingaleRep:
    """(xi, zeta) with xi_i = E_i[eta] and zeta from the one-step projection.

    ``eta`` is either a callable ``eta(states, t, running_max=None)`` or an
    array of terminal unit values (deterministic horizon only).
    """
    hz = realize_horizon(backend, grid, horizon)
    N = grid.N
    if callable(eta):
        if backend.kind == "lattice":
            terminal = eta(backend.states(N), grid.times[N])
            stop = None
        else:
            terminal = stop = eta_at_horizon(backend, hz, eta, grid)
    else:
        if not (horizon or grid.horizon).deterministic:
            raise InvalidSpec("array eta needs a deterministic horizon")
        terminal = np.asarray(eta, dtype=float)
        stop = terminal
    xi = [None] * (N + 1)
    zeta = [None] * N
    xi[N] = terminal
    for i in range(N - 1, -1, -1):
        act = hz.active[i]
        e = backend.cond_expect(i, xi[i + 1], act)
        z = backend.z_projection(i, xi[i + 1], act)
        if not act.all():
            sv = eta(backend.states(i), grid.times[i]) if backend.kind == "lattice" else stop
            e = np.where(_bc(act, e), e, sv)
            z = np.where(_bc(act, z), z, 0.0)
        xi[i] = e
        zeta[i] = z
    err = reconstruction_error(backend, xi, zeta, hz)
    return MartingaleRep(xi=xi, zeta=zeta, reconstruction_error=err)


def _bc(mask, like):
    m = np.asarray(mask, bool)
    return m.reshape(m.shape + (1,) * (np.ndim(like) - m.ndim))


def reconstruction_error(backend, xi, zeta, hz):
    """Lattice: max |xi_{i+1} - xi_i - zeta_i dW_i| over active nodes and both
    moves.  Paths: root-mean-square of the same residual over active steps."""
    N = len(zeta)
    if backend.kind == "lattice":
        s = backend.lattice.sqrt_dt
        err = 0.0
        for i in range(N):
            a = _bc(hz.active[i], xi[i])
            z = zeta[i][..., 0]
            up = np.where(a, xi[i + 1][1:] - xi[i] - z * s, 0.0)
            dn = np.where(a, xi[i + 1][:-1] - xi[i] + z * s, 0.0)
            err = max(err, float(np.abs(up).max()), float(np.abs(dn).max()))
        return err
    tot, cnt = 0.0, 0
    for i in range(N):
        dW = backend.increments_dW(i)
        z = zeta[i]
        shp = (dW.shape[0],) + (1,) * (z.ndim - 2) + (dW.shape[1],)
        r = xi[i + 1] - xi[i] - (z * dW.reshape(shp)).sum(-1)
        a = _bc(hz.active[i], r)
        tot += float(np.where(a, r * r, 0.0).sum())
        cnt += int(np.broadcast_to(a, r.shape).sum())
    return float(np.sqrt(tot / max(cnt, 1)))
