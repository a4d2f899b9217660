"""Per-path views of a solution, used for path functionals and expectations.

On a lattice, paths are seeded random walks through the node arrays; on the
regression backend they are the batch paths themselves.  After a path's
horizon everything is frozen: Y = eta, Z = U = Phi = 0, dt = dA = dQ = dW = 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PathView:
    X: np.ndarray       # (P, N+1) first state coordinate
    dW: np.ndarray      # (P, N, d_W)
    Y: np.ndarray       # (P, N+1, d)
    Z: np.ndarray       # (P, N, d, d_W)
    U: np.ndarray       # (P, N, d)
    Phi: np.ndarray     # (P, N, d)
    active: np.ndarray  # (P, N)
    dt: np.ndarray      # (P, N)
    dA: np.ndarray
    dQ: np.ndarray
    alpha: np.ndarray
    times: np.ndarray

    @property
    def P(self):
        return self.Y.shape[0]

    @property
    def N(self):
        return self.Y.shape[1] - 1

    @property
    def eta(self):
        return self.Y[:, -1, :]


def path_view(solution, n_paths: int = 20000, seed: int = 0) -> PathView:
    be = solution.backend
    N = solution.N
    if be.kind == "lattice":
        k = be.sample_paths(n_paths, seed)
        X = be.path_states(k)
        s = be.lattice.sqrt_dt
        dW = ((2 * np.diff(k, axis=1) - 1) * s)[:, :, None]
        pick = lambda arr, i: arr[i][k[:, i]]
    else:
        X = be.batch.states[:, :, 0]
        dW = be.batch.dW.copy()
        pick = lambda arr, i: arr[i]
    Y = np.stack([pick(solution.Y, i) for i in range(N + 1)], axis=1)
    Z = np.stack([pick(solution.Z, i) for i in range(N)], axis=1)
    U = np.stack([pick(solution.U, i) for i in range(N)], axis=1)
    Phi = np.stack([pick(solution.Phi, i) for i in range(N)], axis=1)
    active = np.stack([pick(solution.active, i) for i in range(N)], axis=1)
    cols = {}
    for name in ("dt", "dA", "dQ", "alpha"):
        cols[name] = np.stack([pick(getattr(solution, name), i) for i in range(N)], axis=1)
    dW = np.where(active[:, :, None], dW, 0.0)
    return PathView(X=X, dW=dW, Y=Y, Z=Z, U=U, Phi=Phi, active=active, times=solution.times, **cols)


def exact_lattice_route(solution, problem) -> bool:
    """True when node-weighted expectations are exact: lattice backend,
    deterministic clock and horizon."""
    grid = solution.grid
    return (solution.backend is not None and solution.backend.kind == "lattice"
            and not grid.path_dependent and problem.horizon.deterministic)


def lattice_node_weights(solution):
    return solution.backend.node_weights()


def mean_se(x):
    """Sample mean and standard error over the first axis."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    m = x.mean(axis=0)
    se = x.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(m)
    return m, se
