"""Proper convex l.s.c. functions and their Moreau-Yosida regularizations.

Every built-in function is separable: a scalar kind acts identically on each
coordinate of a state vector (the last array axis), a :class:`SeparableProduct`
assigns one scalar kind per coordinate.  Arrays of shape ``(..., d)`` are
batches of ``d``-vectors; values and envelopes reduce over the last axis.

``+inf`` (``math.inf``) marks points outside the effective domain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidSpec, NonConvergence

INF = math.inf

PROX_TOL = 1e-12
BRACKET_CAP = 200


def _arr(y):
    return np.asarray(y, dtype=float)


class ConvexFn:
    """Base class.  Subclasses implement the elementwise hooks."""

    # elementwise hooks -------------------------------------------------
    def _phi(self, y):
        raise NotImplementedError

    def _prox(self, y, eps):
        return prox_bisect(self, y, eps)

    def _env(self, y, eps):
        v = self._prox(y, eps)
        return (y - v) ** 2 / (2.0 * eps) + self._phi(v)

    def _dleft(self, v):
        raise NotImplementedError

    def _dright(self, v):
        raise NotImplementedError

    def _bounds(self):
        return -INF, INF

    # vector level ------------------------------------------------------
    def value(self, y):
        """phi(y) for ``y`` of shape (..., d); +inf outside the domain."""
        return self._map("_phi", _arr(y)).sum(axis=-1)

    def prox(self, y, eps):
        return self._map("_prox", _arr(y), eps)

    def envelope(self, y, eps):
        return self._map("_env", _arr(y), eps).sum(axis=-1)

    def gradient(self, y, eps):
        y = _arr(y)
        return (y - self.prox(y, eps)) / eps

    def domain(self, d=1):
        lo, hi = self._bounds()
        return np.full(d, lo), np.full(d, hi)

    def project_domain(self, y):
        """Nearest point of the closed effective domain (a box)."""
        y = _arr(y)
        lo, hi = self.domain(y.shape[-1])
        return np.clip(y, lo, hi)

    @property
    def is_indicator_type(self):
        return False

    def _map(self, name, y, *args):
        return getattr(self, name)(y, *args)


@dataclass(frozen=True)
class Zero(ConvexFn):
    def _phi(self, y):
        return np.zeros_like(y)

    def _prox(self, y, eps):
        return y.copy()

    def _env(self, y, eps):
        return np.zeros_like(y)

    def _dleft(self, v):
        return 0.0 * v

    _dright = _dleft

    @property
    def is_indicator_type(self):
        return True


@dataclass(frozen=True)
class IndicatorInterval(ConvexFn):
    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo <= 0.0 <= self.hi):
            raise InvalidSpec(f"indicator needs lo <= 0 <= hi, got [{self.lo}, {self.hi}]")

    def _phi(self, y):
        return np.where((y >= self.lo) & (y <= self.hi), 0.0, INF)

    def _prox(self, y, eps):
        return np.clip(y, self.lo, self.hi)

    def _env(self, y, eps):
        dist = y - np.clip(y, self.lo, self.hi)
        return dist * dist / (2.0 * eps)

    def _dleft(self, v):
        v = _arr(v)
        out = np.where(v > self.hi, INF, 0.0)
        return np.where(v <= self.lo, -INF, out)

    def _dright(self, v):
        v = _arr(v)
        out = np.where(v < self.lo, -INF, 0.0)
        return np.where(v >= self.hi, INF, out)

    def _bounds(self):
        return self.lo, self.hi

    @property
    def is_indicator_type(self):
        return True


@dataclass(frozen=True)
class Quadratic(ConvexFn):
    """c * y**2 / 2."""

    c: float = 1.0

    def __post_init__(self):
        if self.c < 0:
            raise InvalidSpec("Quadratic needs c >= 0")

    def _phi(self, y):
        return 0.5 * self.c * y * y

    def _prox(self, y, eps):
        return y / (1.0 + self.c * eps)

    def _env(self, y, eps):
        return self.c * y * y / (2.0 * (1.0 + self.c * eps))

    def _dleft(self, v):
        return self.c * _arr(v)

    _dright = _dleft


@dataclass(frozen=True)
class AbsValue(ConvexFn):
    """lam * |y|; its envelope is the Huber function."""

    lam: float = 1.0

    def __post_init__(self):
        if self.lam < 0:
            raise InvalidSpec("AbsValue needs lam >= 0")

    def _phi(self, y):
        return self.lam * np.abs(y)

    def _prox(self, y, eps):
        t = eps * self.lam
        return np.sign(y) * np.maximum(np.abs(y) - t, 0.0)

    def _env(self, y, eps):
        t = eps * self.lam
        a = np.abs(y)
        return np.where(a <= t, y * y / (2.0 * eps), self.lam * a - 0.5 * eps * self.lam ** 2)

    def _dleft(self, v):
        v = _arr(v)
        return np.where(v > 0, self.lam, -self.lam)

    def _dright(self, v):
        v = _arr(v)
        return np.where(v < 0, -self.lam, self.lam)


@dataclass(frozen=True)
class CustomScalar(ConvexFn):
    """User-supplied scalar convex function, prox computed by bisection.

    ``dleft``/``dright`` are the one-sided derivatives, returning -inf/+inf
    to the left/right of the domain.
    """

    fn: Callable
    dleft: Callable
    dright: Callable
    lo: float = -INF
    hi: float = INF

    def __post_init__(self):
        if abs(float(self.fn(0.0))) > 0:
            raise InvalidSpec("custom convex function must vanish at 0")

    def _phi(self, y):
        return np.vectorize(self.fn, otypes=[float])(y)

    def _dleft(self, v):
        return np.vectorize(self.dleft, otypes=[float])(v)

    def _dright(self, v):
        return np.vectorize(self.dright, otypes=[float])(v)

    def _bounds(self):
        return self.lo, self.hi


@dataclass(frozen=True)
class SeparableProduct(ConvexFn):
    parts: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise InvalidSpec("SeparableProduct needs at least one part")
        for p in self.parts:
            if isinstance(p, SeparableProduct):
                raise InvalidSpec("nested SeparableProduct")

    def _map(self, name, y, *args):
        if y.shape[-1] != len(self.parts):
            raise InvalidSpec(f"state dimension {y.shape[-1]} != {len(self.parts)} parts")
        cols = [getattr(p, name)(y[..., j], *args) for j, p in enumerate(self.parts)]
        return np.stack(cols, axis=-1)

    def domain(self, d=None):
        lo = np.array([p._bounds()[0] for p in self.parts])
        hi = np.array([p._bounds()[1] for p in self.parts])
        return lo, hi

    @property
    def is_indicator_type(self):
        return all(p.is_indicator_type for p in self.parts)


# ---------------------------------------------------------------------------
# generic prox by bisection on the optimality inclusion


def _prox_bisect_scalar(f, y, eps, tol=PROX_TOL):
    def h_minus(v):
        return (v - y) / eps + float(f._dleft(v))

    def h_plus(v):
        return (v - y) / eps + float(f._dright(v))

    def located(v):
        return h_minus(v) <= 0.0 <= h_plus(v)

    if located(y):
        return y
    w = max(1.0, abs(y))
    lo, hi = y - w, y + w
    it = 0
    while not (h_plus(lo) < 0.0 or located(lo)):
        lo -= w
        w *= 2.0
        it += 1
        if it > BRACKET_CAP:
            raise NonConvergence(f"prox bisection failed to bracket below y={y}")
    if located(lo):
        return lo
    w = max(1.0, abs(y))
    while not (h_minus(hi) > 0.0 or located(hi)):
        hi += w
        w *= 2.0
        it += 1
        if it > BRACKET_CAP:
            raise NonConvergence(f"prox bisection failed to bracket above y={y}")
    if located(hi):
        return hi
    for _ in range(BRACKET_CAP):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if h_plus(mid) < 0.0:
            lo = mid
        elif h_minus(mid) > 0.0:
            hi = mid
        else:
            return mid
    return 0.5 * (lo + hi)


def prox_bisect(f, y, eps, tol=PROX_TOL):
    """Prox of a scalar kind via monotone bisection, elementwise over ``y``."""
    if eps <= 0:
        raise InvalidSpec("eps must be positive")
    y = _arr(y)
    out = np.empty_like(y)
    for idx, yi in np.ndenumerate(y):
        out[idx] = _prox_bisect_scalar(f, float(yi), eps, tol)
    return out


# ---------------------------------------------------------------------------
# public functional API


@dataclass(frozen=True)
class YosidaEval:
    envelope: np.ndarray
    prox_point: np.ndarray
    gradient: np.ndarray
    epsilon: float


def _vec(y):
    return np.atleast_1d(_arr(y))


def value(f: ConvexFn, y):
    out = f.value(_vec(y))
    return float(out) if np.ndim(out) == 0 else out


def prox(f: ConvexFn, y, eps: float):
    if eps <= 0:
        raise InvalidSpec("eps must be positive")
    return f.prox(_vec(y), eps)


def yosida_grad(f: ConvexFn, y, eps: float) -> YosidaEval:
    if eps <= 0:
        raise InvalidSpec("eps must be positive")
    y = _vec(y)
    j = f.prox(y, eps)
    return YosidaEval(envelope=f.envelope(y, eps), prox_point=j,
                      gradient=(y - j) / eps, epsilon=eps)


def _weighted(w, v):
    # 0 * inf = 0: a zero-weight term never contributes
    with np.errstate(invalid="ignore"):
        return np.where(np.asarray(w) == 0, 0.0, w * v)


def combined_psi(phi: ConvexFn, psi: ConvexFn, alpha, on_horizon, y, eps):
    """Regularized alpha*phi + (1-alpha)*psi and its gradient.

    ``alpha`` and ``on_horizon`` broadcast against the batch shape of ``y``.
    Off the horizon both value and gradient vanish.
    """
    y = _vec(y)
    alpha = np.asarray(alpha, dtype=float)
    on = np.asarray(on_horizon, dtype=bool)
    val = alpha * phi.envelope(y, eps) + (1.0 - alpha) * psi.envelope(y, eps)
    a = alpha[..., None] if alpha.ndim else alpha
    grad = a * phi.gradient(y, eps) + (1.0 - a) * psi.gradient(y, eps)
    val = np.where(on, val, 0.0)
    grad = np.where(on[..., None] if on.ndim else on, grad, 0.0)
    if val.ndim == 0:
        val = float(val)
    return val, grad


def psi_value(phi: ConvexFn, psi: ConvexFn, alpha, y):
    """Unregularized alpha*phi(y) + (1-alpha)*psi(y) with 0*inf = 0."""
    return _weighted(alpha, phi.value(y)) + _weighted(1.0 - np.asarray(alpha), psi.value(y))


def psi_domain(phi: ConvexFn, psi: ConvexFn, alpha, d):
    """Box Dom(alpha*phi + (1-alpha)*psi); alpha is a scalar here."""
    lo1, hi1 = phi.domain(d)
    lo2, hi2 = psi.domain(d)
    if alpha >= 1.0:
        return lo1, hi1
    if alpha <= 0.0:
        return lo2, hi2
    return np.maximum(lo1, lo2), np.minimum(hi1, hi2)


# ---------------------------------------------------------------------------
# regularization property harness


@dataclass
class PropertyReport:
    epsilon: float
    delta: float
    violations: dict

    @property
    def max_violation(self):
        return max(self.violations.values())

    def passed(self, tol=1e-9):
        return self.max_violation <= tol


def check_yosida_properties(f: ConvexFn, samples: Sequence, eps: float, delta: float,
                            probes=None) -> PropertyReport:
    """Max violation of the five Moreau-Yosida properties over samples/pairs.

    (a) envelope identity, (b) subgradient inequality at the prox point
    tested on probe points, (c) 1/eps-Lipschitz gradient, (d) monotone
    gradient, (e) the cross-eps inequality between eps and delta.
    Violations are clipped at zero; a satisfied property reports 0.
    """
    if eps <= 0 or delta <= 0:
        raise InvalidSpec("eps and delta must be positive")
    x = _arr(samples)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] == 0:
        raise InvalidSpec("samples must be nonempty")
    v = x if probes is None else _arr(probes).reshape(-1, x.shape[1])

    j = f.prox(x, eps)
    g = (x - j) / eps
    gd = f.gradient(x, delta)
    phi_j = f.value(j)

    with np.errstate(invalid="ignore"):
        a = np.abs(f.envelope(x, eps) - (0.5 * eps * (g * g).sum(-1) + phi_j))
    a = np.where(np.isinf(phi_j), INF, a)

    phi_v = f.value(v)
    lin = (g[:, None, :] * (v[None, :, :] - j[:, None, :])).sum(-1)
    with np.errstate(invalid="ignore"):
        b = phi_j[:, None] + lin - phi_v[None, :]
    b = np.where(np.isinf(phi_v)[None, :] & np.isfinite(phi_j)[:, None], -INF, b)

    dx = x[:, None, :] - x[None, :, :]
    dg = g[:, None, :] - g[None, :, :]
    c = np.sqrt((dg * dg).sum(-1)) - np.sqrt((dx * dx).sum(-1)) / eps
    d = -(dg * dx).sum(-1)
    dge = g[:, None, :] - gd[None, :, :]
    e = -((dge * dx).sum(-1) + (eps + delta) * (g[:, None, :] * gd[None, :, :]).sum(-1))

    viol = {}
    for name, arr in zip("abcde", (a, b, c, d, e)):
        m = float(np.nanmax(arr)) if np.size(arr) else 0.0
        viol[name] = max(m, 0.0)
    return PropertyReport(epsilon=eps, delta=delta, violations=viol)
