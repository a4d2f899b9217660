import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bsvi.clock import (AZero, HorizonSpec, LinearRate, LocalTimeProxy, PiecewiseLinear, build_grid,
                        default_tilde, mollifier_convergence_report, mollifier_drift, mollify,
                        stieltjes_integrate, v_process)
from bsvi.errors import IndexOutOfRange, InvalidSpec


def test_build_grid_linear_rate():
    g = build_grid(1.0, 4, LinearRate(1.0))
    np.testing.assert_allclose(g.times, [0, .25, .5, .75, 1])
    np.testing.assert_allclose(g.dQ, .5)
    np.testing.assert_allclose(g.alpha, .5)
    np.testing.assert_allclose(g.Q, [0, .5, 1, 1.5, 2])


def test_build_grid_without_a():
    g = build_grid(2.0, 8)
    assert np.all(g.alpha == 1.0) and g.A[-1] == 0 and g.T == 2.0 and g.N == 8


def test_piecewise_linear_increments():
    g = build_grid(1.0, 4, PiecewiseLinear(((0, 0), (0.5, 1.0))))
    np.testing.assert_allclose(g.dA, [.5, .5, 0, 0])
    np.testing.assert_allclose(g.alpha[2:], 1.0)


def test_bad_specs_rejected():
    with pytest.raises(InvalidSpec):
        build_grid(0.0, 10)
    with pytest.raises(InvalidSpec):
        build_grid(1.0, 0)
    with pytest.raises(InvalidSpec):
        build_grid(1.0, 4, PiecewiseLinear(((0, 0), (0.5, 1.0), (1.0, 0.5))))
    with pytest.raises(InvalidSpec):
        LocalTimeProxy(1.0, 1.0, -1.0)
    with pytest.raises(InvalidSpec):
        HorizonSpec("sometimes")


def test_local_time_proxy_increments():
    g = build_grid(1.0, 10, LocalTimeProxy(2.0, -0.5, 0.5))
    assert g.path_dependent and np.all(g.dA == 0)
    dt, dA, dQ, alpha = g.increments(0, np.array([[0.0], [1.0]]))
    np.testing.assert_allclose(dA, [0.2, 0.0])
    np.testing.assert_allclose(alpha, [1 / 3, 1.0])
    with pytest.raises(InvalidSpec):
        g.increments(0)


def test_path_increments_shape():
    g = build_grid(1.0, 5, LocalTimeProxy(1.0, -0.1, 0.1))
    X = np.zeros((3, 6))
    X[1] = 1.0
    dt, dA, dQ, alpha = g.path_increments(X)
    assert dA.shape == (3, 5)
    assert np.all(dA[1] == 0) and np.allclose(dA[0], 0.2)


def test_horizon_deterministic_flag():
    assert HorizonSpec().deterministic
    assert HorizonSpec("exit").deterministic  # infinite band never exits
    assert not HorizonSpec("exit", -1, 1).deterministic


# --- weights --------------------------------------------------------------------

def test_v_process_example():
    g = build_grid(1.0, 4, LinearRate(1.0))
    V, Vt = v_process(g, 1.0, 0.0, 0.0, 2.0)
    np.testing.assert_allclose(V, [0, .25, .5, .75, 1])
    np.testing.assert_allclose(Vt, V)


def test_v_process_tilde_and_ell():
    g = build_grid(1.0, 2, LinearRate(2.0))
    V, Vt = v_process(g, -2.0, 1.0, 1.0, 2.0)
    # (mu + a ell^2 / 2) dt + nu dA = (-2 + 1) * .5 + 1 * 1 per step
    np.testing.assert_allclose(V, [0, .5, 1.0])
    # mu_tilde = max(-2, -1) = -1
    np.testing.assert_allclose(Vt, [0, 1.0, 2.0])


def test_v_process_guards():
    g = build_grid(1.0, 4)
    with pytest.raises(InvalidSpec):
        v_process(g, 1.0, 0.0, 0.0, 1.0)
    with pytest.raises(InvalidSpec):
        v_process(g, 1.0, 0.0, 0.0, 2.0, mu_tilde=0.1)


@settings(max_examples=50, deadline=None)
@given(mu=st.floats(-5, 5), nu=st.floats(-5, 5))
def test_tilde_dominates_v(mu, nu):
    g = build_grid(1.0, 8, LinearRate(0.5))
    V, Vt = v_process(g, mu, nu, 0.3, 2.0)
    assert np.all(Vt >= V - 1e-12)
    assert default_tilde(mu) >= mu / 2 and default_tilde(mu) >= mu


# --- Stieltjes sums -------------------------------------------------------------

def test_stieltjes_examples():
    g = build_grid(1.0, 4, LinearRate(1.0))
    assert stieltjes_integrate(np.ones(5), g, "dQ") == pytest.approx(2.0)
    assert stieltjes_integrate(g.times, g, "dt") == pytest.approx(0.375)
    assert stieltjes_integrate(np.ones(5), g, "dA", 1, 3) == pytest.approx(0.5)
    assert stieltjes_integrate(np.ones(5), g, "dQ", 2, 2) == 0.0


def test_stieltjes_bad_range():
    g = build_grid(1.0, 4)
    with pytest.raises(IndexOutOfRange):
        stieltjes_integrate(np.ones(5), g, "dt", 3, 2)
    with pytest.raises(IndexOutOfRange):
        stieltjes_integrate(np.ones(5), g, "dt", 0, 9)


@settings(max_examples=50, deadline=None)
@given(i=st.integers(0, 16), j=st.integers(0, 16), k=st.integers(0, 16),
       vals=st.lists(st.floats(-10, 10), min_size=17, max_size=17))
def test_stieltjes_additive(i, j, k, vals):
    i, j, k = sorted((i, j, k))
    g = build_grid(1.0, 16, LinearRate(0.7))
    v = np.array(vals)
    whole = stieltjes_integrate(v, g, "dQ", i, k)
    parts = stieltjes_integrate(v, g, "dQ", i, j) + stieltjes_integrate(v, g, "dQ", j, k)
    assert whole == pytest.approx(parts, abs=1e-10)


def test_dq_integral_is_dt_plus_da():
    g = build_grid(1.0, 10, LinearRate(3.0))
    v = np.sin(np.arange(11.0))
    assert stieltjes_integrate(v, g, "dQ") == pytest.approx(
        stieltjes_integrate(v, g, "dt") + stieltjes_integrate(v, g, "dA"))


# --- mollifier --------------------------------------------------------------------

def test_mollify_constant_is_fixed():
    g = build_grid(1.0, 64, LinearRate(1.0))
    for direction in ("forward", "backward"):
        np.testing.assert_allclose(mollify(np.full(65, 3.5), g, 8, direction), 3.5)


def test_mollify_matches_exponential_oracle():
    # for f = Q the forward ODE M' = (Q - M)/q gives M = Q - q (1 - exp(-Q/q))
    g = build_grid(1.0, 4096, LinearRate(1.0))
    k = 256
    q = g.Q[k]
    M = mollify(g.Q, g, k)
    oracle = g.Q - q * (1 - np.exp(-g.Q / q))
    assert np.max(np.abs(M - oracle)) <= 2 * g.dQ.max()


def test_mollifier_drift_matches_recursion():
    g = build_grid(1.0, 32, LinearRate(1.0))
    f = np.cos(3 * g.times)
    M = mollify(f, g, 4)
    Nd = mollifier_drift(M, f, g.Q[4])
    np.testing.assert_allclose(M[1:], M[:-1] - Nd * g.dQ, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(vals=st.lists(st.floats(-5, 5), min_size=33, max_size=33), k=st.integers(1, 32))
def test_mollify_stays_in_range(vals, k):
    g = build_grid(1.0, 32, LinearRate(1.0))
    f = np.array(vals)
    for direction in ("forward", "backward"):
        M = mollify(f, g, k, direction)
        assert M.min() >= f.min() - 1e-12 and M.max() <= f.max() + 1e-12


def test_mollify_is_a_contraction():
    g = build_grid(1.0, 128, LinearRate(2.0))
    rng = np.random.default_rng(4)
    f1, f2 = rng.normal(size=129), rng.normal(size=129)
    d = np.abs(mollify(f1, g, 8) - mollify(f2, g, 8)).max()
    assert d <= np.abs(f1 - f2).max() + 1e-12


def test_mollify_refinement_is_stable():
    errs = []
    for N in (512, 1024, 2048):
        g = build_grid(1.0, N, LinearRate(1.0))
        f = np.sin(4 * g.Q)
        M = mollify(f, g, N // 16)
        errs.append(np.abs(M - f).max())
    assert max(errs) - min(errs) <= 0.02


def test_mollify_batched_paths():
    g = build_grid(1.0, 16, LinearRate(1.0))
    f = np.stack([np.linspace(0, 1, 17), np.ones(17)])
    M = mollify(f, g, 4)
    np.testing.assert_allclose(M[0], mollify(f[0], g, 4))
    np.testing.assert_allclose(M[1], 1.0)


def test_mollify_guards():
    g = build_grid(1.0, 16, LinearRate(1.0))
    f = np.zeros(17)
    with pytest.raises(InvalidSpec):
        mollify(f, g, 0)
    with pytest.raises(InvalidSpec):
        mollify(f, g, 4, direction="sideways")
    with pytest.raises(InvalidSpec):
        mollify(f, g, 4, q_eps=g.dQ[0] / 2)


def test_convergence_report_columns():
    g = build_grid(1.0, 256, LinearRate(1.0))
    t = mollifier_convergence_report(np.sin(g.times), g, [64, 16, 4], probe_times=(0.5,))
    assert t.columns == ["epsilon", "q_eps", "sup_error", "pointwise_error_at_0.5"]
    sup = t.column("sup_error")
    assert sup[0] >= sup[1] >= sup[2]
