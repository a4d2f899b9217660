import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bsvi.clock import HorizonSpec, build_grid
from bsvi.errors import IllConditioned, InvalidSpec
from bsvi.paths import (BLOCK, DegenerateStepWarning, Lattice, LatticeBackend, PathBatch,
                        RegressionBackend, cond_expect, martingale_representation, monomial_exponents,
                        realize_horizon, z_projection)


def square(x, t, running_max=None):
    return np.asarray(x, float) ** 2


# --- lattice ------------------------------------------------------------------------

def test_lattice_states():
    lat = Lattice(4, 0.25)
    np.testing.assert_allclose(lat.states(2), [-1.0, 0.0, 1.0])
    np.testing.assert_allclose(Lattice(4, 0.25, x0=1.0).states(1), [0.5, 1.5])


def test_lattice_one_step_examples():
    be = LatticeBackend(build_grid(1.0, 4))
    v = np.array([1.0, 3.0])
    np.testing.assert_allclose(cond_expect(be, 0, v), [2.0])
    np.testing.assert_allclose(z_projection(be, 0, v), [[2.0]])  # (3 - 1) / (2 * 0.5)
    with pytest.raises(InvalidSpec):
        be.cond_expect(0, np.ones(3))


def test_lattice_needs_uniform_mesh():
    g = build_grid(1.0, 4)
    from bsvi.clock import ClockGrid
    bad = ClockGrid(times=np.array([0, .1, .5, 1.0]), dt=np.array([.1, .4, .5]), dA=np.zeros(3))
    with pytest.raises(InvalidSpec):
        LatticeBackend(bad)
    assert LatticeBackend(g).n_units(3) == 4


def test_lattice_matches_binomial_tree():
    N, T = 12, 1.0
    g = build_grid(T, N)
    be = LatticeBackend(g)
    eta = lambda x, t, running_max=None: np.maximum(x - 0.3, 0.0)
    rep = martingale_representation(be, g, eta)
    s = math.sqrt(T / N)
    for i in (0, 3, 7, 11):
        for k in range(i + 1):
            n = N - i
            brute = sum(math.comb(n, j) * 0.5 ** n * max(s * (2 * (k + j) - N) - 0.3, 0.0)
                        for j in range(n + 1))
            assert rep.xi[i][k] == pytest.approx(brute, abs=1e-12)


def test_lattice_reconstruction_is_exact():
    g = build_grid(1.0, 50)
    rep = martingale_representation(LatticeBackend(g), g, lambda x, t, running_max=None: np.sin(3 * x))
    assert rep.reconstruction_error <= 1e-12


def test_lattice_tower_property():
    g = build_grid(1.0, 20)
    be = LatticeBackend(g)
    rep = martingale_representation(be, g, square)
    # E[X_T^2] = T and E_0 of the node values equals xi_0
    assert rep.xi[0][0, 0] == pytest.approx(1.0, abs=1e-12)
    w = be.node_weights()
    for i in (5, 10, 20):
        assert float(w[i] @ rep.xi[i][:, 0]) == pytest.approx(1.0, abs=1e-12)


def test_node_weights_sum_to_one():
    be = LatticeBackend(build_grid(1.0, 10))
    for w in be.node_weights():
        assert w.sum() == pytest.approx(1.0)


def test_sample_paths_shape_and_determinism():
    be = LatticeBackend(build_grid(1.0, 10))
    k1, k2 = be.sample_paths(100, 3), be.sample_paths(100, 3)
    assert k1.shape == (100, 11) and np.array_equal(k1, k2)
    assert np.all(np.diff(k1, axis=1) >= 0) and np.all(np.diff(k1, axis=1) <= 1)
    X = be.path_states(k1)
    np.testing.assert_allclose(np.abs(np.diff(X, axis=1)), math.sqrt(0.1))


# --- Monte Carlo paths ------------------------------------------------------------

def test_generate_deterministic_and_block_keyed():
    g = build_grid(1.0, 8)
    a = PathBatch.generate(g, BLOCK + 10, seed=5)
    b = PathBatch.generate(g, BLOCK + 10, seed=5)
    assert np.array_equal(a.dW, b.dW)
    # the first block does not depend on how many paths follow it
    c = PathBatch.generate(g, 100, seed=5)
    assert np.array_equal(a.dW[:100], c.dW)
    assert not np.array_equal(PathBatch.generate(g, 100, seed=6).dW, c.dW)


def test_generate_moments():
    g = build_grid(1.0, 10)
    b = PathBatch.generate(g, 40000, seed=1)
    assert b.states.shape == (40000, 11, 1)
    var = b.dW.var(axis=0)[:, 0]
    assert np.all(np.abs(var - 0.1) <= 6 * 0.1 * math.sqrt(2 / 40000))


def test_dump_load_roundtrip(tmp_path):
    g = build_grid(1.0, 6)
    b = PathBatch.generate(g, 50, seed=2, d_W=2)
    p = tmp_path / "paths.bin"
    b.dump(p)
    raw = p.read_bytes()
    assert raw[:4] == b"BSVP" and len(raw) == 16 + 50 * 6 * 2 * 8
    c = PathBatch.load(p, g.dt, seed=2)
    assert c.d_W == 2 and np.array_equal(b.dW, c.dW)
    p.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(InvalidSpec):
        PathBatch.load(p, g.dt)


def test_monomial_exponents_counts():
    assert len(monomial_exponents(1, 3)) == 4
    assert len(monomial_exponents(2, 2)) == 6
    assert monomial_exponents(2, 1) == [(0, 0), (1, 0), (0, 1)]


def test_regression_degree_guard():
    b = PathBatch.generate(build_grid(1.0, 4), 100, 0)
    with pytest.raises(InvalidSpec):
        RegressionBackend(b, degree=5)


def test_regression_recovers_square_conditional_expectation():
    # E_i[X_T^2] = X_i^2 + (T - t_i), inside a cubic basis
    g = build_grid(1.0, 10)
    b = PathBatch.generate(g, 100000, seed=11)
    be = RegressionBackend(b, degree=3)
    target = b.states[:, -1, 0] ** 2
    for i in (2, 5, 9):
        x = b.states[:, i, 0]
        truth = x ** 2 + (1.0 - g.times[i])
        fit = be.cond_expect(i, target)
        resid = target - truth
        se = resid.std() / math.sqrt(len(resid))
        assert abs(np.mean(fit - truth)) <= 3 * se + 1e-12
        assert np.sqrt(np.mean((fit - truth) ** 2)) <= 0.02


def test_regression_z_for_linear_target():
    # v = X_{i+1}: Z_i = E_i[v dW_i] / dt = 1
    g = build_grid(1.0, 10)
    b = PathBatch.generate(g, 50000, seed=4)
    be = RegressionBackend(b, degree=2)
    z = be.z_projection(3, b.states[:, 4, 0])
    assert abs(z.mean() - 1.0) <= 0.05


def test_regression_ill_conditioned():
    g = build_grid(1.0, 4)
    dW = PathBatch.generate(g, 500, seed=1).dW
    b = PathBatch(dW=np.concatenate([dW, dW], axis=2), dt=g.dt)
    with pytest.raises(IllConditioned):
        RegressionBackend(b, degree=1).cond_expect(2, np.ones(500))


def test_degenerate_step_warning():
    dW = np.zeros((20, 2, 1))
    b = PathBatch(dW=dW, dt=np.array([0.0, 0.5]))
    be = RegressionBackend(b, degree=1)
    with pytest.warns(DegenerateStepWarning):
        z = be.z_projection(0, np.ones(20))
    assert np.all(z == 0)


# --- horizon ---------------------------------------------------------------------------

def test_realize_horizon_lattice():
    g = build_grid(1.0, 4, horizon=HorizonSpec("exit", -0.6, 0.6))
    hz = realize_horizon(LatticeBackend(g), g)
    # states at step 2 are -1, 0, 1: the outer nodes stop
    assert list(hz.active[2]) == [False, True, False]
    assert list(hz.index[2]) == [2, 4, 2]
    assert hz.active[0].all()


def test_realize_horizon_paths():
    g = build_grid(1.0, 3, horizon=HorizonSpec("exit", -1.0, 1.0))
    dW = np.array([[[0.5], [0.6], [0.0]], [[0.1], [0.1], [0.1]]])
    hz = realize_horizon(RegressionBackend(PathBatch(dW=dW, dt=g.dt), 1), g)
    assert list(hz.index) == [2, 3]
    assert list(hz.active[1]) == [True, True] and list(hz.active[2]) == [False, True]


def test_stopped_lattice_values_freeze():
    g = build_grid(1.0, 16, horizon=HorizonSpec("exit", -0.5, 0.5))
    be = LatticeBackend(g)
    rep = martingale_representation(be, g, square)
    hz = realize_horizon(be, g)
    for i in range(16):
        stop = ~hz.active[i]
        np.testing.assert_allclose(rep.xi[i][stop, 0], be.states(i)[stop, 0] ** 2)
        assert np.all(rep.zeta[i][stop] == 0)
    assert rep.reconstruction_error <= 1e-12


@settings(max_examples=25, deadline=None)
@given(vals=st.lists(st.floats(-10, 10), min_size=9, max_size=9))
def test_lattice_array_eta_martingale(vals):
    g = build_grid(1.0, 8)
    be = LatticeBackend(g)
    eta = np.array(vals)
    rep = martingale_representation(be, g, eta)
    w = be.node_weights()
    assert rep.xi[0][0] == pytest.approx(float(w[8] @ eta), abs=1e-9)
    assert rep.reconstruction_error <= 1e-9 * (1 + np.abs(eta).max())
