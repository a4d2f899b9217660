import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bsvi.convex import (AbsValue, CustomScalar, IndicatorInterval, Quadratic, SeparableProduct, Zero,
                         check_yosida_properties, combined_psi, prox, prox_bisect, psi_value, value,
                         yosida_grad)
from bsvi.errors import InvalidSpec, NonConvergence

BUILTINS = [Zero(), IndicatorInterval(-1.0, 1.0), IndicatorInterval(0.0, 2.0), Quadratic(1.0),
            Quadratic(3.0), AbsValue(1.0), AbsValue(0.5)]
probe = np.linspace(-3, 3, 201)
reals = st.floats(-50, 50, allow_nan=False)
eps_st = st.sampled_from([1.0, 0.1, 0.01])


# --- value -------------------------------------------------------------------

def test_value_examples():
    assert value(IndicatorInterval(0, 1), 0.5) == 0
    assert value(IndicatorInterval(0, 1), 2.0) == math.inf
    assert value(Quadratic(1), 4.0) == 8


@pytest.mark.parametrize("f", BUILTINS)
def test_value_zero_at_origin_and_nonnegative(f):
    assert value(f, 0.0) == 0
    assert np.all(f.value(probe[:, None]) >= 0)


def test_indicator_needs_origin_inside():
    with pytest.raises(InvalidSpec):
        IndicatorInterval(0.5, 1.0)


@pytest.mark.parametrize("f", BUILTINS)
@settings(max_examples=60, deadline=None)
@given(x=reals, y=reals, t=st.floats(0, 1))
def test_convexity(f, x, y, t):
    fx, fy = value(f, x), value(f, y)
    if math.isfinite(fx) and math.isfinite(fy):
        assert value(f, t * x + (1 - t) * y) <= t * fx + (1 - t) * fy + 1e-9 * (1 + abs(fx) + abs(fy))


# --- prox and gradient ------------------------------------------------------------

def test_prox_examples():
    assert prox(IndicatorInterval(0, 1), 2.0, 0.5)[0] == 1
    assert prox(Quadratic(1), 4.0, 1.0)[0] == 2
    assert prox(AbsValue(1), 0.3, 0.5)[0] == 0


def test_yosida_grad_examples():
    ev = yosida_grad(IndicatorInterval(0, 1), 2.0, 0.5)
    assert (ev.gradient[0], ev.envelope, ev.prox_point[0]) == (2.0, 1.0, 1.0)
    ev = yosida_grad(Quadratic(1), 4.0, 1.0)
    assert (ev.gradient[0], ev.envelope, ev.prox_point[0]) == (2.0, 4.0, 2.0)


@pytest.mark.parametrize("f", BUILTINS)
@pytest.mark.parametrize("eps", [1.0, 0.1, 0.01])
def test_origin_is_fixed(f, eps):
    ev = yosida_grad(f, 0.0, eps)
    assert ev.gradient[0] == 0 and ev.envelope == 0


@pytest.mark.parametrize("f", BUILTINS)
def test_yosida_eval_invariants(f):
    y = probe[:, None]
    for eps in (1.0, 0.1):
        ev = yosida_grad(f, y, eps)
        assert np.array_equal(ev.gradient, (y - ev.prox_point) / eps)
        np.testing.assert_allclose(ev.envelope, 0.5 * eps * (ev.gradient ** 2).sum(-1) + f.value(ev.prox_point),
                                   atol=1e-12)


def test_non_positive_eps_rejected():
    with pytest.raises(InvalidSpec):
        prox(Quadratic(1), 1.0, 0.0)


@pytest.mark.parametrize("f", BUILTINS)
@pytest.mark.parametrize("eps", [1.0, 0.1, 0.01])
def test_bisection_matches_closed_form(f, eps):
    closed = f.prox(probe, eps)
    np.testing.assert_allclose(prox_bisect(f, probe, eps), closed, atol=1e-10, rtol=0)


@settings(max_examples=80, deadline=None)
@given(x=reals, y=reals, eps=eps_st, k=st.integers(0, len(BUILTINS) - 1))
def test_prox_firmly_nonexpansive(x, y, eps, k):
    f = BUILTINS[k]
    px, py = f.prox(np.array([x]), eps)[0], f.prox(np.array([y]), eps)[0]
    assert abs(px - py) <= abs(x - y) + 1e-12
    assert (px - py) ** 2 <= (px - py) * (x - y) + 1e-9


@pytest.mark.parametrize("f", BUILTINS)
def test_envelope_increases_as_eps_decreases(f):
    y = probe[:, None]
    prev = f.envelope(y, 1.0)
    for eps in (0.5, 0.1, 0.01, 1e-3):
        cur = f.envelope(y, eps)
        assert np.all(cur >= prev - 1e-12)
        prev = cur


@pytest.mark.parametrize("f", [Quadratic(1.0), Quadratic(3.0), AbsValue(1.0), AbsValue(0.5)])
def test_envelope_converges_to_value(f):
    y = probe[:, None]
    assert np.max(np.abs(f.envelope(y, 1e-6) - f.value(y))) <= 1e-4


def test_custom_scalar_agrees_with_builtin():
    huber_src = CustomScalar(lambda v: abs(v), lambda v: 1.0 if v > 0 else -1.0,
                             lambda v: -1.0 if v < 0 else 1.0)
    np.testing.assert_allclose(huber_src.prox(probe, 0.3), AbsValue(1.0).prox(probe, 0.3), atol=1e-10)


def test_custom_scalar_must_vanish_at_origin():
    with pytest.raises(InvalidSpec):
        CustomScalar(lambda v: v * v + 1, lambda v: 2 * v, lambda v: 2 * v)


def test_malformed_custom_scalar_does_not_bracket():
    # derivative -2v makes the optimality map decreasing: no root can be bracketed
    bad = CustomScalar(lambda v: 0.0, lambda v: -2.0 * v, lambda v: -2.0 * v)
    with pytest.raises(NonConvergence):
        bad.prox(np.array([1.0]), 1.0)


def test_separable_product():
    f = SeparableProduct([IndicatorInterval(-1, 1), Quadratic(1.0)])
    y = np.array([[2.0, 4.0]])
    np.testing.assert_allclose(f.prox(y, 1.0), [[1.0, 2.0]])
    assert f.value(np.array([[0.5, 2.0]]))[0] == 2.0
    lo, hi = f.domain()
    assert list(lo) == [-1, -math.inf] and list(hi) == [1, math.inf]
    with pytest.raises(InvalidSpec):
        SeparableProduct([f])


# --- property harness ------------------------------------------------------------

@pytest.mark.parametrize("f", BUILTINS)
@pytest.mark.parametrize("eps", [1.0, 0.1, 0.01])
def test_all_five_properties_on_probe_grid(f, eps):
    rep = check_yosida_properties(f, probe, eps, eps / 10)
    assert rep.passed(1e-9), rep.violations


def test_indicator_property_example():
    rep = check_yosida_properties(IndicatorInterval(-1, 1), np.linspace(-3, 3, 200), 0.1, 0.01)
    assert rep.max_violation <= 1e-10


def test_zero_has_no_violations():
    rep = check_yosida_properties(Zero(), probe, 0.3, 0.03)
    assert all(v == 0 for v in rep.violations.values())


def test_quadratic_monotone_pairs():
    rep = check_yosida_properties(Quadratic(1), [-2.0, 0.0, 2.0], 1.0, 1.0)
    assert rep.violations["d"] == 0


def test_harness_detects_a_broken_gradient():
    class Broken(Quadratic):
        def _prox(self, y, eps):
            return y * 2.0  # not a prox: gradient -y/eps is decreasing

    rep = check_yosida_properties(Broken(1.0), probe, 1.0, 0.1)
    assert rep.violations["d"] > 0


# --- combined Psi ---------------------------------------------------------------

def test_combined_psi_examples():
    val, grad = combined_psi(IndicatorInterval(0, 1), Zero(), 1.0, True, 2.0, 0.5)
    assert (val, grad[0]) == (1.0, 2.0)
    val, grad = combined_psi(IndicatorInterval(0, 1), Quadratic(2), 0.3, False, 2.0, 0.5)
    assert (val, grad[0]) == (0.0, 0.0)
    val, grad = combined_psi(Quadratic(1), Quadratic(1), 0.5, True, 4.0, 1.0)
    assert (val, grad[0]) == (4.0, 2.0)


def test_zero_weight_times_infinity_is_zero():
    v = psi_value(IndicatorInterval(-1, 1), Zero(), 0.0, np.array([[5.0]]))
    assert v[0] == 0.0


@settings(max_examples=50, deadline=None)
@given(y=reals, a=st.floats(0, 1), eps=eps_st)
def test_combined_gradient_is_convex_combination(y, a, eps):
    phi, psi = IndicatorInterval(-1, 1), AbsValue(1.0)
    _, g = combined_psi(phi, psi, a, True, y, eps)
    expect = a * phi.gradient(np.array([y]), eps) + (1 - a) * psi.gradient(np.array([y]), eps)
    np.testing.assert_allclose(g, expect, rtol=1e-12, atol=1e-12)


def test_example_b_gradient_formula():
    a, b = -1.0, 1.0
    for eps in (1.0, 0.1, 0.01):
        g = IndicatorInterval(a, b).gradient(probe, eps)
        formula = (np.maximum(probe - b, 0) - np.maximum(a - probe, 0)) / eps
        assert np.max(np.abs(g - formula)) <= 1e-12
