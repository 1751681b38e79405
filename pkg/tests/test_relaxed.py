import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cptinvest import (
    Constant,
    MarketModel,
    RelaxedControl,
    SimulationGrid,
    simulate,
)
from cptinvest.errors import PreconditionError, UnsupportedError
from cptinvest.relaxed import (
    ControlSetPoint,
    SetContext,
    convexity_witness,
    dominance_factor,
    dominance_transform,
    maximize_affine_lm,
    membership,
    norm_bound,
    point_from_lm,
    point_norm,
    support_function,
)
from cptinvest.reference import gbm_model

from oracles import base_set_point, extended_set_point, grid_max_affine


def ctx1(theta=0.05, lam=1.0, x=1.0, nu=0.0, kappa=1.0, bound=1.0):
    return SetContext(t=0.5, x_t=x, nu=[nu], kappa=[[kappa]], theta=theta, lam=lam, bound=bound)


def ext_ctx(theta=0.06, rate=0.02, rho=0.3, x=1.5):
    return SetContext(0.5, x, [0.1], [[0.5]], theta, 0.2, 1.0, variant="extended", rho=rho, rate=rate)


def lm_pairs():
    return st.tuples(st.floats(0, 1), st.floats(0, 1)).map(lambda p: (p[1] * math.sqrt(p[0]), p[0]))


# --- membership ------------------------------------------------------------------


def test_ordinary_strategy_is_member():
    ctx = ctx1()
    r = membership(ctx, point_from_lm(ctx, 0.5, 0.25))
    assert r.inside and r.m == pytest.approx(0.25) and r.l == pytest.approx(0.5)


def test_drift_above_sqrt_m_is_outside():
    ctx = ctx1()
    r = membership(ctx, point_from_lm(ctx, 0.6, 0.25))
    assert not r.inside and r.residual < 1e-12


def test_shifted_factor_drift_residual():
    ctx = ctx1(nu=0.2)
    p = point_from_lm(ctx, 0.3, 0.5)
    b = p.b.copy()
    b[0] += 1.0
    r = membership(ctx, ControlSetPoint(p.a, b))
    assert not r.inside and r.residual == pytest.approx(1.0)


def test_m_above_one_is_outside():
    ctx = ctx1()
    assert not membership(ctx, point_from_lm(ctx, 0.5, 1.2)).inside


@settings(max_examples=200, deadline=None)
@given(lm_pairs(), st.just(0.0) | st.floats(1e-6, 0.2), st.floats(0.05, 1.0), st.floats(0.1, 5.0))
def test_membership_round_trip(lm, theta, lam, x):
    l, m = lm
    ctx = ctx1(theta=theta, lam=lam, x=x)
    r = membership(ctx, point_from_lm(ctx, l, m))
    assert r.inside
    assert r.m == pytest.approx(m, abs=1e-12)
    if theta > 0:
        assert r.l == pytest.approx(l, abs=1e-9)


def test_point_matches_oracle_base():
    kappa = np.array([[1.0, 0.2], [0.0, 0.5]])
    nu = np.array([0.1, -0.3])
    ctx = SetContext(0.3, 1.7, nu, kappa, 0.07, 0.25, 2.0)
    p = point_from_lm(ctx, 0.4, 0.36)
    a, b = base_set_point(kappa, nu, 0.25, 0.07, 1.7, 0.4, 0.36)
    np.testing.assert_allclose(p.a, a, rtol=1e-14, atol=1e-16)
    np.testing.assert_allclose(p.b, b, rtol=1e-14, atol=1e-16)


def test_point_matches_oracle_extended():
    ctx = ext_ctx()
    p = point_from_lm(ctx, 0.4, 0.36)
    a, b = extended_set_point(0.5, 0.1, 0.2, 0.06, 0.02, 0.3, 1.5, 0.4, 0.36)
    np.testing.assert_allclose(p.a, a, rtol=1e-14, atol=1e-16)
    np.testing.assert_allclose(p.b, b, rtol=1e-14, atol=1e-16)
    assert membership(ctx, p).inside


# --- support function ------------------------------------------------------------


@pytest.mark.parametrize("c1,c2,expected", [(0.0, 1.0, 1.0), (-1.0, 1.0, 0.25), (-2.0, 1.0, 0.125), (1.0, -1.0, 1.0), (-1.0, -1.0, 0.0)])
def test_maximize_affine_examples(c1, c2, expected):
    assert maximize_affine_lm(c1, c2)[0] == pytest.approx(expected, rel=1e-15, abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_maximize_affine_against_grid(c1, c2):
    h = 1.0 / 999
    ref = grid_max_affine(c1, c2, 1000)
    got = maximize_affine_lm(c1, c2)[0]
    assert ref <= got + 1e-12
    assert got - ref <= 2 * (abs(c1) + abs(c2)) * h + 1e-12


def test_support_function_unit_example():
    # u picks a[x, x] with lam x = sqrt 2, v picks b[x] with theta x = 1
    ctx = ctx1(theta=1.0, lam=math.sqrt(2.0))
    u = np.zeros((2, 2))
    v = np.array([0.0, 1.0])
    assert support_function(ctx, u, v) == pytest.approx(1.0)
    u[1, 1] = -1.0
    assert support_function(ctx, u, v) == pytest.approx(0.25)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6), lm_pairs())
def test_support_dominates_members(coefs, lm):
    ctx = ctx1(theta=0.08, lam=0.3, x=1.4, nu=0.1, kappa=0.7)
    u = np.array([[coefs[0], coefs[1]], [coefs[1], coefs[2]]])
    v = np.array(coefs[3:5])
    p = point_from_lm(ctx, *lm)
    assert float(np.sum(p.a * u) + p.b @ v) <= support_function(ctx, u, v) + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=12, max_size=12), st.floats(0, 1))
def test_support_is_convex_in_direction(c, mu):
    ctx = ctx1(theta=0.08, lam=0.3, x=1.4)
    u1 = np.array([[c[0], c[1]], [c[1], c[2]]])
    u2 = np.array([[c[3], c[4]], [c[4], c[5]]])
    v1, v2 = np.array(c[6:8]), np.array(c[8:10])
    lhs = support_function(ctx, mu * u1 + (1 - mu) * u2, mu * v1 + (1 - mu) * v2)
    rhs = mu * support_function(ctx, u1, v1) + (1 - mu) * support_function(ctx, u2, v2)
    assert lhs <= rhs + 1e-12


# --- convexity -------------------------------------------------------------------


def test_convex_combination_of_extremes():
    ctx = ctx1()
    p1, p2 = point_from_lm(ctx, 0.0, 0.0), point_from_lm(ctx, 1.0, 1.0)
    r = convexity_witness(ctx, p1, p2, 0.5)
    # l = 0.5, m = 0.5 <= 1 with 0.5 <= sqrt(0.5): strictly relaxed, still inside
    assert r.inside and r.l == pytest.approx(0.5) and r.m == pytest.approx(0.5)


def test_convexity_requires_members():
    ctx = ctx1()
    with pytest.raises(PreconditionError):
        convexity_witness(ctx, point_from_lm(ctx, 0.9, 0.25), point_from_lm(ctx, 0.0, 0.0), 0.5)


@settings(max_examples=200, deadline=None)
@given(lm_pairs(), lm_pairs(), st.floats(0, 1), st.booleans())
def test_convexity_property(p, q, mu, extended):
    ctx = ext_ctx() if extended else ctx1(theta=0.05, lam=0.4, x=2.0)
    r = convexity_witness(ctx, point_from_lm(ctx, *p), point_from_lm(ctx, *q), mu, tol=1e-10)
    assert r.inside


# --- norm bound ------------------------------------------------------------------


@pytest.mark.parametrize("M,x,expected", [(0.0, 1.0, 0.5), (1.0, 0.0, 2.0), (1.0, 2.0, 6.0)])
def test_norm_bound_examples(M, x, expected):
    ctx = SetContext(0.0, x, [0.0], [[0.0]], 0.0, 0.0, M)
    assert norm_bound(ctx) == pytest.approx(expected)


@settings(max_examples=100, deadline=None)
@given(lm_pairs(), st.floats(0, 3), st.floats(-1, 1), st.floats(0.1, 4))
def test_norm_bound_dominates_members(lm, x, s, M):
    ctx = SetContext(0.2, x, [s * M], [[M]], abs(s) * M, M, M)
    assert point_norm(point_from_lm(ctx, *lm)) <= norm_bound(ctx) + 1e-12


# --- dominance -------------------------------------------------------------------


def test_ordinary_control_has_unit_factor():
    model = gbm_model(theta=0.1)
    b = simulate(model, RelaxedControl.constant(0.5, 0.25), SimulationGrid(1.0, 20), 100, 3)
    hat = dominance_transform(b)
    assert np.all(dominance_factor(b) == 1.0) and np.array_equal(hat.x_paths, b.x_paths)


def test_zero_theta_has_unit_factor():
    b = simulate(gbm_model(theta=0.0), RelaxedControl.constant(0.0, 1.0), SimulationGrid(1.0, 20), 50, 3)
    assert np.all(dominance_factor(b) == 1.0)


def test_pure_relaxed_factor_closed_form():
    b = simulate(gbm_model(theta=0.1), RelaxedControl.constant(0.0, 1.0), SimulationGrid(1.0, 50), 20, 1)
    z = dominance_factor(b)
    assert z[:, -1] == pytest.approx(math.exp(0.1), rel=1e-13)
    assert np.all(np.diff(z, axis=1) > 0)


def test_dominating_policy_reproduces_lifted_wealth():
    model = gbm_model(theta=0.08)
    ctrl = RelaxedControl(lambda t, y, x: 0.2 + 0.1 * np.tanh(x - 1.0), lambda t, y, x: 0.5)
    grid = SimulationGrid(1.0, 40)
    b = simulate(model, ctrl, grid, 300, 12)
    hat = dominance_transform(b)
    again = simulate(model, hat.control, grid, 300, 12)
    assert np.all(hat.x_paths >= b.x_paths)
    np.testing.assert_allclose(again.x_paths, hat.x_paths, rtol=1e-9)


def test_extended_variant_unsupported():
    m = MarketModel(1.0, Constant(0.0), Constant(0.5), Constant(0.06), Constant(0.2), variant="extended", rho=Constant(0.1), rate=Constant(0.01))
    b = simulate(m, RelaxedControl.constant(0.2, 0.25), SimulationGrid(1.0, 10), 10, 0)
    with pytest.raises(UnsupportedError):
        dominance_transform(b)
