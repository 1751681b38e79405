import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cptinvest import Constant, MarketModel, SimulationGrid, run_suites
from cptinvest.cli import _vertex_only_support
from cptinvest.relaxed import membership, point_from_lm, support_function
from cptinvest.reference import gbm_model
from cptinvest.verify import (
    brute_force_support,
    convexity_suite,
    dominance_suite,
    moment_suite,
    norm_suite,
    random_context,
    random_member_lm,
    random_relaxed_control,
    support_suite,
)

from oracles import base_set_point


def test_random_context_respects_bound():
    rng = np.random.default_rng(0)
    for variant in ("base", "extended"):
        for _ in range(200):
            ctx = random_context(rng, variant, d=2, bound=1.5)
            assert ctx.theta >= ctx.rate >= 0
            assert np.linalg.norm(ctx.kappa, 2) <= 1.5 + 1e-12
            assert np.all(np.abs(ctx.nu) <= 1.5)


def test_random_members_are_members():
    rng = np.random.default_rng(1)
    for _ in range(300):
        ctx = random_context(rng, "base", d=2)
        assert membership(ctx, point_from_lm(ctx, *random_member_lm(rng)), tol=1e-10).inside


def test_random_member_matches_oracle():
    rng = np.random.default_rng(2)
    ctx = random_context(rng, "base", d=2)
    l, m = 0.3, 0.5
    a, b = base_set_point(ctx.kappa, ctx.nu, ctx.lam, ctx.theta, ctx.x_t, l, m)
    p = point_from_lm(ctx, l, m)
    np.testing.assert_allclose(p.a, a, atol=1e-15)
    np.testing.assert_allclose(p.b, b, atol=1e-15)


def test_random_relaxed_control_admissible():
    rng = np.random.default_rng(3)
    y = np.linspace(-3, 3, 50)[:, None]
    x = np.ones(50)
    for _ in range(20):
        ctrl = random_relaxed_control(rng)
        for t in (0.0, 0.3, 0.9):
            m = np.asarray(ctrl.m_fn(t, y, x))
            l = np.asarray(ctrl.l_fn(t, y, x))
            assert np.all((0 <= m) & (m <= 1)) and np.all((0 <= l) & (l <= np.sqrt(m) + 1e-15))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["base", "extended"]))
def test_brute_force_brackets_closed_form(seed, variant):
    rng = np.random.default_rng(seed)
    ctx = random_context(rng, variant)
    n = ctx.d + 1
    u = rng.normal(size=(n, n))
    u = u + u.T
    v = rng.normal(size=n)
    ref, res = brute_force_support(ctx, u, v, points=400)
    got = support_function(ctx, u, v)
    assert ref <= got + 1e-9 and got - ref <= res + 1e-9


# --- suites ----------------------------------------------------------------------


def test_convexity_suite_passes():
    r = convexity_suite(2000, seed=4)
    assert r.passed and r.checks == 2000 and r.failures == 0


def test_support_suite_passes_with_closed_form():
    r = support_suite(90, 300, seed=5)
    assert r.passed, r.detail


def test_support_suite_catches_vertex_only_support():
    r = support_suite(90, 300, seed=5, support=_vertex_only_support)
    assert r.status == "fail" and r.failures > 0
    # the interior maximiser only matters for c1 < 0 < c2
    assert "c1- c2+" in r.detail


def test_norm_suite_passes():
    assert norm_suite(50, 20, seed=6).passed


def test_dominance_suite_passes_on_base_model():
    r = dominance_suite(gbm_model(theta=0.1), SimulationGrid(1.0, 25), 300, trials=4, seed=7)
    assert r.passed, r.detail
    assert r.metrics["max_resimulation_error"] <= 1e-9


def test_dominance_suite_unsupported_on_extended():
    m = MarketModel(1.0, Constant(0.0), Constant(0.5), Constant(0.06), Constant(0.2), variant="extended", rho=Constant(0.1), rate=Constant(0.01))
    r = dominance_suite(m, SimulationGrid(1.0, 10), 50, trials=2)
    assert r.status == "unsupported"


def test_moment_suite_passes():
    r = moment_suite(gbm_model(), SimulationGrid(1.0, 25), 400, controls=4, seed=8)
    assert r.passed, r.detail


def test_run_suites_report_and_csv():
    rep = run_suites(gbm_model(), SimulationGrid(1.0, 20), path_count=200, seed=1, suites=("convexity", "norm_bound"), convexity_trials=200)
    assert rep.ok and [r.name for r in rep.results] == ["convexity", "norm_bound"]
    buf = io.StringIO()
    rep.write_csv(buf, {"seed": 1})
    lines = buf.getvalue().splitlines()
    assert lines[1] == "suite,status,checks,failures,invariant,detail" and lines[2].startswith("convexity,pass,200,0")
    assert "PASS" in rep.table()


def test_run_suites_rejects_unknown_name():
    with pytest.raises(ValueError):
        run_suites(gbm_model(), SimulationGrid(1.0, 4), suites=("bogus",))


def test_vertex_only_support_underestimates_interior_case():
    ctx = random_context(np.random.default_rng(9))
    n = ctx.d + 1
    # choose u, v so c1 = -1 and c2 = 1 exactly: the true maximum is 1/4, vertices give 0
    u = np.zeros((n, n))
    u[-1, -1] = -2.0 / (ctx.lam ** 2 * ctx.x_t ** 2)
    v = np.zeros(n)
    v[-1] = 1.0 / (ctx.theta * ctx.x_t)
    fixed = support_function(ctx, u, v) - 0.25
    assert math.isclose(_vertex_only_support(ctx, u, v), fixed, abs_tol=1e-12)
