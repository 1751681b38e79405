"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test records one ``CRITERION n: PASS|FAIL`` line (shown in the pytest
terminal summary) and then asserts the same outcome.
"""

import math
import time

import numpy as np

import conftest
from cptinvest import (
    Affine,
    Benchmark,
    Constant,
    DistortionPair,
    IdentityDistortion,
    MarketModel,
    PolicyFamily,
    PowerDistortion,
    PowerUtility,
    Preferences,
    RunningExtremum,
    SimulationGrid,
    SmoothBounded,
    TverskyKahnemanDistortion,
    UtilityPair,
    constant_policy,
    empirical_choquet,
    evaluate,
    holder_increment_check,
    optimize,
    simulate,
)
from cptinvest.cli import EXIT_PREFS, main
from cptinvest.cpt import analytic_moment_envelope
from cptinvest.reference import brownian_factor_model, driftless_model, gbm_model, power_preferences, s_shaped_preferences
from cptinvest.verify import convexity_suite, dominance_suite, moment_suite, support_suite

from oracles import choquet_step_integral, lognormal_cpt


def record(number: int, ok: bool, elapsed: float, budget: float, detail: str) -> None:
    within = elapsed < budget
    status = "PASS" if ok and within else "FAIL"
    line = f"CRITERION {number}: {status}  {detail}  [{elapsed:.2f}s / budget {budget:g}s]"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line
    assert within, line


def bounded_factor_model(variant="base"):
    kw = dict(variant="extended", rho=Constant(0.2), rate=Constant(0.01)) if variant == "extended" else {}
    return MarketModel(
        1.0,
        Affine(0.0, -0.5, -1.0, 1.0),
        Constant(0.3),
        SmoothBounded(center=0.06, amplitude=0.04, slope=2.0),
        RunningExtremum("max", scale=0.1, offset=0.15, lower=0.15, upper=0.3),
        **kw,
    )


def test_criterion_1_choquet_oracle():
    rng = np.random.default_rng(2024)
    distortions = [IdentityDistortion(), PowerDistortion(2.0), PowerDistortion(0.5), TverskyKahnemanDistortion(0.61), TverskyKahnemanDistortion(0.69)]
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 1001))
        x = rng.lognormal(0.0, 1.0, n) * (rng.uniform(size=n) > 0.1)
        if rng.uniform() < 0.3:
            x = np.round(x, 1)  # ties
        for w in distortions:
            got, ref = empirical_choquet(x, w), choquet_step_integral(x, w)
            rel = abs(got - ref) / max(abs(ref), 1e-300) if ref != 0 else abs(got)
            worst = max(worst, rel)
    elapsed = time.perf_counter() - start
    record(1, worst <= 1e-12, elapsed, 5, f"max relative error {worst:.3g} (tol 1e-12)")


def test_criterion_2_lognormal_oracle():
    start = time.perf_counter()
    bundle = simulate(gbm_model(), constant_policy(1.0), SimulationGrid(1.0, 100), 100_000, 42)
    rep = evaluate(bundle, power_preferences())
    _, _, v_ref = lognormal_cpt(0.05, 0.2, 1.0, 1.0, 1.0, 0.88)
    elapsed = time.perf_counter() - start
    z = abs(rep.v - v_ref) / rep.se
    record(2, z <= 3.0, elapsed, 30, f"V = {rep.v:.6g}, quadrature {v_ref:.6g}, |diff|/SE = {z:.3g} (tol 3)")


def test_criterion_3_dominance():
    start = time.perf_counter()
    r = dominance_suite(gbm_model(theta=0.08, lam=0.25), SimulationGrid(1.0, 50), 2000, trials=20, seed=3)
    elapsed = time.perf_counter() - start
    record(3, r.passed and r.failures == 0 and r.checks == 20, elapsed, 60, f"{r.checks - r.failures}/{r.checks} trials dominate {r.detail}")


def test_criterion_4_convexity():
    start = time.perf_counter()
    r = convexity_suite(10_000, tol=1e-10, seed=4)
    elapsed = time.perf_counter() - start
    record(4, r.passed and r.failures == 0 and r.checks == 10_000, elapsed, 10, f"{r.failures} failures in {r.checks} combinations (both variants)")


def test_criterion_5_support_function():
    start = time.perf_counter()
    r = support_suite(1000, 1000, seed=5)
    elapsed = time.perf_counter() - start
    record(5, r.passed and r.checks == 1000, elapsed, 60, f"{r.failures} disagreements in {r.checks} probes on a 10^6-point grid {r.detail}")


def test_criterion_6_wellposedness(tmp_path):
    start = time.perf_counter()
    model = bounded_factor_model()
    prefs = Preferences(
        UtilityPair(PowerUtility(0.88), PowerUtility(0.88, 2.25), k_plus=1.0, alpha=0.88),
        DistortionPair(PowerDistortion(1.0), PowerDistortion(1.0), g_plus=1.0, gamma=1.0),
        Benchmark.constant(1.0, theta_star=1.5),
    )
    g, k, gamma, tg = 1.0, 1.0, 1.0, 1.5
    # strategy-independent moment envelope for E[X_T^(alpha theta_star)]
    m_x = analytic_moment_envelope(model, 0.88 * 1.5)
    bound = g * (1 + k * (1 + m_x ** gamma / (tg - 1)))
    rng = np.random.default_rng(6)
    family = PolicyFamily.piecewise(1.0, 4)
    grid = SimulationGrid(1.0, 50)
    worst = -math.inf
    ok = True
    for j in range(10):
        bundle = simulate(model, family.policy(rng.uniform(0, 1, 4)), grid, 5000, 60 + j)
        rep = evaluate(bundle, prefs, bootstrap=100, moment_bound=m_x)
        worst = max(worst, rep.v_plus - bound - 3 * rep.se_plus)
        ok &= rep.v_plus <= bound + 3 * rep.se_plus
    codes = []
    for theta_star in ("1.0", "0.9"):
        cfg = tmp_path / f"ill_{theta_star}.ini"
        cfg.write_text(
            "[model]\nhorizon = 1.0\nnu = constant value=0\nkappa = constant value=0.3\n"
            "theta = constant value=0.05\nlambda = constant value=0.2\n"
            f"[preferences]\nw_plus = identity\nw_minus = identity\ngamma = 1.0\ntheta_star = {theta_star}\n"
            "[grid]\nsteps = 10\npaths = 100\n"
        )
        codes.append(main(["evaluate", "--config", str(cfg), "--out", str(tmp_path)]))
    ok &= all(c == EXIT_PREFS for c in codes)
    elapsed = time.perf_counter() - start
    record(6, bool(ok), elapsed, 120, f"B = {bound:.6g}, max(v+ - B - 3SE) = {worst:.3g}; exit codes for theta*gamma <= 1: {codes}")


def test_criterion_7_moment_envelope():
    start = time.perf_counter()
    r = moment_suite(bounded_factor_model(), SimulationGrid(1.0, 100), 2000, controls=10, exponents=(1.0, 2.0, 4.0), seed=7)
    elapsed = time.perf_counter() - start
    ratios = ", ".join(f"{k}={v:.3g}" for k, v in r.metrics.items())
    record(7, r.passed, elapsed, 60, f"max/median ratios {ratios} (limit 10)")


def test_criterion_8_holder_scaling():
    start = time.perf_counter()
    lags = [1, 2, 4, 8, 16, 32]
    bm = holder_increment_check(brownian_factor_model(), constant_policy(0.0), SimulationGrid(1.0, 256), 4000, 8, 2.0, lags)
    gbm = holder_increment_check(gbm_model(), constant_policy(1.0), SimulationGrid(1.0, 256), 4000, 9, 4.0, lags)
    elapsed = time.perf_counter() - start
    ok = abs(bm.slope - 1.0) <= 0.1 and gbm.slope >= 1.8
    record(8, ok, elapsed, 60, f"Brownian factor eta=2 slope {bm.slope:.4g} (1 +- 0.1); GBM eta=4 slope {gbm.slope:.4g} (>= 1.8)")


def test_criterion_9_scheme_consistency():
    start = time.perf_counter()
    model = gbm_model()
    gaps = []
    for n in (64, 128, 256, 512):
        grid = SimulationGrid(1.0, n)
        euler = simulate(model, constant_policy(1.0), grid, 20_000, 42, "euler")
        exact = simulate(model, constant_policy(1.0), grid, 20_000, 42, "exact_exponential")
        gaps.append(float(np.max(np.abs(euler.terminal_wealth - exact.terminal_wealth))))
    ratios = [b / a for a, b in zip(gaps, gaps[1:])]
    elapsed = time.perf_counter() - start
    ok = all(0.5 * 0.7 <= r <= 0.5 * 1.3 for r in ratios)
    record(9, ok, elapsed, 60, "max gaps " + ", ".join(f"{g:.3g}" for g in gaps) + "; ratios " + ", ".join(f"{r:.3f}" for r in ratios) + " (target 0.5 +- 30%)")


def test_criterion_10_optimizer():
    start = time.perf_counter()
    kw = dict(
        family=PolicyFamily.constant(),
        model=driftless_model(),
        prefs=s_shaped_preferences(),
        grid=SimulationGrid(1.0, 50),
        path_count=5000,
        seed=7,
        bootstrap=50,
    )
    budgets = {"grid_refine": 25, "nelder_mead": 60, "cross_entropy": 150}
    results = {m: optimize(method=m, budget=b, **kw) for m, b in budgets.items()}
    again = {m: optimize(method=m, budget=b, **kw) for m, b in budgets.items()}
    exact = all(
        np.array_equal(results[m].best_parameters, again[m].best_parameters)
        and results[m].trace == again[m].trace
        and results[m].best_value == again[m].best_value
        and results[m].out_of_sample == again[m].out_of_sample
        for m in budgets
    )
    phis = {m: float(r.best_parameters[0]) for m, r in results.items()}
    spread = max(phis.values()) - min(phis.values())
    elapsed = time.perf_counter() - start
    detail = ", ".join(f"{m} phi={p:.4g}" for m, p in phis.items())
    record(10, exact and spread <= 0.02, elapsed, 300, f"bit-exact reruns: {exact}; {detail}; spread {spread:.3g} (tol 0.02)")

