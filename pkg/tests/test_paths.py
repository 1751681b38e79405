import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cptinvest import (
    Constant,
    MarketModel,
    Policy,
    RelaxedControl,
    SimulationGrid,
    constant_policy,
    holder_increment_check,
    resample_with_crn,
    simulate,
    sup_norm_stats,
)
from cptinvest.errors import ControlError, InputError
from cptinvest.paths import brownian_increments, integrate, read_bundle_csv, write_bundle_csv
from cptinvest.reference import brownian_factor_model, gbm_model

from oracles import gbm_sup_moment


def factor_model(**kw):
    return MarketModel(1.0, Constant(0.1), Constant(0.5), Constant(0.08), Constant(0.25), **kw)


def zero_sum_increments(n_steps, amp=0.1):
    dw = np.tile([amp, -amp], n_steps // 2)[None, :]
    return dw


# --- simulate examples -----------------------------------------------------------


def test_riskless_policy_keeps_wealth_constant():
    b = simulate(factor_model(initial_wealth=2.5), constant_policy(0.0), SimulationGrid(1.0, 50), 300, 1)
    assert np.all(b.x_paths == 2.5)


def test_exact_scheme_closed_form_ordinary():
    grid = SimulationGrid(1.0, 64)
    dw = zero_sum_increments(64)
    db = np.zeros((1, 64, 1))
    _, x, *_ = integrate(gbm_model(), constant_policy(1.0), grid, db, dw)
    assert x[0, -1] == pytest.approx(math.exp(0.05 - 0.02), rel=1e-13)


def test_exact_scheme_closed_form_relaxed():
    grid = SimulationGrid(1.0, 64)
    _, x, *_ = integrate(gbm_model(theta=0.1), RelaxedControl.constant(0.0, 1.0), grid, np.zeros((1, 64, 1)), zero_sum_increments(64))
    assert x[0, -1] == pytest.approx(math.exp(-0.02), rel=1e-13)


def test_relaxed_violation_names_step():
    grid = SimulationGrid(1.0, 10)
    ctrl = RelaxedControl(lambda t, y, x: 0.6 if t > 0.45 else 0.5, lambda t, y, x: 0.25)
    with pytest.raises(ControlError) as err:
        simulate(gbm_model(), ctrl, grid, 5, 0)
    assert err.value.step == 5 and "step 5" in str(err.value)


def test_relaxed_within_clamp_tolerance_accepted():
    ctrl = RelaxedControl.constant(0.5 + 5e-13, 0.25)
    b = simulate(gbm_model(), ctrl, SimulationGrid(1.0, 4), 3, 0)
    assert np.all(b.drift_loading <= 0.5)


def test_policy_output_clamped():
    b = simulate(gbm_model(), Policy(lambda t, y, x: 3.0), SimulationGrid(1.0, 4), 3, 0)
    assert np.all(b.drift_loading == 1.0)


def test_initial_state():
    b = simulate(factor_model(initial_wealth=1.3, initial_factor=(0.4,)), constant_policy(0.5), SimulationGrid(1.0, 8), 20, 0)
    assert np.all(b.x_paths[:, 0] == 1.3) and np.all(b.y_paths[:, 0, 0] == 0.4)


# --- invariants ------------------------------------------------------------------


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 4]))
def test_determinism_independent_of_workers(seed, workers):
    grid = SimulationGrid(1.0, 16)
    a = simulate(factor_model(), constant_policy(0.6), grid, 2500, seed)
    b = simulate(factor_model(), constant_policy(0.6), grid, 2500, seed, workers=workers)
    assert a.identical_to(b)


def test_paths_are_prefix_stable():
    grid = SimulationGrid(1.0, 16)
    small = simulate(factor_model(), constant_policy(0.6), grid, 700, 9)
    big = simulate(factor_model(), constant_policy(0.6), grid, 3000, 9)
    assert np.array_equal(small.x_paths, big.x_paths[:700])


def test_increment_offsets_consistent():
    grid = SimulationGrid(1.0, 8)
    whole = brownian_increments(3, grid, 2100, 2)
    part = brownian_increments(3, grid, 1000, 2, first_path=1050)
    assert np.array_equal(whole[1050:2050], part)


def test_positivity_exact_scheme():
    b = simulate(gbm_model(theta=0.0, lam=1.0, horizon=3.0), constant_policy(1.0), SimulationGrid(3.0, 30), 4000, 2)
    assert np.all(b.x_paths > 0)


def test_relaxed_ordinary_consistency():
    pol = Policy(lambda t, y, x: 0.3 + 0.4 * np.tanh(y[:, 0]))
    grid = SimulationGrid(1.0, 40)
    for scheme in ("exact_exponential", "euler"):
        a = simulate(factor_model(), pol, grid, 500, 4, scheme)
        b = simulate(factor_model(), RelaxedControl.from_policy(pol), grid, 500, 4, scheme)
        assert a.identical_to(b)


def test_euler_converges_to_exact():
    gaps = []
    for n in (64, 128, 256, 512):
        grid = SimulationGrid(1.0, n)
        e = simulate(gbm_model(), constant_policy(1.0), grid, 2000, 0, "euler")
        x = simulate(gbm_model(), constant_policy(1.0), grid, 2000, 0, "exact_exponential")
        gaps.append(np.abs(e.x_paths - x.x_paths).max())
    order = -np.polyfit(np.log([64, 128, 256, 512]), np.log(gaps), 1)[0]
    assert order >= 0.5 - 0.1 and gaps[-1] < gaps[0]


def test_extended_feedback_into_factor():
    m = MarketModel(1.0, Constant(0.0), Constant(0.0), Constant(0.06), Constant(0.2), variant="extended", rho=Constant(0.3), rate=Constant(0.02))
    b = simulate(m, constant_policy(0.7), SimulationGrid(1.0, 50), 200, 3)
    np.testing.assert_allclose(b.y_paths[:, :, 0], 0.3 * (b.x_paths - 1.0), atol=1e-13)


def test_extended_drift_includes_rate():
    m = MarketModel(1.0, Constant(0.0), Constant(0.0), Constant(0.06), Constant(0.0), variant="extended", rho=Constant(0.0), rate=Constant(0.02))
    b = simulate(m, constant_policy(0.5), SimulationGrid(1.0, 50), 3, 0)
    assert b.terminal_wealth[0] == pytest.approx(math.exp(0.5 * 0.04 + 0.02), rel=1e-13)


# --- common random numbers -------------------------------------------------------


def test_crn_same_control_identical():
    b = simulate(factor_model(), constant_policy(0.4), SimulationGrid(1.0, 20), 300, 5)
    assert resample_with_crn(b, constant_policy(0.4)).identical_to(b)


def test_crn_base_variant_factor_unchanged():
    b1 = simulate(factor_model(), constant_policy(1.0), SimulationGrid(1.0, 20), 300, 5)
    b0 = resample_with_crn(b1, constant_policy(0.0))
    assert np.array_equal(b0.y_paths, b1.y_paths) and not np.array_equal(b0.x_paths, b1.x_paths)


def test_crn_non_anticipative_policies():
    grid = SimulationGrid(1.0, 20)
    p1 = Policy(lambda t, y, x: 0.5)
    p2 = Policy(lambda t, y, x: 0.5 if t < 0.5 else 0.9)
    b1 = simulate(factor_model(), p1, grid, 300, 5)
    b2 = resample_with_crn(b1, p2)
    half = 11  # grid points t <= T/2
    assert np.array_equal(b1.x_paths[:, :half], b2.x_paths[:, :half])
    assert not np.array_equal(b1.x_paths, b2.x_paths)


# --- moments and Hoelder scaling -------------------------------------------------


def frozen_model(x0=1.0):
    return MarketModel(1.0, Constant(0.0), Constant(0.0), Constant(0.0), Constant(0.0), initial_wealth=x0)


def test_sup_norm_constant_paths():
    rep = sup_norm_stats(simulate(frozen_model(), constant_policy(0.0), SimulationGrid(1.0, 10), 50, 0), 2.0)
    assert rep.estimate == 1.0 and rep.se == 0.0


def test_sup_norm_cube():
    rep = sup_norm_stats(simulate(frozen_model(2.0), constant_policy(0.0), SimulationGrid(1.0, 10), 50, 0), 3.0)
    assert rep.estimate == pytest.approx(8.0, rel=1e-15)


def test_sup_norm_against_refined_grid():
    model = gbm_model(theta=0.0, lam=0.2)
    rep = sup_norm_stats(simulate(model, constant_policy(1.0), SimulationGrid(1.0, 200), 2000, 8), 2.0)
    ref, ref_se = gbm_sup_moment(0.0, 0.2, 1.0, 1.0, 2000, 2000, 2.0, seed=123)
    assert abs(rep.estimate - ref) <= 3 * math.hypot(rep.se, ref_se)


def test_sup_norm_rejects_nonpositive_exponent():
    b = simulate(frozen_model(), constant_policy(0.0), SimulationGrid(1.0, 2), 2, 0)
    with pytest.raises(InputError):
        sup_norm_stats(b, 0.0)


def test_holder_frozen():
    rep = holder_increment_check(frozen_model(), constant_policy(0.5), SimulationGrid(1.0, 64), 100, 0, 2.0, [1, 2, 4])
    assert np.all(rep.moments == 0)


def test_holder_brownian_factor():
    rep = holder_increment_check(brownian_factor_model(), constant_policy(0.0), SimulationGrid(1.0, 256), 2000, 1, 2.0, [1, 2, 4, 8, 16, 32])
    assert abs(rep.slope - 1.0) <= 0.1
    np.testing.assert_allclose(rep.moments, rep.lag_times, rtol=0.05)


def test_holder_gbm_wealth():
    rep = holder_increment_check(gbm_model(), constant_policy(1.0), SimulationGrid(1.0, 256), 2000, 2, 4.0, [1, 2, 4, 8, 16, 32])
    assert rep.slope >= 0.9 * 2.0


def test_holder_needs_three_lags():
    with pytest.raises(InputError):
        holder_increment_check(gbm_model(), constant_policy(1.0), SimulationGrid(1.0, 16), 10, 0, 2.0, [1, 2])


# --- export ----------------------------------------------------------------------


def test_csv_round_trip_bit_exact():
    m = MarketModel(0.75, Constant(0.1), Constant(0.5), Constant(0.08), Constant(0.25), initial_factor=(0.1,))
    b = simulate(m, constant_policy(0.8), SimulationGrid(0.75, 7), 13, 21)
    buf = io.StringIO()
    write_bundle_csv(b, buf, {"note": "two\nlines"})
    text = buf.getvalue()
    assert text.splitlines()[0].startswith("# seed: 21")
    assert "path_id,step,t,y_1,x" in text
    back = read_bundle_csv(io.StringIO(text))
    assert back.identical_to(b) and back.seed == 21 and back.grid == b.grid
