"""
Searching a policy family
=========================

The optimiser searches a finite-dimensional family of strategies with all
candidates simulated on the same seed.  The reported optimum is the best
member found within the family, and it is re-evaluated on a fresh seed to
expose selection bias.  No optimality gap against the true value is claimed.
"""

# %%
# A time-varying family on a factor-driven market
# -----------------------------------------------
# The excess return depends smoothly on a mean-reverting factor and the
# volatility on the running maximum of that factor.

from cptinvest import Affine, Constant, MarketModel, PolicyFamily, RunningExtremum, SimulationGrid, SmoothBounded, optimize
from cptinvest.reference import power_preferences, s_shaped_preferences

model = MarketModel(
    horizon=1.0,
    nu=Affine(0.0, -0.5, -1.0, 1.0),
    kappa=Constant(0.3),
    theta=SmoothBounded(center=0.06, amplitude=0.04, slope=2.0),
    lam=RunningExtremum("max", scale=0.1, offset=0.15, lower=0.15, upper=0.3),
)
grid = SimulationGrid(1.0, 50)

family = PolicyFamily.piecewise(model.horizon, 4)
result = optimize(family, model, power_preferences(), grid, path_count=4000, seed=1, budget=40, method="nelder_mead")
print(result.summary())

# %%
# The trace shows the incumbent, which never decreases.

for entry in result.trace[:: max(1, len(result.trace) // 8)]:
    print(f"iter {entry.iteration:3d}: value {entry.value: .5f}, incumbent {entry.incumbent: .5f}")

# %%
# Three methods, one answer
# -------------------------
# On the driftless market with loss-averse preferences every method should
# settle on the riskless strategy.

from cptinvest.reference import driftless_model

for method, budget in (("grid_refine", 25), ("nelder_mead", 60), ("cross_entropy", 150)):
    res = optimize(PolicyFamily.constant(), driftless_model(), s_shaped_preferences(), grid, 5000, seed=7, budget=budget, method=method, out_of_sample=False)
    print(f"{method:14s} phi = {res.best_parameters[0]:.4f}  V = {res.best_value.v: .5f}  ({res.evaluations} evaluations)")
