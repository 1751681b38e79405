"""
Relaxed controls and why they never help
========================================

A relaxed control separates the drift loading ``l`` from the squared
diffusion loading ``m`` subject to ``0 <= l <= sqrt(m) <= 1``.  Enlarging the
strategy set this way makes the coefficient set convex, but with a
non-negative excess return it cannot improve on the ordinary strategy
``phi = sqrt(m)``: multiplying wealth by ``Z = exp(int (sqrt(m) - l) theta dt)``
gives an ordinary wealth path that is at least as large everywhere.
"""

# %%
# The coefficient set at one instant
# ----------------------------------

import numpy as np

from cptinvest import RelaxedControl, SimulationGrid, evaluate, simulate
from cptinvest.reference import gbm_model, s_shaped_preferences
from cptinvest.relaxed import SetContext, dominance_factor, dominance_transform, membership, point_from_lm, support_function

ctx = SetContext(t=0.5, x_t=1.0, nu=[0.0], kappa=[[1.0]], theta=0.05, lam=1.0, bound=1.0)
for l, m in [(0.5, 0.25), (0.2, 0.25), (0.6, 0.25)]:
    r = membership(ctx, point_from_lm(ctx, l, m))
    print(f"(l, m) = ({l}, {m}): inside = {r.inside}")

# %%
# The support function has a closed form.  When the weight on ``m`` is
# negative and the weight on ``l`` positive, the maximiser sits strictly
# inside the parabola ``l = sqrt(m)`` rather than at a corner.

u = np.zeros((2, 2))
u[1, 1] = -2.0  # coefficient -1 on m, since a[x, x] = m / 2 here
v = np.array([0.0, 1.0 / 0.05])  # coefficient 1 on l
print(f"support value: {support_function(ctx, u, v):.4f}  (corners alone give 0)")

# %%
# Lifting a relaxed control
# -------------------------
# Drift loading ``l = 0.2`` with ``m = 0.49`` wastes part of the premium.  The
# lifted strategy invests ``sqrt(m) = 0.7`` and earns it all.

model = gbm_model(theta=0.08, lam=0.25)
grid = SimulationGrid(1.0, 100)
relaxed = simulate(model, RelaxedControl.constant(0.2, 0.49), grid, 20_000, seed=5)
lifted = dominance_transform(relaxed)
z = dominance_factor(relaxed)

print(f"\nZ_T = {z[0, -1]:.6f} (closed form {np.exp(0.5 * 0.08):.6f})")
print(f"X_hat >= X on every path: {bool(np.all(lifted.x_paths >= relaxed.x_paths))}")

prefs = s_shaped_preferences()
print(f"V(l, m)     = {evaluate(relaxed, prefs, bootstrap=0).v: .5f}")
print(f"V(sqrt m)   = {evaluate(lifted, prefs, bootstrap=0).v: .5f}")
