"""Reference markets and preferences used by the verification suites.

These are small, fully specified configurations with known behaviour:
a geometric Brownian motion market, a driftless market paired with
S-shaped prospect-theory preferences, and a pure Brownian factor.
"""

from __future__ import annotations

from .cpt import (
    Benchmark,
    DistortionPair,
    IdentityDistortion,
    PowerUtility,
    Preferences,
    TverskyKahnemanDistortion,
    UtilityPair,
)
from .market import Constant, MarketModel

__all__ = [
    "gbm_model",
    "driftless_model",
    "brownian_factor_model",
    "power_preferences",
    "s_shaped_preferences",
]


def gbm_model(theta: float = 0.05, lam: float = 0.2, horizon: float = 1.0, x0: float = 1.0) -> MarketModel:
    """Constant coefficients with a frozen factor: wealth is a GBM under ``phi = 1``."""
    return MarketModel(
        horizon=horizon,
        nu=Constant(0.0),
        kappa=Constant(0.0),
        theta=Constant(theta),
        lam=Constant(lam),
        initial_wealth=x0,
    )


def driftless_model(lam: float = 0.2, horizon: float = 1.0, x0: float = 1.0) -> MarketModel:
    """``theta = 0``: risk taking earns nothing."""
    return MarketModel(
        horizon=horizon,
        nu=Constant(0.0),
        kappa=Constant(1.0),
        theta=Constant(0.0),
        lam=Constant(lam),
        initial_wealth=x0,
    )


def brownian_factor_model(horizon: float = 1.0) -> MarketModel:
    """``Y`` is a standard Brownian motion; ``theta = lambda = 0`` freeze wealth."""
    return MarketModel(
        horizon=horizon,
        nu=Constant(0.0),
        kappa=Constant(1.0),
        theta=Constant(0.0),
        lam=Constant(0.0),
    )


def power_preferences(exponent: float = 0.88, benchmark: float = 1.0, theta_star: float = 2.0) -> Preferences:
    """Power utilities on both sides, undistorted probabilities, constant benchmark."""
    return Preferences(
        UtilityPair(PowerUtility(exponent), PowerUtility(exponent), k_plus=1.0, alpha=exponent),
        DistortionPair(IdentityDistortion(), IdentityDistortion(), g_plus=1.0, gamma=1.0),
        Benchmark.constant(benchmark, theta_star),
    )


def s_shaped_preferences(benchmark: float = 1.0, theta_star: float = 2.0) -> Preferences:
    """Tversky-Kahneman parameters: exponent 0.88, loss aversion 2.25, distortions 0.61 / 0.69.

    ``w(p) <= p^delta`` for the inverse-S family, so ``g = 1`` and
    ``gamma = 0.61`` are honest growth constants.
    """
    return Preferences(
        UtilityPair(PowerUtility(0.88), PowerUtility(0.88, 2.25), k_plus=1.0, alpha=0.88),
        DistortionPair(TverskyKahnemanDistortion(0.61), TverskyKahnemanDistortion(0.69), g_plus=1.0, gamma=0.61),
        Benchmark.constant(benchmark, theta_star),
    )
