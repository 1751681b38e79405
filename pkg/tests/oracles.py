"""Independent reference computations used by the tests.

Nothing here imports the library; each oracle recomputes a quantity from
its definition by a different route than the implementation under test.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, stats


def choquet_step_integral(samples, w) -> float:
    """``int_0^inf w(S(t)) dt`` for the empirical survival function ``S``.

    ``S`` is piecewise constant between consecutive distinct sample values,
    so the integral is a finite sum of rectangle areas.
    """
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    levels = np.concatenate([[0.0], np.unique(x[x > 0])])
    # number of samples strictly above each left edge
    above = n - np.searchsorted(np.sort(x), levels[:-1], side="right")
    weights = np.array([float(w(c / n)) for c in above])
    return float(np.sum(np.diff(levels) * weights))


def lognormal_cpt(theta: float, lam: float, horizon: float, x0: float, benchmark: float, exponent: float, loss_scale: float = 1.0):
    """``E[(X - G)_+^a] - k E[(X - G)_-^a]`` for lognormal ``X`` by adaptive quadrature.

    ``X = x0 exp((theta - lam^2/2) T + lam sqrt(T) Z)`` with ``Z`` standard
    normal; returns ``(gain, loss, value)``.  The normal density is below
    1e-340 beyond 40 standard deviations, so the tails are cut there.
    """
    mu = math.log(x0) + (theta - 0.5 * lam * lam) * horizon
    sd = lam * math.sqrt(horizon)
    z0 = (math.log(benchmark) - mu) / sd

    def wealth(z):
        return math.exp(mu + sd * z)

    gain, _ = integrate.quad(lambda z: (wealth(z) - benchmark) ** exponent * stats.norm.pdf(z), z0, 40.0, epsabs=1e-13, epsrel=1e-12, limit=200)
    loss, _ = integrate.quad(lambda z: (benchmark - wealth(z)) ** exponent * stats.norm.pdf(z), -40.0, z0, epsabs=1e-13, epsrel=1e-12, limit=200)
    loss *= loss_scale
    return gain, loss, gain - loss


def gbm_sup_moment(theta: float, lam: float, horizon: float, x0: float, steps: int, paths: int, exponent: float, seed: int):
    """``E[max_grid X^p]`` for a GBM from an exact simulation on its own grid.

    Returns ``(estimate, standard_error)``.
    """
    rng = np.random.default_rng(seed)
    dt = horizon / steps
    est = np.empty(paths)
    chunk = 500
    for lo in range(0, paths, chunk):
        n = min(chunk, paths - lo)
        z = rng.standard_normal((n, steps))
        logx = math.log(x0) + np.cumsum((theta - 0.5 * lam * lam) * dt + lam * math.sqrt(dt) * z, axis=1)
        mx = np.maximum(logx.max(axis=1), math.log(x0))
        est[lo : lo + n] = np.exp(exponent * mx)
    return float(est.mean()), float(est.std(ddof=1) / math.sqrt(paths))


def base_set_point(kappa, nu, lam: float, theta: float, x: float, l: float, m: float):
    """``(a, b)`` of the base coefficient set written out entry by entry."""
    kappa = np.atleast_2d(np.asarray(kappa, dtype=float))
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    d = nu.size
    a = np.zeros((d + 1, d + 1))
    for i in range(d):
        for j in range(d):
            a[i, j] = 0.5 * sum(kappa[i, k] * kappa[j, k] for k in range(d))
    a[d, d] = 0.5 * m * lam * lam * x * x
    b = np.zeros(d + 1)
    b[:d] = nu
    b[d] = l * theta * x
    return a, b


def extended_set_point(kappa: float, nu: float, lam: float, theta: float, rate: float, rho: float, x: float, l: float, m: float):
    """``(a, b)`` of the extended (wealth-feedback) coefficient set."""
    diff = 0.5 * m * lam * lam * x * x
    a = np.array([[0.5 * kappa * kappa + rho * rho * diff, rho * diff], [rho * diff, diff]])
    drift = l * (theta - rate) * x + rate * x
    b = np.array([nu + rho * drift, drift])
    return a, b


def grid_max_affine(c1: float, c2: float, points: int = 1000) -> float:
    """Brute-force ``max c1 m + c2 l`` over ``(m, l)`` pairs with ``0 <= l <= sqrt(m) <= 1``.

    Uses a uniform grid in ``m`` and, for each ``m``, a uniform grid in ``l``.
    """
    m = np.linspace(0.0, 1.0, points)[:, None]
    frac = np.linspace(0.0, 1.0, points)[None, :]
    return float((c1 * m + c2 * frac * np.sqrt(m)).max())
