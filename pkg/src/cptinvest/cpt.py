"""Cumulative prospect theory preferences and their Monte-Carlo evaluation.

Gains and losses relative to a benchmark ``G = F(Y)`` are valued by
distorted (Choquet) expectations of utilities.  On a finite sample the
Choquet integral is computed exactly from order statistics.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Protocol

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InputError, NumericalError, WellPosednessError
from .market import (
    CoefficientFunctional,
    Constant,
    MarketModel,
    ValidationReport,
    Violation,
    random_trajectory,
)
from .paths import PathBundle

__all__ = [
    "PowerUtility",
    "IdentityDistortion",
    "PowerDistortion",
    "TverskyKahnemanDistortion",
    "UtilityPair",
    "DistortionPair",
    "Benchmark",
    "Preferences",
    "CptReport",
    "empirical_choquet",
    "evaluate",
    "wellposedness_bound",
    "terminal_moment_bound",
    "analytic_moment_envelope",
    "loss_benchmark_proxy",
    "validate_preferences",
]

FloatArray = NDArray[np.float64]

BOOTSTRAP_RESAMPLES = 200


class Distortion(Protocol):
    def __call__(self, p: ArrayLike) -> FloatArray: ...


# ---------------------------------------------------------------------------
# built-in families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PowerUtility:
    """``u(z) = scale * z**exponent`` on ``z >= 0``."""

    exponent: float = 0.88
    scale: float = 1.0

    def __call__(self, z):
        return self.scale * np.power(np.asarray(z, dtype=float), self.exponent)


@dataclass(frozen=True)
class IdentityDistortion:
    def __call__(self, p):
        return np.asarray(p, dtype=float) * 1.0


@dataclass(frozen=True)
class PowerDistortion:
    exponent: float

    def __call__(self, p):
        return np.power(np.asarray(p, dtype=float), self.exponent)


@dataclass(frozen=True)
class TverskyKahnemanDistortion:
    """``w(p) = p^d / (p^d + (1-p)^d)^(1/d)``."""

    delta: float

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        d = self.delta
        num = np.power(p, d)
        return num / np.power(num + np.power(1.0 - p, d), 1.0 / d)


# ---------------------------------------------------------------------------
# preference containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UtilityPair:
    """Gain / loss utilities with the gain growth envelope ``k_plus (x^alpha + 1)``."""

    u_plus: Callable[[ArrayLike], FloatArray]
    u_minus: Callable[[ArrayLike], FloatArray]
    k_plus: float = 1.0
    alpha: float = 0.88


@dataclass(frozen=True)
class DistortionPair:
    """Gain / loss distortions with the gain envelope ``g_plus p^gamma``."""

    w_plus: Callable[[ArrayLike], FloatArray]
    w_minus: Callable[[ArrayLike], FloatArray]
    g_plus: float = 1.0
    gamma: float = 1.0


@dataclass(frozen=True)
class Benchmark:
    """Reference point ``G = F(Y)`` of the factor trajectory.

    ``functional`` is evaluated at the horizon on the whole factor path.
    ``theta_star`` is the declared integrability exponent (``G`` has finite
    moment of order ``theta_star * gamma``).
    """

    functional: CoefficientFunctional
    theta_star: float = 2.0

    @classmethod
    def constant(cls, value: float, theta_star: float = 2.0) -> "Benchmark":
        return cls(Constant(float(value)), theta_star)

    @property
    def is_constant(self) -> bool:
        return isinstance(self.functional, Constant)

    def __call__(self, times: FloatArray, y_paths: FloatArray) -> FloatArray:
        """Benchmark per path; ``y_paths`` has shape ``(P, N+1, d)``."""
        y_paths = np.asarray(y_paths, dtype=float)
        return np.asarray(self.functional.evaluate(float(times[-1]), times, y_paths), dtype=float)


@dataclass(frozen=True)
class Preferences:
    utilities: UtilityPair
    distortions: DistortionPair
    benchmark: Benchmark

    @property
    def theta_gamma(self) -> float:
        return self.benchmark.theta_star * self.distortions.gamma

    @property
    def well_posed(self) -> bool:
        return self.theta_gamma > 1.0


# ---------------------------------------------------------------------------
# Choquet integral
# ---------------------------------------------------------------------------


def _check_samples(samples: ArrayLike) -> FloatArray:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise InputError("at least one sample is required")
    if not np.all(np.isfinite(x)):
        raise InputError("samples must be finite")
    if np.any(x < 0):
        raise InputError("samples must be non-negative")
    return x


def empirical_choquet(samples: ArrayLike, w: Distortion) -> float:
    """Distorted expectation ``int_0^inf w(S(t)) dt`` of the empirical law.

    With the samples sorted in decreasing order ``x_(1) >= ... >= x_(n)``
    this equals ``sum_i x_(i) * (w(i/n) - w((i-1)/n))``.  Ties are harmless:
    the sum does not depend on how equal values are ordered.

    >>> empirical_choquet([3.0, 2.0, 1.0], lambda p: p ** 2)
    1.5555555555555556
    """
    x = _check_samples(samples)
    n = x.size
    desc = np.sort(x)[::-1]
    wp = np.asarray(w(np.arange(n + 1) / n), dtype=float)
    return float(np.dot(desc, np.diff(wp)))


def _bootstrap_choquet(desc: FloatArray, order_rank: FloatArray, idx: NDArray[np.int64], w_table: FloatArray) -> float:
    """Choquet value of a resample given by indices into the original sample.

    ``order_rank[j]`` is the position of sample ``j`` in the decreasing sort;
    ``w_table[k] = w(k / n)``.
    """
    n = desc.size
    counts = np.bincount(order_rank[idx], minlength=n)
    cum = np.cumsum(counts)
    prev = cum - counts
    return float(np.dot(desc, w_table[cum] - w_table[prev]))


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CptReport:
    v_plus: float
    v_minus: float
    v: float
    se_plus: float
    se_minus: float
    se: float
    analytic_bound: float
    moment_bound: float
    sample_count: int
    bootstrap: int = BOOTSTRAP_RESAMPLES
    loss_benchmark_proxy: float = math.nan

    CSV_FIELDS = (
        "v_plus", "v_minus", "v", "se_plus", "se_minus", "se",
        "analytic_bound", "moment_bound", "sample_count", "bootstrap", "loss_benchmark_proxy",
    )

    def csv_row(self) -> list[str]:
        d = asdict(self)
        return [format(d[k], ".17g") if isinstance(d[k], float) else str(d[k]) for k in self.CSV_FIELDS]

    def text(self) -> str:
        return "\n".join(
            [
                "CPT evaluation",
                f"  V+            = {self.v_plus:.10g}  (se {self.se_plus:.3g})",
                f"  V-            = {self.v_minus:.10g}  (se {self.se_minus:.3g})",
                f"  V = V+ - V-   = {self.v:.17g}  (se {self.se:.3g})",
                f"  bound on V+   = {self.analytic_bound:.10g}  (terminal moment bound {self.moment_bound:.6g})",
                f"  loss proxy    = {self.loss_benchmark_proxy:.10g}",
                f"  samples       = {self.sample_count}, bootstrap resamples = {self.bootstrap}",
            ]
        )


def wellposedness_bound(prefs: Preferences, moment_bound: float) -> float:
    """Upper bound on ``V+`` uniform over strategies.

    ``moment_bound`` bounds ``E[X_T^(alpha * theta_star)]``.  The tail of the
    distorted survival function is controlled by Chebyshev's inequality,
    which integrates to ``M^gamma / (theta_star gamma - 1)`` on ``[1, inf)``.
    Returns ``g (max(1, k) + k (1 + M^gamma / (theta_star gamma - 1)))``.
    """
    tg = prefs.theta_gamma
    if not tg > 1.0:
        raise WellPosednessError(f"theta_star * gamma = {tg:.6g} must exceed 1")
    if moment_bound < 0 or not math.isfinite(moment_bound):
        raise InputError("moment bound must be finite and non-negative")
    g = prefs.distortions.g_plus
    k = prefs.utilities.k_plus
    gamma = prefs.distortions.gamma
    # for k <= 1 the head of the integral contributes g, otherwise g k
    return g * (max(1.0, k) + k * (1.0 + moment_bound ** gamma / (tg - 1.0)))


def terminal_moment_bound(bundle: PathBundle, prefs: Preferences) -> float:
    """Empirical ``E[X_T^(alpha theta_star)]`` inflated by three standard errors."""
    p = prefs.utilities.alpha * prefs.benchmark.theta_star
    z = np.abs(bundle.terminal_wealth) ** p
    se = z.std(ddof=1) / math.sqrt(z.size) if z.size > 1 else 0.0
    return float(z.mean() + 3 * se)


def analytic_moment_envelope(model: MarketModel, p: float) -> float:
    """Strategy-independent bound on ``E[X_T^p]`` for the exact wealth dynamics.

    For ``p >= 1`` the stochastic exponential is a supermartingale, giving
    ``x^p exp(p th T + p(p-1) lam^2 T / 2)``; for ``p < 1`` Jensen gives
    ``x^p exp(p th T)``.  ``th`` and ``lam`` are the declared bounds.
    """
    th = model.theta.bound
    lam = model.lam.bound
    T = model.horizon
    x = model.initial_wealth
    extra = 0.5 * max(p * p - p, 0.0) * lam * lam * T
    return float(x ** p * math.exp(p * th * T + extra))


def loss_benchmark_proxy(prefs: Preferences, g_samples: ArrayLike) -> float:
    """Choquet estimate of ``int w-(P(u-(G) > y)) dy`` from benchmark samples."""
    g = np.maximum(np.asarray(g_samples, dtype=float), 0.0)
    return empirical_choquet(prefs.utilities.u_minus(g), prefs.distortions.w_minus)


def evaluate(
    bundle: PathBundle,
    prefs: Preferences,
    bootstrap: int = BOOTSTRAP_RESAMPLES,
    moment_bound: float | None = None,
    bootstrap_seed: int | None = None,
) -> CptReport:
    """CPT value of the terminal wealth in ``bundle``.

    ``moment_bound`` defaults to :func:`terminal_moment_bound` of the bundle
    itself; pass a sweep-wide envelope to get a strategy-uniform bound.
    Bootstrap resampling draws from its own stream derived from the bundle
    seed, so reports are deterministic.
    """
    if not prefs.well_posed:
        raise WellPosednessError(f"theta_star * gamma = {prefs.theta_gamma:.6g} must exceed 1")
    xt = bundle.terminal_wealth
    bad = np.flatnonzero(~np.isfinite(xt))
    if bad.size:
        raise NumericalError(f"non-finite terminal wealth on path {int(bad[0])}")
    g = prefs.benchmark(bundle.times, bundle.y_paths)
    g = np.broadcast_to(g, xt.shape)
    gains = np.asarray(prefs.utilities.u_plus(np.maximum(xt - g, 0.0)), dtype=float)
    losses = np.asarray(prefs.utilities.u_minus(np.maximum(g - xt, 0.0)), dtype=float)
    w_plus, w_minus = prefs.distortions.w_plus, prefs.distortions.w_minus
    v_plus = empirical_choquet(gains, w_plus)
    v_minus = empirical_choquet(losses, w_minus)

    n = xt.size
    se_plus = se_minus = se = 0.0
    if bootstrap > 1 and n > 1:
        seed = bundle.seed if bootstrap_seed is None else bootstrap_seed
        rng = np.random.Generator(np.random.Philox(key=np.random.SeedSequence([max(seed, 0), 0xB0075]).generate_state(2, np.uint64)))
        grid = np.arange(n + 1) / n
        tables = (np.asarray(w_plus(grid), dtype=float), np.asarray(w_minus(grid), dtype=float))
        prepared = []
        for sample in (gains, losses):
            order = np.argsort(-sample, kind="stable")
            rank = np.empty(n, dtype=np.int64)
            rank[order] = np.arange(n)
            prepared.append((sample[order], rank))
        reps = np.empty((bootstrap, 2))
        for b in range(bootstrap):
            idx = rng.integers(0, n, n)
            reps[b, 0] = _bootstrap_choquet(prepared[0][0], prepared[0][1], idx, tables[0])
            reps[b, 1] = _bootstrap_choquet(prepared[1][0], prepared[1][1], idx, tables[1])
        se_plus = float(reps[:, 0].std(ddof=1))
        se_minus = float(reps[:, 1].std(ddof=1))
        se = float((reps[:, 0] - reps[:, 1]).std(ddof=1))

    mb = terminal_moment_bound(bundle, prefs) if moment_bound is None else float(moment_bound)
    return CptReport(
        v_plus=v_plus,
        v_minus=v_minus,
        v=v_plus - v_minus,
        se_plus=se_plus,
        se_minus=se_minus,
        se=se,
        analytic_bound=wellposedness_bound(prefs, mb),
        moment_bound=mb,
        sample_count=n,
        bootstrap=bootstrap,
        loss_benchmark_proxy=loss_benchmark_proxy(prefs, g),
    )


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def validate_preferences(
    prefs: Preferences,
    grid_size: int = 1001,
    utility_range: float = 100.0,
    factor_paths: tuple[FloatArray, FloatArray] | None = None,
    model: MarketModel | None = None,
    probe_count: int = 200,
    seed: int = 0,
) -> ValidationReport:
    """Check endpoints, monotonicity, growth envelopes and the benchmark.

    Utilities are sampled on a uniform grid of ``[0, utility_range]`` and
    distortions on ``[0, 1]``.  ``factor_paths = (times, y_paths)`` supplies
    benchmark trajectories; otherwise random ones are drawn.  The loss-side
    benchmark integral is reported in ``notes['loss_benchmark_proxy']``.
    """
    if grid_size < 2:
        raise InputError("grid_size must be >= 2")
    rep = ValidationReport("preferences", grid_size)
    u, w = prefs.utilities, prefs.distortions
    z = np.linspace(0.0, utility_range, grid_size)
    p = np.linspace(0.0, 1.0, grid_size)

    for name, fn in (("u_plus", u.u_plus), ("u_minus", u.u_minus)):
        v0 = float(np.asarray(fn(0.0)))
        if v0 != 0.0:
            rep.violations.append(Violation("endpoint", -1, f"{name}(0) = {v0!r}", v0, 0.0))
        vals = np.asarray(fn(z), dtype=float)
        for j in np.flatnonzero(np.diff(vals) < 0):
            rep.violations.append(Violation("monotone", int(j), f"{name} decreases at z={z[j]:.6g}", vals[j + 1], vals[j]))
    for name, fn in (("w_plus", w.w_plus), ("w_minus", w.w_minus)):
        v0, v1 = float(np.asarray(fn(0.0))), float(np.asarray(fn(1.0)))
        if v0 != 0.0:
            rep.violations.append(Violation("endpoint", -1, f"{name}(0) = {v0!r}", v0, 0.0))
        if v1 != 1.0:
            rep.violations.append(Violation("endpoint", -1, f"{name}(1) = {v1!r}", v1, 1.0))
        vals = np.asarray(fn(p), dtype=float)
        for j in np.flatnonzero(np.diff(vals) < 0):
            rep.violations.append(Violation("monotone", int(j), f"{name} decreases at p={p[j]:.6g}", vals[j + 1], vals[j]))

    up = np.asarray(u.u_plus(z), dtype=float)
    env_u = u.k_plus * (z ** u.alpha + 1.0)
    for j in np.flatnonzero(up > env_u * (1 + 1e-12)):
        rep.violations.append(Violation("utility_envelope", int(j), f"u_plus exceeds k(z^alpha+1) at z={z[j]:.6g}", up[j], env_u[j]))
    wp = np.asarray(w.w_plus(p), dtype=float)
    env_w = w.g_plus * p ** w.gamma
    for j in np.flatnonzero(wp > env_w * (1 + 1e-12)):
        rep.violations.append(Violation("distortion_envelope", int(j), f"w_plus exceeds g p^gamma at p={p[j]:.6g}", wp[j], env_w[j]))

    if not prefs.well_posed:
        rep.violations.append(Violation("wellposedness", -1, "theta_star * gamma must exceed 1", prefs.theta_gamma, 1.0))

    if factor_paths is None:
        rng = np.random.default_rng(seed)
        T = model.horizon if model is not None else 1.0
        y0 = model.initial_factor if model is not None else (0.0,)
        trajs = [random_trajectory(rng, T, y0, points=33) for _ in range(probe_count)]
        times = trajs[0][0]
        y_paths = np.stack([v for _, v in trajs])
    else:
        times, y_paths = factor_paths
    g = np.broadcast_to(prefs.benchmark(times, y_paths), (np.shape(y_paths)[0],))
    for j in np.flatnonzero(g < 0):
        rep.violations.append(Violation("benchmark_nonnegative", int(j), "F(y) < 0", float(g[j]), 0.0))
    if model is not None and model.extended and not prefs.benchmark.is_constant:
        rep.violations.append(Violation("constant_benchmark", -1, "extended variant requires a constant benchmark"))
    proxy = loss_benchmark_proxy(prefs, g)
    rep.notes["loss_benchmark_proxy"] = proxy
    if not math.isfinite(proxy):
        rep.violations.append(Violation("loss_benchmark_finite", -1, "loss-side benchmark integral is not finite", proxy, math.inf))
    rep.notes["theta_gamma"] = prefs.theta_gamma
    return rep
