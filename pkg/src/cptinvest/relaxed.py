"""Geometry of the relaxed coefficient sets and the dominance transform.

At time ``t`` and for given factor / wealth paths, the set of admissible
diffusion-drift pairs ``(a, b)`` of the joint process ``(Y, X)`` is
parametrised by ``0 <= m <= 1`` and ``0 <= l <= sqrt(m)``.  In the base
model::

    a = [[kappa kappa^T / 2, 0], [0, m lam^2 x^2 / 2]],   b = [nu, l theta x]

and in the extended (wealth-feedback) model, with ``v = (rho, 1)`` and
``theta_r = theta - r``::

    a = kappa^2 E / 2 + m lam^2 x^2 v v^T / 2,   b = (nu, 0) + (l x theta_r + r x) v

Every variable entry is affine in ``(m, l)``, so support functions reduce to
maximising ``c1 m + c2 l`` over the two-parameter set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InputError, ModelValidationError, PreconditionError, UnsupportedError
from .market import MarketModel, coefficient_at
from .paths import PathBundle, Policy, RelaxedControl

__all__ = [
    "PSD_TOL",
    "SetContext",
    "ControlSetPoint",
    "MembershipResult",
    "point_from_lm",
    "membership",
    "support_function",
    "maximize_affine_lm",
    "convexity_witness",
    "norm_bound",
    "point_norm",
    "dominance_factor",
    "dominance_transform",
    "DominatingPolicy",
]

FloatArray = NDArray[np.float64]
PSD_TOL = 1e-12


@dataclass(frozen=True)
class SetContext:
    """Coefficient values fixing the set at one ``(t, x|[0,t], y|[0,t])``.

    Build it from a model with :meth:`at`, or directly from values when
    probing the geometry.  ``bound`` is the model's coefficient sup-norm
    ``M`` used by :func:`norm_bound`.
    """

    t: float
    x_t: float
    nu: FloatArray
    kappa: FloatArray
    theta: float
    lam: float
    bound: float
    variant: str = "base"
    rho: float = 0.0
    rate: float = 0.0

    def __post_init__(self):
        nu = np.atleast_1d(np.asarray(self.nu, dtype=float))
        kappa = np.asarray(self.kappa, dtype=float)
        if kappa.ndim == 0:
            kappa = kappa.reshape(1, 1)
        if kappa.shape != (nu.size, nu.size):
            raise InputError("kappa and nu dimensions disagree")
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "kappa", kappa)
        if self.variant == "extended" and nu.size != 1:
            raise InputError("extended variant is one-dimensional")

    @property
    def d(self) -> int:
        return self.nu.size

    @property
    def extended(self) -> bool:
        return self.variant == "extended"

    @classmethod
    def at(cls, model: MarketModel, t: float, times: ArrayLike, y_path: ArrayLike, x_path: ArrayLike) -> "SetContext":
        """Evaluate the model coefficients on the given paths restricted to ``[0, t]``."""
        times = np.asarray(times, dtype=float)
        x_path = np.asarray(x_path, dtype=float)
        x_t = float(np.interp(t, times, x_path))
        kw = {}
        if model.extended:
            kw = dict(
                rho=coefficient_at(model, "rho", t, times, x_path),
                rate=coefficient_at(model, "rate", t, times, y_path),
            )
        return cls(
            t=t,
            x_t=x_t,
            nu=coefficient_at(model, "nu", t, times, y_path),
            kappa=coefficient_at(model, "kappa", t, times, y_path),
            theta=coefficient_at(model, "theta", t, times, y_path),
            lam=coefficient_at(model, "lambda", t, times, y_path),
            bound=model.coefficient_bound,
            variant=model.variant,
            **kw,
        )

    # affine structure: point(m, l) = fixed + m * A_m + l * B_l  (a and b parts)
    def _structure(self):
        d = self.d
        n = d + 1
        x = self.x_t
        a0 = np.zeros((n, n))
        am = np.zeros((n, n))
        b0 = np.zeros(n)
        bl = np.zeros(n)
        if not self.extended:
            a0[:d, :d] = 0.5 * self.kappa @ self.kappa.T
            am[d, d] = 0.5 * self.lam ** 2 * x ** 2
            b0[:d] = self.nu
            bl[d] = self.theta * x
        else:
            vec = np.array([self.rho, 1.0])
            a0[0, 0] = 0.5 * self.kappa[0, 0] ** 2
            am[:] = 0.5 * self.lam ** 2 * x ** 2 * np.outer(vec, vec)
            b0[:] = np.array([self.nu[0], 0.0]) + self.rate * x * vec
            bl[:] = x * (self.theta - self.rate) * vec
        return a0, am, b0, bl


@dataclass(frozen=True)
class ControlSetPoint:
    """A diffusion-drift pair ``(a, b)``; ``a`` symmetric of size ``d + 1``."""

    a: FloatArray
    b: FloatArray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or b.shape != (a.shape[0],):
            raise InputError(f"incompatible shapes a{a.shape}, b{b.shape}")
        if not np.allclose(a, a.T, rtol=0, atol=PSD_TOL):
            raise InputError("a must be symmetric")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def psd(self) -> bool:
        return bool(np.linalg.eigvalsh(self.a).min() >= -PSD_TOL)

    def combine(self, other: "ControlSetPoint", mu: float) -> "ControlSetPoint":
        return ControlSetPoint(mu * self.a + (1 - mu) * other.a, mu * self.b + (1 - mu) * other.b)


@dataclass(frozen=True)
class MembershipResult:
    inside: bool
    l: float
    m: float
    residual: float


def point_from_lm(ctx: SetContext, l: float, m: float) -> ControlSetPoint:
    """The set element with coordinates ``(l, m)`` (no admissibility check)."""
    a0, am, b0, bl = ctx._structure()
    return ControlSetPoint(a0 + m * am, b0 + l * bl)


def membership(ctx: SetContext, point: ControlSetPoint, tol: float = 1e-9) -> MembershipResult:
    """Recover ``(l, m)`` from ``point`` and decide whether it lies in the set.

    A coordinate whose denominator vanishes (``lam x = 0`` for ``m``,
    ``theta x = 0`` -- ``(theta - r) x`` in the extended model -- for ``l``)
    is set to zero.  ``residual`` is the largest entrywise gap between the
    point and the set element rebuilt from the recovered coordinates.
    """
    n = ctx.d + 1
    if point.a.shape != (n, n):
        raise InputError(f"point has dimension {point.a.shape[0]}, context expects {n}")
    x = ctx.x_t
    k = n - 1
    lam_x2 = ctx.lam ** 2 * x ** 2
    m = 2.0 * point.a[k, k] / lam_x2 if lam_x2 != 0 else 0.0
    if ctx.extended:
        denom = (ctx.theta - ctx.rate) * x
        l = (point.b[k] - ctx.rate * x) / denom if denom != 0 else 0.0
    else:
        denom = ctx.theta * x
        l = point.b[k] / denom if denom != 0 else 0.0
    rebuilt = point_from_lm(ctx, l, m)
    residual = float(max(np.abs(point.a - rebuilt.a).max(), np.abs(point.b - rebuilt.b).max()))
    inside = (
        residual <= tol
        and -tol <= m <= 1 + tol
        and -tol <= l <= math.sqrt(max(m, 0.0)) + tol
        and point.psd
    )
    return MembershipResult(bool(inside), float(l), float(m), residual)


def maximize_affine_lm(c1: float, c2: float) -> tuple[float, float, float]:
    """Maximise ``c1 m + c2 l`` over ``0 <= m <= 1, 0 <= l <= sqrt(m)``.

    Returns ``(value, m, l)``.  For ``c2 > 0`` the best ``l`` is ``sqrt(m)``
    and the objective ``c1 m + c2 sqrt(m)`` is concave when ``c1 < 0``, with
    stationary point ``m* = (c2 / (2 c1))^2``.
    """
    candidates = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]
    if c1 < 0 < c2 and c2 <= -2.0 * c1:
        root = c2 / (-2.0 * c1)
        candidates.append((root * root, root))
    best = max(candidates, key=lambda ml: c1 * ml[0] + c2 * ml[1])
    return c1 * best[0] + c2 * best[1], best[0], best[1]


def _linear_parts(ctx: SetContext, u: ArrayLike, v: ArrayLike) -> tuple[float, float, float]:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    n = ctx.d + 1
    if u.shape != (n, n) or v.shape != (n,):
        raise InputError(f"u must be {n}x{n} and v of length {n}")
    a0, am, b0, bl = ctx._structure()
    fixed = float(np.sum(a0 * u) + b0 @ v)
    return fixed, float(np.sum(am * u)), float(bl @ v)


def support_function(ctx: SetContext, u: ArrayLike, v: ArrayLike) -> float:
    """``max { sum a_ij u_ij + sum b_j v_j : (a, b) in the set }`` in closed form."""
    fixed, c1, c2 = _linear_parts(ctx, u, v)
    value, _, _ = maximize_affine_lm(c1, c2)
    return fixed + value


def convexity_witness(
    ctx: SetContext, p1: ControlSetPoint, p2: ControlSetPoint, mu: float, tol: float = 1e-9
) -> MembershipResult:
    """Membership of ``mu p1 + (1 - mu) p2``; both inputs must be members."""
    if not 0.0 <= mu <= 1.0:
        raise PreconditionError("mu must lie in [0, 1]")
    for name, p in (("p1", p1), ("p2", p2)):
        if not membership(ctx, p, tol).inside:
            raise PreconditionError(f"{name} is not in the set")
    if mu == 0.0:
        return membership(ctx, p2, tol)
    if mu == 1.0:
        return membership(ctx, p1, tol)
    return membership(ctx, p1.combine(p2, mu), tol)


def point_norm(point: ControlSetPoint) -> float:
    """Euclidean norm of ``(a, b)`` viewed as one vector."""
    return float(math.sqrt(np.sum(point.a ** 2) + np.sum(point.b ** 2)))


def norm_bound(ctx: SetContext) -> float:
    """Certified bound on ``|(a, b)|`` over the set, quadratic in ``x_t``.

    Base model: ``sqrt(d) M^2 / 2 + M + 1/2 + M^2 x^2``, which is
    ``(M + 1)^2 / 2 + M^2 x^2`` for ``d = 1``.  Extended model (``M`` also
    covering ``rho`` and ``r``): ``(M + 1)^2 / 2 + M^2 (1 + M^2) x^2``.
    """
    M = ctx.bound
    x2 = ctx.x_t ** 2
    if ctx.extended:
        return 0.5 * (M + 1) ** 2 + M * M * (1 + M * M) * x2
    return 0.5 * math.sqrt(ctx.d) * M * M + M + 0.5 + M * M * x2


# ---------------------------------------------------------------------------
# dominance
# ---------------------------------------------------------------------------


class DominatingPolicy(Policy):
    """Ordinary strategy ``phi = sqrt(m)`` read off a relaxed control.

    Driven on the dominating wealth ``X_hat = Z X``, it reconstructs the
    relaxed wealth ``X = X_hat / Z`` step by step, so it is a feedback of the
    observed history and re-simulating with it reproduces ``X_hat``.
    """

    def __init__(self, relaxed: RelaxedControl, model: MarketModel):
        super().__init__(lambda t, y, x: 0.0, name=f"sqrt(m) of {relaxed.name}")
        self.relaxed = relaxed
        self.model = model

    def session(self, n: int):
        theta_stream = self.model.theta.stream(n)
        relaxed_step = self.relaxed.session(n)
        logz = np.zeros(n)
        rel_hist: list[FloatArray] = []
        prev: tuple | None = None

        def step(i, t, times, y_hist, x_hist):
            nonlocal logz, prev
            if prev is not None:
                l0, s0, th0, t0 = prev
                logz = logz - (l0 - s0) * th0 * (t - t0)
            th = np.broadcast_to(theta_stream.push(t, y_hist[:, -1, :]), (n,))
            rel_hist.append(x_hist[:, -1] / np.exp(logz))
            x_rel = np.stack(rel_hist, axis=1) if self.relaxed.history else rel_hist[-1][:, None]
            l, s = relaxed_step(i, t, times, y_hist, x_rel)
            prev = (l, s, th, t)
            return s, s

        return step


def dominance_factor(bundle: PathBundle) -> FloatArray:
    """``Z_t = exp(-int_0^t (l - sqrt(m)) theta ds)`` on the grid (left endpoints)."""
    l = bundle.drift_loading
    s = bundle.diffusion_loading
    th = bundle.theta_values
    if l is None or s is None or th is None:
        raise InputError("bundle carries no control loadings")
    rate = (l - s) * th * bundle.grid.dt
    logz = np.zeros(bundle.x_paths.shape)
    logz[:, 1:] = -np.cumsum(rate, axis=1)
    return np.exp(logz)


def dominance_transform(bundle: PathBundle, model: MarketModel | None = None) -> PathBundle:
    """Lift a relaxed-control bundle to the dominating ordinary strategy.

    Returns the bundle with wealth ``Z X`` and control ``phi = sqrt(m)``;
    ``Z >= 1`` and hence the new wealth dominates pathwise.
    """
    model = model if model is not None else bundle.model
    if model is None:
        raise InputError("a model is required")
    if model.extended:
        raise UnsupportedError("dominance transform is only defined for the base variant")
    th = bundle.theta_values
    if th is not None and np.any(th < 0):
        raise ModelValidationError("theta must be non-negative along the paths")
    z = dominance_factor(bundle)
    control = None
    if isinstance(bundle.control, RelaxedControl):
        control = DominatingPolicy(bundle.control, model)
    elif isinstance(bundle.control, Policy):
        control = bundle.control
    return replace(
        bundle,
        x_paths=z * bundle.x_paths,
        control_kind="policy",
        drift_loading=bundle.diffusion_loading,
        control=control,
        model=model,
    )
