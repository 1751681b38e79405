"""Market model: path-dependent coefficient functionals and structural checks.

A coefficient functional maps ``(t, trajectory on [0, t])`` to a real number
(or a vector / matrix for the factor drift and diffusion when ``d > 1``).
Trajectories are discrete: a ``times`` array and a ``values`` array of shape
``(..., k, d)``; leading axes are batch axes and every built-in functional is
vectorised over them.

Restricting a trajectory to ``[0, t]`` keeps the grid points ``<= t`` and
appends the value at ``t`` itself, linearly interpolated when ``t`` falls
strictly between two grid points.  All built-in functionals are
non-anticipative and path-continuous by construction; user-supplied ones
(:class:`UserFunctional`) must honour the same contract, which can only be
spot-checked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, ClassVar, Literal, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DomainError, InputError, VariantError

__all__ = [
    "CoefficientFunctional",
    "Constant",
    "Affine",
    "RunningExtremum",
    "TimeIntegral",
    "SmoothBounded",
    "TimeAffine",
    "UserFunctional",
    "VectorFunctional",
    "MatrixFunctional",
    "MarketModel",
    "Violation",
    "ValidationReport",
    "restrict_path",
    "coefficient_at",
    "validate_model",
    "random_trajectory",
]

FloatArray = NDArray[np.float64]


# ---------------------------------------------------------------------------
# trajectory helpers
# ---------------------------------------------------------------------------


def _as_path(values: ArrayLike) -> FloatArray:
    """Single trajectory as a ``(k, d)`` array; 1-D input means ``d = 1``."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InputError(f"a single trajectory must be 1-D or 2-D, got shape {arr.shape}")
    return arr


def restrict_path(times: ArrayLike, values: ArrayLike, t: float) -> tuple[FloatArray, FloatArray]:
    """Restrict a discrete trajectory to ``[0, t]``.

    ``values`` has shape ``(..., k, d)`` matching ``times`` of length ``k``.
    Returns the grid points ``<= t`` plus the (interpolated) value at ``t``.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.ndim != 1 or values.shape[-2] != times.shape[0]:
        raise InputError("times and values disagree in length")
    if t < times[0] or t > times[-1]:
        raise DomainError(f"trajectory is not defined at t={t} (covers [{times[0]}, {times[-1]}])")
    j = int(np.searchsorted(times, t, side="right"))
    if times[j - 1] == t:
        return times[:j], values[..., :j, :]
    w = (t - times[j - 1]) / (times[j] - times[j - 1])
    at_t = values[..., j - 1, :] + w * (values[..., j, :] - values[..., j - 1, :])
    return (
        np.append(times[:j], t),
        np.concatenate([values[..., :j, :], at_t[..., None, :]], axis=-2),
    )


def _weighted_state(values: FloatArray, weights: FloatArray | float) -> FloatArray:
    """``w . y`` along the state axis (last axis)."""
    return np.sum(values * weights, axis=-1)


def _state_magnitude(values: FloatArray, component: int | None) -> FloatArray:
    if component is None:
        return np.sqrt(np.sum(values * values, axis=-1))
    return np.abs(values[..., component])


# ---------------------------------------------------------------------------
# streams: incremental evaluation along a simulated grid
# ---------------------------------------------------------------------------


class _HistoryStream:
    """Generic stream: keeps the whole history and re-evaluates the functional."""

    def __init__(self, functional: "CoefficientFunctional", n: int):
        self.functional = functional
        self.times: list[float] = []
        self.values: list[FloatArray] = []

    def push(self, t: float, state: FloatArray) -> FloatArray:
        self.times.append(t)
        self.values.append(np.asarray(state, dtype=float))
        return self.functional(t, np.asarray(self.times), np.stack(self.values, axis=-2))


class _StateStream:
    """Stream for functionals of the current state only."""

    def __init__(self, fn: Callable[[float, FloatArray], FloatArray]):
        self.fn = fn

    def push(self, t: float, state: FloatArray) -> FloatArray:
        return self.fn(t, state)


# ---------------------------------------------------------------------------
# functionals
# ---------------------------------------------------------------------------


class CoefficientFunctional:
    """Base class for path functionals ``(t, y|[0,t]) -> value``.

    Subclasses implement :meth:`evaluate` on restricted, batched trajectories
    and report a ``natural_bound``.  A ``declared_bound`` overrides it.
    """

    kind: ClassVar[str] = "abstract"
    output: ClassVar[Literal["scalar", "vector", "matrix"]] = "scalar"
    declared_bound: float | None

    @property
    def natural_bound(self) -> float:
        return math.inf

    @property
    def bound(self) -> float:
        if self.declared_bound is not None:
            return float(self.declared_bound)
        return self.natural_bound

    def with_bound(self, bound: float) -> "CoefficientFunctional":
        if not bound >= 0:
            raise InputError(f"declared bound must be non-negative, got {bound}")
        return replace(self, declared_bound=float(bound))

    def evaluate(self, t: float, times: FloatArray, values: FloatArray) -> FloatArray:
        raise NotImplementedError

    def __call__(self, t: float, times: ArrayLike, values: ArrayLike) -> FloatArray:
        """Evaluate on a trajectory covering at least ``[0, t]``.

        The trajectory is restricted to ``[0, t]`` first, so anything after
        ``t`` never influences the result.  A 1-D ``values`` is read as a
        single one-dimensional trajectory.
        """
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        rt, rv = restrict_path(times, values, t)
        return self.evaluate(t, rt, rv)

    def stream(self, n: int):
        """Incremental evaluator fed one grid state at a time."""
        return _HistoryStream(self, n)

    def describe(self) -> str:
        return self.kind


@dataclass(frozen=True)
class Constant(CoefficientFunctional):
    value: float
    declared_bound: float | None = None
    kind: ClassVar[str] = "constant"

    @property
    def natural_bound(self) -> float:
        return abs(self.value)

    def evaluate(self, t, times, values):
        return np.full(values.shape[:-2], float(self.value))

    def stream(self, n):
        return _StateStream(lambda t, s: np.full(s.shape[:-1], float(self.value)))

    def describe(self):
        return f"constant {self.value!r}"


@dataclass(frozen=True)
class Affine(CoefficientFunctional):
    """``clip(intercept + weights . y_t, lower, upper)``."""

    intercept: float = 0.0
    weights: float | tuple[float, ...] = 1.0
    lower: float = -math.inf
    upper: float = math.inf
    declared_bound: float | None = None
    kind: ClassVar[str] = "affine"

    @property
    def natural_bound(self) -> float:
        return max(abs(self.lower), abs(self.upper))

    def _at(self, state):
        w = np.asarray(self.weights, dtype=float)
        return np.clip(self.intercept + _weighted_state(state, w), self.lower, self.upper)

    def evaluate(self, t, times, values):
        return self._at(values[..., -1, :])

    def stream(self, n):
        return _StateStream(lambda t, s: self._at(s))


@dataclass(frozen=True)
class RunningExtremum(CoefficientFunctional):
    """``clip(offset + scale * ext_{s<=t} |y_s|, lower, upper)``, ext = max or min.

    ``|y_s|`` is the Euclidean norm of the state, or the absolute value of
    one coordinate when ``component`` is given.
    """

    which: Literal["max", "min"] = "max"
    scale: float = 1.0
    offset: float = 0.0
    lower: float = -math.inf
    upper: float = 1.0
    component: int | None = None
    declared_bound: float | None = None
    kind: ClassVar[str] = "running_extremum"

    def __post_init__(self):
        if self.which not in ("max", "min"):
            raise InputError(f"which must be 'max' or 'min', got {self.which!r}")

    @property
    def natural_bound(self) -> float:
        return max(abs(self.lower), abs(self.upper))

    def _finish(self, ext):
        return np.clip(self.offset + self.scale * ext, self.lower, self.upper)

    def evaluate(self, t, times, values):
        mag = _state_magnitude(values, self.component)
        ext = mag.max(axis=-1) if self.which == "max" else mag.min(axis=-1)
        return self._finish(ext)

    def stream(self, n):
        reduce = np.maximum if self.which == "max" else np.minimum
        acc: dict[str, FloatArray] = {}

        def push(t, state):
            mag = _state_magnitude(state, self.component)
            acc["ext"] = mag if "ext" not in acc else reduce(acc["ext"], mag)
            return self._finish(acc["ext"])

        return _StateStream(push)

    def describe(self):
        return f"running_{self.which}"


@dataclass(frozen=True)
class TimeIntegral(CoefficientFunctional):
    """``clip(offset + scale * int_0^t w . y_s ds, lower, upper)`` (trapezoid rule)."""

    scale: float = 1.0
    offset: float = 0.0
    weights: float | tuple[float, ...] = 1.0
    lower: float = -1.0
    upper: float = 1.0
    declared_bound: float | None = None
    kind: ClassVar[str] = "time_integral"

    @property
    def natural_bound(self) -> float:
        return max(abs(self.lower), abs(self.upper))

    def _finish(self, integral):
        return np.clip(self.offset + self.scale * integral, self.lower, self.upper)

    def evaluate(self, t, times, values):
        w = np.asarray(self.weights, dtype=float)
        z = _weighted_state(values, w)
        integral = np.zeros(z.shape[:-1])
        # left-to-right accumulation so the stream reproduces it exactly
        for j in range(1, z.shape[-1]):
            integral = integral + 0.5 * (z[..., j - 1] + z[..., j]) * (times[j] - times[j - 1])
        return self._finish(integral)

    def stream(self, n):
        w = np.asarray(self.weights, dtype=float)
        acc: dict[str, object] = {}

        def push(t, state):
            z = _weighted_state(state, w)
            if "t" in acc:
                acc["int"] = acc["int"] + 0.5 * (acc["z"] + z) * (t - acc["t"])
            else:
                acc["int"] = np.zeros(z.shape)
            acc["t"], acc["z"] = t, z
            return self._finish(acc["int"])

        return _StateStream(push)


@dataclass(frozen=True)
class SmoothBounded(CoefficientFunctional):
    """``center + amplitude * tanh(slope * (w . y_t - shift))``."""

    center: float = 0.0
    amplitude: float = 1.0
    slope: float = 1.0
    shift: float = 0.0
    weights: float | tuple[float, ...] = 1.0
    declared_bound: float | None = None
    kind: ClassVar[str] = "smooth_bounded"

    @property
    def natural_bound(self) -> float:
        return abs(self.center) + abs(self.amplitude)

    def _at(self, state):
        w = np.asarray(self.weights, dtype=float)
        return self.center + self.amplitude * np.tanh(self.slope * (_weighted_state(state, w) - self.shift))

    def evaluate(self, t, times, values):
        return self._at(values[..., -1, :])

    def stream(self, n):
        return _StateStream(lambda t, s: self._at(s))


@dataclass(frozen=True)
class TimeAffine(CoefficientFunctional):
    """Deterministic ``clip(a + b t, lower, upper)``; ignores the path."""

    a: float = 0.0
    b: float = 0.0
    lower: float = -math.inf
    upper: float = math.inf
    declared_bound: float | None = None
    kind: ClassVar[str] = "time_affine"

    @property
    def natural_bound(self) -> float:
        hi = max(abs(self.lower), abs(self.upper))
        return hi

    def _at(self, t, shape):
        return np.full(shape, float(np.clip(self.a + self.b * t, self.lower, self.upper)))

    def evaluate(self, t, times, values):
        return self._at(t, values.shape[:-2])

    def stream(self, n):
        return _StateStream(lambda t, s: self._at(t, s.shape[:-1]))


@dataclass(frozen=True)
class UserFunctional(CoefficientFunctional):
    """Wrap a user callable ``fn(t, times, values) -> float``.

    ``values`` is a single restricted ``(k, d)`` trajectory unless
    ``vectorized`` is set, in which case leading batch axes are passed through
    and ``fn`` must return an array of the batch shape.  Non-anticipativity
    and path-continuity are the caller's responsibility.
    """

    fn: Callable[..., object] = field(compare=False)
    declared_bound: float | None = None
    vectorized: bool = False
    output_kind: Literal["scalar", "vector", "matrix"] = "scalar"
    kind: ClassVar[str] = "user"

    @property
    def output(self):  # type: ignore[override]
        return self.output_kind

    def evaluate(self, t, times, values):
        if self.vectorized or values.ndim == 2:
            return np.asarray(self.fn(t, times, values), dtype=float)
        batch = values.shape[:-2]
        flat = values.reshape((-1,) + values.shape[-2:])
        out = np.array([np.asarray(self.fn(t, times, v), dtype=float) for v in flat])
        return out.reshape(batch + out.shape[1:])


@dataclass(frozen=True)
class VectorFunctional(CoefficientFunctional):
    """Stack scalar functionals into an ``R^d``-valued one (factor drift, d > 1)."""

    components: tuple[CoefficientFunctional, ...] = ()
    declared_bound: float | None = None
    kind: ClassVar[str] = "vector"
    output: ClassVar[str] = "vector"

    @property
    def natural_bound(self) -> float:
        return math.sqrt(sum(c.bound ** 2 for c in self.components))

    def evaluate(self, t, times, values):
        return np.stack([c.evaluate(t, times, values) for c in self.components], axis=-1)

    def stream(self, n):
        streams = [c.stream(n) for c in self.components]
        return _StateStream(lambda t, s: np.stack([st.push(t, s) for st in streams], axis=-1))


@dataclass(frozen=True)
class MatrixFunctional(CoefficientFunctional):
    """Symmetric ``d x d`` functional from scalar entries (factor diffusion, d > 1).

    The natural bound is the Frobenius norm of the entry bounds, which
    dominates the spectral norm.
    """

    entries: tuple[tuple[CoefficientFunctional, ...], ...] = ()
    declared_bound: float | None = None
    kind: ClassVar[str] = "matrix"
    output: ClassVar[str] = "matrix"

    def __post_init__(self):
        d = len(self.entries)
        if any(len(row) != d for row in self.entries):
            raise InputError("matrix functional must be square")
        for i in range(d):
            for j in range(i):
                if self.entries[i][j] != self.entries[j][i]:
                    raise InputError("matrix functional must be symmetric")

    @property
    def natural_bound(self) -> float:
        return math.sqrt(sum(e.bound ** 2 for row in self.entries for e in row))

    def evaluate(self, t, times, values):
        rows = [np.stack([e.evaluate(t, times, values) for e in row], axis=-1) for row in self.entries]
        return np.stack(rows, axis=-2)

    def stream(self, n):
        streams = [[e.stream(n) for e in row] for row in self.entries]

        def push(t, s):
            rows = [np.stack([st.push(t, s) for st in row], axis=-1) for row in streams]
            return np.stack(rows, axis=-2)

        return _StateStream(push)


def _magnitude(value: FloatArray, output: str) -> FloatArray:
    """Norm used against declared bounds: abs, Euclidean, or spectral."""
    if output == "scalar":
        return np.abs(value)
    if output == "vector":
        return np.sqrt(np.sum(value * value, axis=-1))
    return np.linalg.norm(value, ord=2, axis=(-2, -1))


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

CoefficientName = Literal["nu", "kappa", "theta", "lambda", "rho", "rate"]


@dataclass(frozen=True)
class MarketModel:
    """Factor / wealth market with bounded path-dependent coefficients.

    ``variant='extended'`` adds the wealth-feedback functional ``rho`` (of the
    wealth path) and a deterministic riskless ``rate`` (a path-independent
    functional such as :class:`Constant` or :class:`TimeAffine`); the factor
    is one-dimensional in that case.  ``unique_in_law`` is a declaration
    about the factor equation, never checked at run time.
    """

    horizon: float
    nu: CoefficientFunctional
    kappa: CoefficientFunctional
    theta: CoefficientFunctional
    lam: CoefficientFunctional
    initial_wealth: float = 1.0
    initial_factor: tuple[float, ...] = (0.0,)
    variant: Literal["base", "extended"] = "base"
    rho: CoefficientFunctional | None = None
    rate: CoefficientFunctional | None = None
    unique_in_law: bool = True

    def __post_init__(self):
        y0 = self.initial_factor
        if np.ndim(y0) == 0:
            object.__setattr__(self, "initial_factor", (float(y0),))
        else:
            object.__setattr__(self, "initial_factor", tuple(float(v) for v in y0))
        if not self.horizon > 0:
            raise DomainError(f"horizon must be positive, got {self.horizon}")
        if not self.initial_wealth > 0:
            raise DomainError(f"initial wealth must be positive, got {self.initial_wealth}")
        if self.variant not in ("base", "extended"):
            raise VariantError(f"unknown variant {self.variant!r}")
        if self.variant == "extended":
            if self.rho is None or self.rate is None:
                raise VariantError("extended variant needs both rho and rate")
            if self.dimension != 1:
                raise VariantError("extended variant supports a one-dimensional factor only")
        elif self.rho is not None or self.rate is not None:
            raise VariantError("rho and rate are only meaningful for the extended variant")
        d = self.dimension
        if d > 1:
            if self.nu.output != "vector" or self.kappa.output != "matrix":
                raise InputError("for d > 1, nu must be vector-valued and kappa matrix-valued")

    @property
    def dimension(self) -> int:
        return len(self.initial_factor)

    @property
    def extended(self) -> bool:
        return self.variant == "extended"

    @property
    def M(self) -> float:
        """Largest declared sup-norm among nu, kappa, theta, lambda."""
        return max(self.nu.bound, self.kappa.bound, self.theta.bound, self.lam.bound)

    @property
    def coefficient_bound(self) -> float:
        """M, additionally covering rho and the rate in the extended variant."""
        m = self.M
        if self.extended:
            m = max(m, self.rho.bound, self.rate.bound)
        return m

    def coefficient(self, name: CoefficientName) -> CoefficientFunctional:
        key = "lam" if name == "lambda" else name
        if key not in ("nu", "kappa", "theta", "lam", "rho", "rate"):
            raise InputError(f"unknown coefficient {name!r}")
        if key in ("rho", "rate") and not self.extended:
            raise VariantError(f"{name} is only defined for the extended variant")
        return getattr(self, key)

    def coefficients(self) -> dict[str, CoefficientFunctional]:
        out = {"nu": self.nu, "kappa": self.kappa, "theta": self.theta, "lambda": self.lam}
        if self.extended:
            out["rho"] = self.rho
            out["rate"] = self.rate
        return out


def coefficient_at(
    model: MarketModel,
    name: CoefficientName,
    t: float,
    times: ArrayLike,
    path: ArrayLike,
) -> float | FloatArray:
    """Evaluate one coefficient on a single trajectory restricted to ``[0, t]``.

    ``path`` is the factor path, except for ``rho`` which reads the wealth
    path.  Scalars come back as Python floats.
    """
    functional = model.coefficient(name)
    if not 0.0 <= t <= model.horizon:
        raise DomainError(f"t={t} outside [0, {model.horizon}]")
    value = functional(t, times, _as_path(path))
    if functional.output == "scalar":
        return float(value)
    return value


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    check: str
    probe: int
    detail: str
    value: float = math.nan
    limit: float = math.nan


@dataclass
class ValidationReport:
    """Outcome of a structural check; violations are data, not exceptions."""

    subject: str
    probe_count: int
    violations: list[Violation] = field(default_factory=list)
    notes: dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def count(self, check: str) -> int:
        return sum(v.check == check for v in self.violations)

    def summary(self) -> str:
        lines = [f"{self.subject}: {len(self.violations)} violation(s) over {self.probe_count} probe(s)"]
        checks = sorted({v.check for v in self.violations})
        for c in checks:
            lines.append(f"  {c}: {self.count(c)}")
        for k, v in self.notes.items():
            lines.append(f"  {k} = {v!r}")
        return "\n".join(lines)


def random_trajectory(
    rng: np.random.Generator,
    t: float,
    start: Sequence[float],
    points: int = 32,
    scale: float | None = None,
) -> tuple[FloatArray, FloatArray]:
    """Random continuous-looking trajectory on ``[0, t]`` (scaled random walk)."""
    start = np.asarray(start, dtype=float)
    times = np.linspace(0.0, t, points) if t > 0 else np.zeros(1)
    if scale is None:
        scale = float(rng.choice([0.1, 1.0, 5.0]))
    steps = rng.standard_normal((len(times) - 1, start.size)) * scale * math.sqrt(max(t, 1e-12) / max(points - 1, 1))
    values = np.vstack([start, start + np.cumsum(steps, axis=0)])
    return times, values


def validate_model(model: MarketModel, probe_count: int = 1000, rng_seed: int = 0) -> ValidationReport:
    """Spot-check non-negativity, declared bounds and (extended) rate ordering.

    Each probe draws a random time and a random trajectory; every violation
    is reported individually with its probe index.
    """
    if probe_count < 1:
        raise InputError("probe_count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    report = ValidationReport("market model", probe_count)
    coeffs = model.coefficients()
    for name, f in coeffs.items():
        if not math.isfinite(f.bound):
            report.violations.append(Violation("unbounded", -1, f"{name} has no finite declared bound", math.inf, math.inf))
    report.notes["M"] = model.M
    T = model.horizon
    for probe in range(probe_count):
        t = float(rng.uniform(0.0, T))
        times, ys = random_trajectory(rng, t, model.initial_factor)
        _, xs = random_trajectory(rng, t, [model.initial_wealth])
        xs = np.abs(xs) + 1e-3
        values: dict[str, FloatArray] = {}
        for name, f in coeffs.items():
            path = xs if name == "rho" else ys
            val = np.asarray(f(t, times, path), dtype=float)
            values[name] = val
            mag = float(_magnitude(val, f.output))
            if mag > f.bound * (1 + 1e-12) + 1e-300:
                report.violations.append(Violation("bound", probe, f"|{name}| exceeds declared bound at t={t:.6g}", mag, f.bound))
        th = float(values["theta"])
        if th < 0:
            report.violations.append(Violation("theta_nonnegative", probe, f"theta < 0 at t={t:.6g}", th, 0.0))
        if model.extended:
            r = float(values["rate"])
            if r < 0:
                report.violations.append(Violation("rate_nonnegative", probe, f"r < 0 at t={t:.6g}", r, 0.0))
            if th < r:
                report.violations.append(Violation("theta_above_rate", probe, f"theta < r at t={t:.6g}", th, r))
    return report
