"""Derivative-free search for CPT-optimal strategies within policy families.

Every candidate in one run is simulated on the same seed (common random
numbers), which turns the Monte-Carlo objective into a deterministic
function of the parameters.  The incumbent is finally re-evaluated on a
fresh seed to report an out-of-sample value.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Literal, Sequence, TextIO

import numpy as np
from numpy.typing import NDArray
from scipy import optimize as sp_optimize
from scipy import stats

from .cpt import CptReport, Preferences, evaluate
from .errors import InputError, NumericalError
from .market import MarketModel
from .paths import Policy, Scheme, SimulationGrid, simulate

__all__ = [
    "PolicyFamily",
    "TraceEntry",
    "OptimizationResult",
    "evaluate_policy",
    "optimize",
    "fresh_seed",
    "write_trace_csv",
]

FloatArray = NDArray[np.float64]
Method = Literal["grid_refine", "nelder_mead", "cross_entropy"]


@dataclass(frozen=True)
class PolicyFamily:
    """Finite-dimensional family of proportional strategies.

    Parameters are clamped to ``[0, 1]`` so that the boundary strategies
    (in particular the riskless ``phi = 0``) are exactly representable.

    * ``constant``: one parameter.
    * ``piecewise_constant_time``: one parameter per interval between
      ``time_knots`` (which include 0 and the horizon).
    * ``feedback_grid``: one parameter per (time interval, factor bin); bins
      split the first factor coordinate at ``y_edges``.
    """

    kind: Literal["constant", "piecewise_constant_time", "feedback_grid"] = "constant"
    time_knots: tuple[float, ...] = ()
    y_edges: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("constant", "piecewise_constant_time", "feedback_grid"):
            raise InputError(f"unknown policy family {self.kind!r}")
        if self.kind != "constant":
            knots = self.time_knots
            if len(knots) < 2 or any(b <= a for a, b in zip(knots, knots[1:])):
                raise InputError("time_knots must be strictly increasing with at least two entries")
        if self.kind == "feedback_grid" and any(b <= a for a, b in zip(self.y_edges, self.y_edges[1:])):
            raise InputError("y_edges must be strictly increasing")

    @classmethod
    def constant(cls) -> "PolicyFamily":
        return cls("constant")

    @classmethod
    def piecewise(cls, horizon: float, intervals: int) -> "PolicyFamily":
        return cls("piecewise_constant_time", tuple(np.linspace(0.0, horizon, intervals + 1)))

    @classmethod
    def feedback(
        cls,
        model: MarketModel,
        grid: SimulationGrid,
        time_intervals: int = 1,
        bins: int = 8,
        pilot_paths: int = 2000,
        seed: int = 0,
    ) -> "PolicyFamily":
        """Factor bins at the quantiles of a riskless pilot simulation."""
        from .paths import constant_policy

        pilot = simulate(model, constant_policy(0.0), grid, pilot_paths, seed)
        y = pilot.y_paths[:, :-1, 0].ravel()
        edges = np.unique(np.quantile(y, np.linspace(0, 1, bins + 1)[1:-1]))
        return cls("feedback_grid", tuple(np.linspace(0.0, model.horizon, time_intervals + 1)), tuple(edges))

    @property
    def dimension(self) -> int:
        if self.kind == "constant":
            return 1
        k = len(self.time_knots) - 1
        if self.kind == "piecewise_constant_time":
            return k
        return k * (len(self.y_edges) + 1)

    def squash(self, params: Sequence[float]) -> FloatArray:
        p = np.asarray(params, dtype=float).ravel()
        if p.size != self.dimension:
            raise InputError(f"expected {self.dimension} parameters, got {p.size}")
        return np.clip(p, 0.0, 1.0)

    def _interval(self, t: float) -> int:
        j = int(np.searchsorted(self.time_knots, t, side="right")) - 1
        return min(max(j, 0), len(self.time_knots) - 2)

    def policy(self, params: Sequence[float]) -> Policy:
        p = self.squash(params)
        label = f"{self.kind} [{', '.join(f'{v:.4g}' for v in p)}]"
        if self.kind == "constant":
            value = float(p[0])
            return Policy(lambda t, y, x: value, name=label)
        if self.kind == "piecewise_constant_time":
            return Policy(lambda t, y, x: p[self._interval(t)], name=label)
        edges = np.asarray(self.y_edges)
        nb = edges.size + 1
        table = p.reshape(-1, nb)

        def fn(t, y, x):
            return table[self._interval(t)][np.searchsorted(edges, y[:, 0], side="right")]

        return Policy(fn, name=label)


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    value: float
    se: float
    incumbent: float
    params: tuple[float, ...]


@dataclass
class OptimizationResult:
    best_parameters: FloatArray
    best_value: CptReport
    trace: list[TraceEntry]
    evaluations: int
    seed: int
    method: str
    family: PolicyFamily
    out_of_sample: CptReport | None = None
    out_of_sample_seed: int | None = None
    budget_exhausted: bool = False

    def summary(self) -> str:
        lines = [
            f"method            : {self.method}",
            f"family            : {self.family.kind} (dimension {self.family.dimension})",
            f"evaluations       : {self.evaluations}",
            f"best parameters   : {', '.join(format(v, '.6g') for v in self.best_parameters)}",
            f"in-sample V       : {self.best_value.v:.10g} (se {self.best_value.se:.3g}, seed {self.seed})",
        ]
        if self.out_of_sample is not None:
            lines.append(
                f"out-of-sample V   : {self.out_of_sample.v:.10g} (se {self.out_of_sample.se:.3g}, seed {self.out_of_sample_seed})"
            )
        lines.append("note              : incumbent within the family; no optimality gap is claimed")
        return "\n".join(lines)


def evaluate_policy(
    family: PolicyFamily,
    params: Sequence[float],
    model: MarketModel,
    prefs: Preferences,
    grid: SimulationGrid,
    path_count: int,
    seed: int,
    scheme: Scheme = "exact_exponential",
    bootstrap: int = 200,
    moment_bound: float | None = None,
) -> CptReport:
    """Simulate the family member ``params`` on ``seed`` and value it."""
    bundle = simulate(model, family.policy(params), grid, path_count, seed, scheme)
    return evaluate(bundle, prefs, bootstrap=bootstrap, moment_bound=moment_bound)


def fresh_seed(seed: int) -> int:
    """Deterministic out-of-sample seed, distinct from ``seed``."""
    s = int(np.random.SeedSequence([seed, 0x05EED]).generate_state(1, np.uint32)[0])
    return s if s != seed else s + 1


class _BudgetExhausted(Exception):
    pass


class _Objective:
    """Memoised CRN objective that enforces the evaluation budget."""

    def __init__(self, family, model, prefs, grid, path_count, seed, scheme, budget, bootstrap):
        self.family = family
        self.args = (model, prefs, grid, path_count, seed, scheme, bootstrap)
        self.budget = budget
        self.cache: dict[tuple[float, ...], CptReport] = {}
        self.trace: list[TraceEntry] = []
        self.best: tuple[float, tuple[float, ...], CptReport] | None = None

    def __call__(self, params) -> float:
        key = tuple(float(v) for v in self.family.squash(params))
        if key in self.cache:
            return self.cache[key].v
        if len(self.cache) >= self.budget:
            raise _BudgetExhausted
        model, prefs, grid, path_count, seed, scheme, bootstrap = self.args
        rep = evaluate_policy(self.family, key, model, prefs, grid, path_count, seed, scheme, bootstrap)
        if not math.isfinite(rep.v):
            raise NumericalError(f"non-finite objective at parameters {key}")
        self.cache[key] = rep
        if self.best is None or rep.v > self.best[0]:
            self.best = (rep.v, key, rep)
        self.trace.append(TraceEntry(len(self.trace) + 1, rep.v, rep.se, self.best[0], key))
        return rep.v


def _grid_refine(obj: _Objective, dim: int, points: int = 5) -> None:
    center = np.full(dim, 0.5)
    half = 0.5
    while True:
        for j in range(dim):
            lo, hi = max(0.0, center[j] - half), min(1.0, center[j] + half)
            best_v, best_x = -math.inf, center[j]
            for xj in np.linspace(lo, hi, points):
                trial = center.copy()
                trial[j] = xj
                v = obj(trial)
                if v > best_v:
                    best_v, best_x = v, xj
            center[j] = best_x
        half /= 2
        if half < 1e-9:
            return


def _nelder_mead(obj: _Objective, dim: int, budget: int) -> None:
    x0 = np.full(dim, 0.5)
    simplex = np.vstack([x0] + [x0 + 0.25 * e for e in np.eye(dim)])
    sp_optimize.minimize(
        lambda p: -obj(p),
        x0,
        method="Nelder-Mead",
        bounds=[(0.0, 1.0)] * dim,
        options={"initial_simplex": simplex, "maxfev": 50 * budget, "maxiter": 50 * budget, "xatol": 1e-6, "fatol": 0.0},
    )


def _cross_entropy(obj: _Objective, dim: int, seed: int, elite_fraction: float = 0.2, smoothing: float = 0.7, std_smoothing: float = 0.3) -> None:
    rng = np.random.Generator(np.random.Philox(key=np.random.SeedSequence([seed, 0xCE]).generate_state(2, np.uint64)))
    mean = np.full(dim, 0.5)
    std = np.full(dim, 0.3)
    pop = max(20, 10 * dim)
    n_elite = max(2, int(math.ceil(elite_fraction * pop)))
    while True:
        a = (0.0 - mean) / std
        b = (1.0 - mean) / std
        samples = stats.truncnorm.rvs(a, b, loc=mean, scale=std, size=(pop, dim), random_state=rng)
        values = np.array([obj(s) for s in samples])
        elite = samples[np.argsort(-values, kind="stable")[:n_elite]]
        # The spread contracts more slowly than the mean moves, so the
        # accumulated drift can still reach the boundary of the box.
        mean = smoothing * elite.mean(axis=0) + (1 - smoothing) * mean
        std = np.maximum(std_smoothing * elite.std(axis=0) + (1 - std_smoothing) * std, 1e-3)
        obj(mean)


def optimize(
    family: PolicyFamily,
    model: MarketModel,
    prefs: Preferences,
    grid: SimulationGrid,
    path_count: int,
    seed: int,
    budget: int,
    method: Method = "grid_refine",
    scheme: Scheme = "exact_exponential",
    bootstrap: int = 200,
    out_of_sample: bool = True,
) -> OptimizationResult:
    """Maximise the CPT value over ``family`` with at most ``budget`` simulations.

    ``grid_refine`` sweeps a 5-point coordinate grid whose half-width halves
    every round; ``nelder_mead`` runs the bounded simplex method from the box
    centre; ``cross_entropy`` samples a truncated Gaussian and refits it
    (with smoothing) to the best 20 % of each population.  Running out of budget is not an
    error: the incumbent is returned.
    """
    dim = family.dimension
    if budget < dim + 1:
        raise InputError(f"budget must be at least dimension + 1 = {dim + 1}")
    obj = _Objective(family, model, prefs, grid, path_count, seed, scheme, budget, bootstrap)
    exhausted = False
    try:
        if method == "grid_refine":
            _grid_refine(obj, dim)
        elif method == "nelder_mead":
            _nelder_mead(obj, dim, budget)
        elif method == "cross_entropy":
            _cross_entropy(obj, dim, seed)
        else:
            raise InputError(f"unknown method {method!r}")
    except _BudgetExhausted:
        exhausted = True
    assert obj.best is not None
    _, best_key, best_rep = obj.best
    result = OptimizationResult(
        best_parameters=np.array(best_key),
        best_value=best_rep,
        trace=obj.trace,
        evaluations=len(obj.cache),
        seed=seed,
        method=method,
        family=family,
        budget_exhausted=exhausted,
    )
    if out_of_sample:
        s2 = fresh_seed(seed)
        result.out_of_sample = evaluate_policy(family, best_key, model, prefs, grid, path_count, s2, scheme, bootstrap)
        result.out_of_sample_seed = s2
    return result


def write_trace_csv(result: OptimizationResult, dest: str | os.PathLike | TextIO, header: dict[str, object] | None = None) -> None:
    """``iter,value,se,incumbent,p_1..p_k`` with 17-significant-digit floats."""
    own = not hasattr(dest, "write")
    fh = open(dest, "w", newline="") if own else dest
    try:
        for k, v in (header or {}).items():
            for line in str(v).splitlines() or [""]:
                fh.write(f"# {k}: {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "value", "se", "incumbent"] + [f"p_{j + 1}" for j in range(result.family.dimension)])
        for e in result.trace:
            w.writerow([e.iteration] + [format(v, ".17g") for v in (e.value, e.se, e.incumbent, *e.params)])
    finally:
        if own:
            fh.close()
