"""Joint simulation of the factor ``Y`` and wealth ``X`` on a uniform grid.

The factor follows Euler-Maruyama with left-endpoint (Ito) coefficients.
Wealth follows either Euler-Maruyama or the exact stochastic exponential per
step, the latter keeping ``X > 0``.  Controls enter through a drift loading
``l`` and a diffusion loading ``s = sqrt(m)``; an ordinary proportion ``phi``
is the special case ``l = s = phi``.

Randomness is counter based: paths are grouped in fixed blocks of
:data:`BLOCK_SIZE` and each block owns a Philox stream keyed by
``(seed, block)``.  Path ``i`` therefore sees the same increments whatever
``path_count`` is and however blocks are scheduled across workers.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Literal, TextIO

import numpy as np
from numpy.typing import NDArray

from .errors import ControlError, InputError, NumericalError
from .market import MarketModel

__all__ = [
    "BLOCK_SIZE",
    "CLAMP_TOL",
    "SimulationGrid",
    "Policy",
    "RelaxedControl",
    "constant_policy",
    "PathBundle",
    "brownian_increments",
    "integrate",
    "simulate",
    "resample_with_crn",
    "MomentReport",
    "sup_norm_stats",
    "HolderReport",
    "holder_increment_check",
    "write_bundle_csv",
    "read_bundle_csv",
]

FloatArray = NDArray[np.float64]
Scheme = Literal["euler", "exact_exponential"]

BLOCK_SIZE = 1024
CLAMP_TOL = 1e-12


@dataclass(frozen=True)
class SimulationGrid:
    """Uniform grid ``t_i = i T / N``, ``i = 0..N``."""

    horizon: float
    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise InputError("grid needs at least one step")
        if not self.horizon > 0:
            raise InputError("grid horizon must be positive")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> FloatArray:
        t = np.arange(self.steps + 1) * self.dt
        t[-1] = self.horizon
        return t


# ---------------------------------------------------------------------------
# controls
# ---------------------------------------------------------------------------


class Policy:
    """Proportional strategy ``phi(t, Y|[0,t], X|[0,t])`` clamped to ``[0, 1]``.

    By default ``fn(t, y, x)`` receives the current states, ``y`` of shape
    ``(P, d)`` and ``x`` of shape ``(P,)``.  With ``history=True`` it receives
    ``fn(t, times, y_hist, x_hist)`` with the full grid history up to ``t``.
    """

    kind = "policy"

    def __init__(self, fn: Callable[..., object], history: bool = False, name: str = "policy"):
        self.fn = fn
        self.history = history
        self.name = name

    def phi(self, i: int, t: float, times: FloatArray, y_hist: FloatArray, x_hist: FloatArray) -> FloatArray:
        if self.history:
            raw = self.fn(t, times, y_hist, x_hist)
        else:
            raw = self.fn(t, y_hist[:, -1, :], x_hist[:, -1])
        raw = np.broadcast_to(np.asarray(raw, dtype=float), x_hist.shape[:1])
        return np.clip(raw, 0.0, 1.0)

    def session(self, n: int):
        """Per-simulation stepper returning ``(l, s)`` loadings at each step."""

        def step(i, t, times, y_hist, x_hist):
            phi = self.phi(i, t, times, y_hist, x_hist)
            return phi, phi

        return step

    def __repr__(self):
        return f"Policy({self.name})"


def constant_policy(phi: float) -> Policy:
    value = float(np.clip(phi, 0.0, 1.0))
    return Policy(lambda t, y, x: value, name=f"constant {value!r}")


class RelaxedControl:
    """Relaxed pair ``(l, m)`` with ``0 <= m <= 1`` and ``0 <= l <= sqrt(m)``.

    Evaluator signatures follow :class:`Policy`.  Values within
    :data:`CLAMP_TOL` of the admissible set are clamped; anything further out
    raises :class:`~cptinvest.errors.ControlError` naming the step.
    """

    kind = "relaxed"

    def __init__(
        self,
        l_fn: Callable[..., object],
        m_fn: Callable[..., object],
        history: bool = False,
        name: str = "relaxed",
    ):
        self.l_fn = l_fn
        self.m_fn = m_fn
        self.history = history
        self.name = name

    @classmethod
    def constant(cls, l: float, m: float) -> "RelaxedControl":
        return cls(lambda t, y, x: l, lambda t, y, x: m, name=f"constant l={l!r} m={m!r}")

    @classmethod
    def from_policy(cls, policy: Policy) -> "RelaxedControl":
        """Embed an ordinary strategy as ``(l, m) = (phi, phi^2)``."""

        def l_fn(t, times, y, x):
            return policy.phi(0, t, times, y, x)

        def m_fn(t, times, y, x):
            phi = policy.phi(0, t, times, y, x)
            return phi * phi

        return cls(l_fn, m_fn, history=True, name=f"embedded {policy.name}")

    def loadings(self, i, t, times, y_hist, x_hist) -> tuple[FloatArray, FloatArray]:
        n = x_hist.shape[0]
        if self.history:
            l = self.l_fn(t, times, y_hist, x_hist)
            m = self.m_fn(t, times, y_hist, x_hist)
        else:
            y, x = y_hist[:, -1, :], x_hist[:, -1]
            l = self.l_fn(t, y, x)
            m = self.m_fn(t, y, x)
        l = np.array(np.broadcast_to(np.asarray(l, dtype=float), (n,)))
        m = np.array(np.broadcast_to(np.asarray(m, dtype=float), (n,)))
        if not (np.all(np.isfinite(l)) and np.all(np.isfinite(m))):
            raise ControlError(f"relaxed control is non-finite at step {i} (t={t:.6g})", step=i)
        if np.any(m < -CLAMP_TOL) or np.any(m > 1 + CLAMP_TOL):
            raise ControlError(f"relaxed control has m outside [0, 1] at step {i} (t={t:.6g})", step=i)
        m = np.clip(m, 0.0, 1.0)
        s = np.sqrt(m)
        if np.any(l < -CLAMP_TOL) or np.any(l > s + CLAMP_TOL):
            raise ControlError(f"relaxed control has l outside [0, sqrt(m)] at step {i} (t={t:.6g})", step=i)
        return np.clip(l, 0.0, s), s

    def session(self, n: int):
        return self.loadings

    def __repr__(self):
        return f"RelaxedControl({self.name})"


# ---------------------------------------------------------------------------
# bundle
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PathBundle:
    """Simulated joint trajectories plus everything needed to re-simulate them.

    ``drift_loading`` and ``diffusion_loading`` hold the per-step ``l`` and
    ``s = sqrt(m)`` actually used; ``theta_values`` the drift coefficient
    along each path.  All arrays are read-only.
    """

    grid: SimulationGrid
    y_paths: FloatArray  # (P, N+1, d)
    x_paths: FloatArray  # (P, N+1)
    seed: int
    scheme: Scheme
    control_kind: Literal["policy", "relaxed"]
    drift_loading: FloatArray | None = None  # (P, N)
    diffusion_loading: FloatArray | None = None  # (P, N)
    theta_values: FloatArray | None = None  # (P, N)
    model: MarketModel | None = field(default=None, repr=False)
    control: Policy | RelaxedControl | None = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("y_paths", "x_paths", "drift_loading", "diffusion_loading", "theta_values"):
            arr = getattr(self, name)
            if arr is not None:
                arr.setflags(write=False)

    @property
    def path_count(self) -> int:
        return self.x_paths.shape[0]

    @property
    def times(self) -> FloatArray:
        return self.grid.times

    @property
    def terminal_wealth(self) -> FloatArray:
        return self.x_paths[:, -1]

    @property
    def m_values(self) -> FloatArray | None:
        if self.diffusion_loading is None:
            return None
        return self.diffusion_loading * self.diffusion_loading

    def identical_to(self, other: "PathBundle") -> bool:
        """Bit-exact equality of the simulated arrays."""
        return (
            self.x_paths.shape == other.x_paths.shape
            and np.array_equal(self.x_paths, other.x_paths)
            and np.array_equal(self.y_paths, other.y_paths)
        )


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


def _block_key(seed: int, block: int) -> NDArray[np.uint64]:
    return np.random.SeedSequence([seed, block]).generate_state(2, dtype=np.uint64)


def brownian_increments(
    seed: int, grid: SimulationGrid, path_count: int, noise_dim: int, first_path: int = 0
) -> FloatArray:
    """Standard Brownian increments of shape ``(paths, N, noise_dim)``.

    Covers paths ``first_path .. first_path + path_count - 1``; the values of
    path ``i`` depend only on ``(seed, i, N, noise_dim)``.
    """
    if seed < 0:
        raise InputError("seed must be non-negative")
    out = np.empty((path_count, grid.steps, noise_dim))
    sq = math.sqrt(grid.dt)
    end = first_path + path_count
    block = first_path // BLOCK_SIZE
    while block * BLOCK_SIZE < end:
        lo = block * BLOCK_SIZE
        hi = min(lo + BLOCK_SIZE, end)
        gen = np.random.Generator(np.random.Philox(key=_block_key(seed, block)))
        # path-major draws make every shorter draw a prefix of a longer one
        z = gen.standard_normal((hi - lo, grid.steps, noise_dim))
        skip = max(first_path - lo, 0)
        out[lo + skip - first_path : hi - first_path] = z[skip:] * sq
        block += 1
    return out


def integrate(
    model: MarketModel,
    control: Policy | RelaxedControl,
    grid: SimulationGrid,
    dB: FloatArray,
    dW: FloatArray,
    scheme: Scheme = "exact_exponential",
) -> tuple[FloatArray, FloatArray, FloatArray, FloatArray, FloatArray]:
    """Integrate the system on given increments.

    ``dB`` has shape ``(P, N, d)`` and ``dW`` shape ``(P, N)``.  Returns
    ``(y, x, l, s, theta)``.  Within a step the wealth increment is computed
    first; in the extended variant the factor then receives ``rho * dX``.
    """
    if scheme not in ("euler", "exact_exponential"):
        raise InputError(f"unknown scheme {scheme!r}")
    if model.horizon != grid.horizon:
        raise InputError("grid horizon differs from the model horizon")
    P, N = dW.shape
    d = model.dimension
    if dB.shape != (P, N, d):
        raise InputError(f"dB must have shape {(P, N, d)}, got {dB.shape}")
    times = grid.times
    dt = grid.dt
    y = np.empty((P, N + 1, d))
    x = np.empty((P, N + 1))
    l_out = np.empty((P, N))
    s_out = np.empty((P, N))
    th_out = np.empty((P, N))
    y[:, 0, :] = model.initial_factor
    x[:, 0] = model.initial_wealth

    streams = {name: f.stream(P) for name, f in model.coefficients().items()}
    step_control = control.session(P)
    ext = model.extended

    for i in range(N):
        t = float(times[i])
        yi = y[:, i, :]
        xi = x[:, i]
        nu = streams["nu"].push(t, yi)
        kap = streams["kappa"].push(t, yi)
        th = np.broadcast_to(streams["theta"].push(t, yi), (P,))
        lam = np.broadcast_to(streams["lambda"].push(t, yi), (P,))
        l, s = step_control(i, t, times[: i + 1], y[:, : i + 1, :], x[:, : i + 1])
        if ext:
            r = np.broadcast_to(streams["rate"].push(t, yi), (P,))
            rho = np.broadcast_to(streams["rho"].push(t, xi[:, None]), (P,))
            drift = l * (th - r) + r
        else:
            drift = l * th
        vol = s * lam
        if scheme == "exact_exponential":
            x_next = xi * np.exp((drift - 0.5 * vol * vol) * dt + vol * dW[:, i])
        else:
            x_next = xi + drift * xi * dt + vol * xi * dW[:, i]
        if d == 1:
            dy = np.reshape(nu, (-1, 1)) * dt + np.reshape(kap, (-1, 1)) * dB[:, i, :]
        else:
            dy = np.broadcast_to(nu, (P, d)) * dt + np.einsum("pij,pj->pi", np.broadcast_to(kap, (P, d, d)), dB[:, i, :])
        if ext:
            dy = dy + (rho * (x_next - xi))[:, None]
        x[:, i + 1] = x_next
        y[:, i + 1, :] = yi + dy
        l_out[:, i] = l
        s_out[:, i] = s
        th_out[:, i] = th
        if not (np.all(np.isfinite(x_next)) and np.all(np.isfinite(y[:, i + 1, :]))):
            bad = int(np.flatnonzero(~np.isfinite(x_next) | ~np.all(np.isfinite(y[:, i + 1, :]), axis=1))[0])
            raise NumericalError(f"non-finite state on path {bad} at step {i + 1}")
    return y, x, l_out, s_out, th_out


def simulate(
    model: MarketModel,
    control: Policy | RelaxedControl,
    grid: SimulationGrid,
    path_count: int,
    seed: int,
    scheme: Scheme = "exact_exponential",
    workers: int = 1,
) -> PathBundle:
    """Simulate ``path_count`` joint trajectories under ``control``.

    Paths are integrated in blocks of :data:`BLOCK_SIZE`; ``workers > 1``
    spreads blocks over threads without changing any result.
    """
    if path_count < 1:
        raise InputError("path_count must be >= 1")
    d = model.dimension
    starts = list(range(0, path_count, BLOCK_SIZE))

    def run(lo: int):
        n = min(BLOCK_SIZE, path_count - lo)
        z = brownian_increments(seed, grid, n, d + 1, first_path=lo)
        # noise column 0 drives wealth, columns 1..d the factor
        return integrate(model, control, grid, z[:, :, 1:], z[:, :, 0], scheme)

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(lo) for lo in starts]
    y, x, l, s, th = (np.concatenate([p[k] for p in parts], axis=0) for k in range(5))
    return PathBundle(
        grid=grid,
        y_paths=y,
        x_paths=x,
        seed=seed,
        scheme=scheme,
        control_kind=control.kind,
        drift_loading=l,
        diffusion_loading=s,
        theta_values=th,
        model=model,
        control=control,
    )


def resample_with_crn(bundle: PathBundle, new_control: Policy | RelaxedControl, workers: int = 1) -> PathBundle:
    """Re-simulate ``bundle`` under another control on the same Brownian increments."""
    if bundle.model is None:
        raise InputError("bundle does not carry its model; cannot re-simulate")
    return simulate(bundle.model, new_control, bundle.grid, bundle.path_count, bundle.seed, bundle.scheme, workers)


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentReport:
    exponent: float
    estimate: float
    se: float
    sample_count: int


def _zeta_norm(bundle: PathBundle) -> FloatArray:
    y = bundle.y_paths
    return np.sqrt(np.sum(y * y, axis=-1) + bundle.x_paths ** 2)


def sup_norm_stats(bundle: PathBundle, exponent: float) -> MomentReport:
    """Monte-Carlo ``E[max_grid |(Y_t, X_t)|^m]`` with its standard error."""
    if not exponent > 0:
        raise InputError("exponent must be positive")
    sup = _zeta_norm(bundle).max(axis=1) ** exponent
    n = sup.size
    se = float(sup.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return MomentReport(float(exponent), float(sup.mean()), se, n)


@dataclass
class HolderReport:
    eta: float
    lags: list[int]
    lag_times: FloatArray
    moments: FloatArray
    ses: FloatArray
    slope: float
    intercept: float
    k_hat: float
    violations: list[int]

    @property
    def ok(self) -> bool:
        return not self.violations


def holder_increment_check(
    model: MarketModel,
    control: Policy | RelaxedControl,
    grid: SimulationGrid,
    path_count: int,
    seed: int,
    eta: float,
    lag_set: list[int],
    scheme: Scheme = "exact_exponential",
) -> HolderReport:
    """Estimate ``E|zeta_t - zeta_s|^eta`` per lag and fit the log-log slope.

    Moments average over every start index and every path; standard errors
    come from the per-path averages.  ``K_hat`` is taken from the largest
    lag, and a lag is flagged when its moment exceeds
    ``K_hat * lag^(eta/2)`` by more than three standard errors.
    """
    if len(lag_set) < 3:
        raise InputError("holder_increment_check needs at least 3 lags")
    if eta < 1:
        raise InputError("eta must be >= 1")
    lags = sorted(int(k) for k in lag_set)
    if lags[0] < 1 or lags[-1] > grid.steps:
        raise InputError("lags must lie within the grid")
    bundle = simulate(model, control, grid, path_count, seed, scheme)
    zeta = np.concatenate([bundle.y_paths, bundle.x_paths[:, :, None]], axis=-1)
    moments, ses = [], []
    for k in lags:
        inc = zeta[:, k:, :] - zeta[:, :-k, :]
        per_path = (np.sqrt(np.sum(inc * inc, axis=-1)) ** eta).mean(axis=1)
        moments.append(per_path.mean())
        ses.append(per_path.std(ddof=1) / math.sqrt(path_count) if path_count > 1 else 0.0)
    moments = np.array(moments)
    ses = np.array(ses)
    lag_times = np.array(lags) * grid.dt
    positive = moments > 0
    if positive.sum() >= 2:
        slope, intercept = np.polyfit(np.log(lag_times[positive]), np.log(moments[positive]), 1)
    else:
        slope, intercept = math.nan, -math.inf
    k_hat = float(moments[-1] / lag_times[-1] ** (eta / 2))
    envelope = k_hat * lag_times ** (eta / 2)
    violations = [lags[j] for j in range(len(lags)) if moments[j] > envelope[j] + 3 * ses[j]]
    return HolderReport(float(eta), lags, lag_times, moments, ses, float(slope), float(intercept), k_hat, violations)


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_bundle_csv(bundle: PathBundle, dest: str | os.PathLike | TextIO, header: dict[str, object] | None = None) -> None:
    """Write ``path_id,step,t,y_1..y_d,x`` rows with 17-significant-digit floats.

    ``header`` entries are written first as ``# key: value`` comment lines.
    """
    own = not hasattr(dest, "write")
    fh = open(dest, "w", newline="") if own else dest
    try:
        meta = {"seed": bundle.seed, "scheme": bundle.scheme, "control_kind": bundle.control_kind,
                "horizon": _fmt(bundle.grid.horizon), "steps": bundle.grid.steps}
        meta.update(header or {})
        for k, v in meta.items():
            for line in str(v).splitlines() or [""]:
                fh.write(f"# {k}: {line}\n")
        d = bundle.y_paths.shape[-1]
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path_id", "step", "t"] + [f"y_{j + 1}" for j in range(d)] + ["x"])
        times = bundle.times
        for p in range(bundle.path_count):
            for i in range(bundle.grid.steps + 1):
                writer.writerow([p, i, _fmt(times[i])] + [_fmt(v) for v in bundle.y_paths[p, i]] + [_fmt(bundle.x_paths[p, i])])
    finally:
        if own:
            fh.close()


def read_bundle_csv(src: str | os.PathLike | TextIO) -> PathBundle:
    """Read a CSV written by :func:`write_bundle_csv` back into arrays.

    The returned bundle carries no model or control.
    """
    text = src.read() if hasattr(src, "read") else open(src).read()
    meta: dict[str, str] = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(":")
            meta.setdefault(key.strip(), value.strip())
        elif line:
            body.append(line)
    rows = list(csv.reader(io.StringIO("\n".join(body))))
    head, data = rows[0], rows[1:]
    d = sum(h.startswith("y_") for h in head)
    arr = np.array([[float(v) for v in r] for r in data])
    P = int(arr[:, 0].max()) + 1
    N = int(arr[:, 1].max())
    arr = arr.reshape(P, N + 1, -1)
    grid = SimulationGrid(float(meta.get("horizon", arr[0, -1, 2])), N)
    return PathBundle(
        grid=grid,
        y_paths=np.ascontiguousarray(arr[:, :, 3 : 3 + d]),
        x_paths=np.ascontiguousarray(arr[:, :, 3 + d]),
        seed=int(meta.get("seed", -1)),
        scheme=meta.get("scheme", "exact_exponential"),  # type: ignore[arg-type]
        control_kind=meta.get("control_kind", "policy"),  # type: ignore[arg-type]
    )
