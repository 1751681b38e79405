"""Run configuration: one INI file describes the model, preferences and run.

Coefficients and preference components are written as a kind followed by
``key=value`` parameters, for example::

    [model]
    horizon = 1.0
    nu      = constant value=0.0
    kappa   = running_max scale=0.5 upper=1.0
    theta   = affine intercept=0.05 weights=0.01 lower=0 upper=0.2 bound=0.2
    lambda  = constant value=0.2

Vector coefficients separate components with ``|`` and matrix rows with
``;``.  A ``bound=`` parameter declares the sup-norm bound explicitly.
Every resolved configuration serialises back to canonical INI text, which
is embedded in output headers so that a run can be replayed from them.
"""

from __future__ import annotations

import configparser
import math
import os
import re
from dataclasses import dataclass, field
from typing import Callable

from .cpt import (
    Benchmark,
    DistortionPair,
    IdentityDistortion,
    PowerDistortion,
    PowerUtility,
    Preferences,
    TverskyKahnemanDistortion,
    UtilityPair,
)
from .errors import ConfigError, CptInvestError
from .market import (
    Affine,
    CoefficientFunctional,
    Constant,
    MarketModel,
    MatrixFunctional,
    RunningExtremum,
    SmoothBounded,
    TimeAffine,
    TimeIntegral,
    VectorFunctional,
)
from .paths import Policy, RelaxedControl, SimulationGrid, constant_policy

__all__ = ["RunConfig", "load_config", "parse_config", "config_from_header", "SCHEMA"]

# section -> key -> default (None marks a required key)
SCHEMA: dict[str, dict[str, str | None]] = {
    "model": {
        "horizon": None,
        "variant": "base",
        "initial_wealth": "1.0",
        "initial_factor": "0.0",
        "nu": None,
        "kappa": None,
        "theta": None,
        "lambda": None,
        "rho": "",
        "rate": "",
        "unique_in_law": "true",
    },
    "preferences": {
        "u_plus": "power exponent=0.88",
        "u_minus": "power exponent=0.88 scale=2.25",
        "k_plus": "1.0",
        "alpha": "0.88",
        "w_plus": "tk delta=0.61",
        "w_minus": "tk delta=0.69",
        "g_plus": "1.0",
        "gamma": "0.61",
        "benchmark": "constant value=1.0",
        "theta_star": "2.0",
    },
    "grid": {
        "steps": None,
        "paths": "10000",
        "seed": "0",
        "scheme": "exact_exponential",
        "bootstrap": "200",
    },
    "policy": {
        "kind": "constant",
        "phi": "0.0",
        "l": "0.0",
        "m": "0.0",
    },
    "optimize": {
        "family": "constant",
        "intervals": "4",
        "bins": "8",
        "budget": "25",
        "method": "grid_refine",
        "paths": "",
    },
    "verify": {
        "suites": "convexity, support_function, norm_bound, dominance, moments, holder",
        "paths": "2000",
        "convexity_trials": "10000",
        "support_probes": "1000",
        "support_grid": "1000",
        "support": "closed_form",
    },
    "output": {
        "dir": "cptinvest-out",
    },
}

_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$|^[+-]?inf$")


def _locate(text: str) -> dict[tuple[str, str], int]:
    """Line number of every ``key = value`` entry, by section."""
    where: dict[tuple[str, str], int] = {}
    section = ""
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
        elif "=" in line and not raw[:1].isspace():
            where[(section, line.split("=", 1)[0].strip().lower())] = no
    return where


class _Reader:
    def __init__(self, values: dict[str, dict[str, str]], lines: dict[tuple[str, str], int]):
        self.values = values
        self.lines = lines

    def err(self, section: str, key: str, msg: str) -> ConfigError:
        return ConfigError(msg, key=f"{section}.{key}", line=self.lines.get((section, key)))

    def raw(self, section: str, key: str) -> str:
        return self.values[section][key]

    def number(self, section: str, key: str, cast: Callable[[str], float] = float) -> float:
        s = self.raw(section, key)
        try:
            return cast(s)
        except ValueError:
            raise self.err(section, key, f"expected a number, got {s!r}") from None

    def choice(self, section: str, key: str, options: tuple[str, ...]) -> str:
        s = self.raw(section, key)
        if s not in options:
            raise self.err(section, key, f"expected one of {', '.join(options)}, got {s!r}")
        return s

    def floats(self, section: str, key: str) -> tuple[float, ...]:
        s = self.raw(section, key)
        try:
            return tuple(float(v) for v in s.split(",") if v.strip())
        except ValueError:
            raise self.err(section, key, f"expected comma-separated numbers, got {s!r}") from None


# ---------------------------------------------------------------------------
# component specs
# ---------------------------------------------------------------------------


def _parse_entry(text: str) -> tuple[str, dict[str, object]]:
    parts = text.split()
    if not parts:
        raise ValueError("empty specification")
    kind, params = parts[0].lower(), {}
    for token in parts[1:]:
        if "=" not in token:
            raise ValueError(f"parameter {token!r} is not of the form key=value")
        k, v = token.split("=", 1)
        items = [x for x in v.split(",") if x]
        if not items or not all(_NUMBER.match(x) for x in items):
            raise ValueError(f"parameter {k} has non-numeric value {v!r}")
        nums = tuple(float(x) for x in items)
        params[k] = nums[0] if len(nums) == 1 and "," not in v else nums
    return kind, params


_FUNCTIONALS: dict[str, tuple[Callable[..., CoefficientFunctional], tuple[str, ...]]] = {
    "constant": (Constant, ("value",)),
    "affine": (Affine, ("intercept", "weights", "lower", "upper")),
    "running_max": (lambda **kw: RunningExtremum("max", **kw), ("scale", "offset", "lower", "upper", "component")),
    "running_min": (lambda **kw: RunningExtremum("min", **kw), ("scale", "offset", "lower", "upper", "component")),
    "time_integral": (TimeIntegral, ("scale", "offset", "weights", "lower", "upper")),
    "smooth": (SmoothBounded, ("center", "amplitude", "slope", "shift", "weights")),
    "time_affine": (TimeAffine, ("a", "b", "lower", "upper")),
}


def _scalar_functional(text: str) -> CoefficientFunctional:
    kind, params = _parse_entry(text)
    if kind not in _FUNCTIONALS:
        raise ValueError(f"unknown coefficient kind {kind!r} (known: {', '.join(_FUNCTIONALS)})")
    factory, allowed = _FUNCTIONALS[kind]
    bound = params.pop("bound", None)
    unknown = set(params) - set(allowed)
    if unknown:
        raise ValueError(f"{kind} does not take {', '.join(sorted(unknown))}")
    if "component" in params:
        params["component"] = int(params["component"])
    if kind == "constant" and "value" not in params:
        raise ValueError("constant needs value=")
    f = factory(**params)
    return f.with_bound(float(bound)) if bound is not None else f


def _functional(text: str, dim: int, matrix: bool) -> CoefficientFunctional:
    if dim == 1:
        return _scalar_functional(text)
    if matrix:
        rows = [r for r in text.split(";")]
        entries = tuple(tuple(_scalar_functional(c) for c in r.split("|")) for r in rows)
        if len(entries) != dim or any(len(r) != dim for r in entries):
            raise ValueError(f"expected a {dim}x{dim} matrix of specifications")
        return MatrixFunctional(entries)
    comps = tuple(_scalar_functional(c) for c in text.split("|"))
    if len(comps) != dim:
        raise ValueError(f"expected {dim} components separated by '|'")
    return VectorFunctional(comps)


def _utility(text: str) -> PowerUtility:
    kind, params = _parse_entry(text)
    if kind != "power" or set(params) - {"exponent", "scale"}:
        raise ValueError("utility must be 'power exponent=.. [scale=..]'")
    return PowerUtility(**params)


def _distortion(text: str):
    kind, params = _parse_entry(text)
    if kind == "identity" and not params:
        return IdentityDistortion()
    if kind == "power" and set(params) == {"exponent"}:
        return PowerDistortion(params["exponent"])
    if kind == "tk" and set(params) == {"delta"}:
        return TverskyKahnemanDistortion(params["delta"])
    raise ValueError("distortion must be 'identity', 'power exponent=..' or 'tk delta=..'")


# ---------------------------------------------------------------------------
# resolved configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    """Parsed configuration plus its canonical text form."""

    values: dict[str, dict[str, str]]
    model: MarketModel
    grid: SimulationGrid
    path_count: int
    seed: int
    scheme: str
    bootstrap: int
    policy: Policy | RelaxedControl
    preferences: Preferences | None
    optimize: dict[str, object] = field(default_factory=dict)
    verify: dict[str, object] = field(default_factory=dict)
    output_dir: str = "cptinvest-out"
    source: str = "<string>"

    def canonical(self) -> str:
        """INI text with every default filled in; parses back to this config."""
        out = []
        for section, keys in self.values.items():
            out.append(f"[{section}]")
            out.extend(f"{k} = {v}" for k, v in keys.items())
            out.append("")
        return "\n".join(out).rstrip("\n") + "\n"


def parse_config(text: str, source: str = "<string>", seed_override: int | None = None) -> RunConfig:
    """Parse INI ``text``; errors name the offending key and line."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str.lower  # type: ignore[assignment]
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}", line=getattr(exc, "lineno", None)) from None
    lines = _locate(text)
    has_prefs = parser.has_section("preferences")
    values: dict[str, dict[str, str]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", key=section)
        for key in parser[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key in [{section}]", key=f"{section}.{key}", line=lines.get((section, key)))
    for section, keys in SCHEMA.items():
        if section == "preferences" and not has_prefs:
            continue
        values[section] = {}
        for key, default in keys.items():
            if parser.has_option(section, key):
                values[section][key] = parser.get(section, key).strip()
            elif default is None:
                raise ConfigError("missing required key", key=f"{section}.{key}")
            else:
                values[section][key] = default
    if seed_override is not None:
        values["grid"]["seed"] = str(int(seed_override))
    r = _Reader(values, lines)

    # model
    variant = r.choice("model", "variant", ("base", "extended"))
    y0 = r.floats("model", "initial_factor")
    dim = len(y0)
    if dim == 0:
        raise r.err("model", "initial_factor", "at least one factor coordinate is required")
    funcs: dict[str, CoefficientFunctional | None] = {}
    for key in ("nu", "kappa", "theta", "lambda", "rho", "rate"):
        entry = r.raw("model", key)
        if key in ("rho", "rate"):
            if variant == "base":
                if entry:
                    raise r.err("model", key, f"{key} is only allowed for the extended variant")
                funcs[key] = None
                continue
            if not entry:
                raise ConfigError("missing required key for the extended variant", key=f"model.{key}")
        try:
            d = dim if key in ("nu", "kappa") else 1
            funcs[key] = _functional(entry, d, matrix=(key == "kappa"))
        except (ValueError, TypeError, CptInvestError) as exc:
            raise r.err("model", key, str(exc)) from None
    unique = r.raw("model", "unique_in_law").lower()
    if unique not in ("true", "false"):
        raise r.err("model", "unique_in_law", "expected true or false")
    try:
        model = MarketModel(
            horizon=r.number("model", "horizon"),
            nu=funcs["nu"],
            kappa=funcs["kappa"],
            theta=funcs["theta"],
            lam=funcs["lambda"],
            initial_wealth=r.number("model", "initial_wealth"),
            initial_factor=y0,
            variant=variant,
            rho=funcs["rho"],
            rate=funcs["rate"],
            unique_in_law=unique == "true",
        )
    except CptInvestError as exc:
        raise ConfigError(f"invalid model: {exc}", key="model") from None

    # grid
    steps = int(r.number("grid", "steps", int))
    if steps < 1:
        raise r.err("grid", "steps", "must be >= 1")
    paths = int(r.number("grid", "paths", int))
    if paths < 1:
        raise r.err("grid", "paths", "must be >= 1")
    bootstrap = int(r.number("grid", "bootstrap", int))
    if bootstrap < 0:
        raise r.err("grid", "bootstrap", "must be >= 0")
    grid = SimulationGrid(model.horizon, steps)

    # policy
    kind = r.choice("policy", "kind", ("constant", "piecewise", "relaxed"))
    policy: Policy | RelaxedControl
    if kind == "constant":
        phi = r.number("policy", "phi")
        if not 0.0 <= phi <= 1.0:
            raise r.err("policy", "phi", "must lie in [0, 1]")
        policy = constant_policy(phi)
    elif kind == "piecewise":
        from .optimize import PolicyFamily

        phis = r.floats("policy", "phi")
        if not phis or any(not 0.0 <= p <= 1.0 for p in phis):
            raise r.err("policy", "phi", "needs values in [0, 1], one per interval")
        policy = PolicyFamily.piecewise(model.horizon, len(phis)).policy(phis)
    else:
        l, m = r.number("policy", "l"), r.number("policy", "m")
        if not 0.0 <= m <= 1.0:
            raise r.err("policy", "m", "must lie in [0, 1]")
        if not 0.0 <= l <= math.sqrt(m):
            raise r.err("policy", "l", "must lie in [0, sqrt(m)]")
        policy = RelaxedControl.constant(l, m)

    # preferences
    prefs = None
    if has_prefs:
        try:
            utilities = UtilityPair(
                _utility(r.raw("preferences", "u_plus")),
                _utility(r.raw("preferences", "u_minus")),
                k_plus=r.number("preferences", "k_plus"),
                alpha=r.number("preferences", "alpha"),
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc), key="preferences.u_plus/u_minus") from None
        dist = []
        for key in ("w_plus", "w_minus"):
            try:
                dist.append(_distortion(r.raw("preferences", key)))
            except (ValueError, TypeError) as exc:
                raise r.err("preferences", key, str(exc)) from None
        try:
            bench = _scalar_functional(r.raw("preferences", "benchmark"))
        except (ValueError, TypeError, CptInvestError) as exc:
            raise r.err("preferences", "benchmark", str(exc)) from None
        prefs = Preferences(
            utilities,
            DistortionPair(dist[0], dist[1], g_plus=r.number("preferences", "g_plus"), gamma=r.number("preferences", "gamma")),
            Benchmark(bench, r.number("preferences", "theta_star")),
        )

    opt = {
        "family": r.choice("optimize", "family", ("constant", "piecewise_constant_time", "feedback_grid")),
        "intervals": int(r.number("optimize", "intervals", int)),
        "bins": int(r.number("optimize", "bins", int)),
        "budget": int(r.number("optimize", "budget", int)),
        "method": r.choice("optimize", "method", ("grid_refine", "nelder_mead", "cross_entropy")),
        "paths": int(r.number("optimize", "paths", int)) if r.raw("optimize", "paths") else paths,
    }
    from .verify import SUITES

    suites = tuple(s.strip() for s in r.raw("verify", "suites").split(",") if s.strip())
    bad = [s for s in suites if s not in SUITES]
    if bad:
        raise r.err("verify", "suites", f"unknown suites {', '.join(bad)} (known: {', '.join(SUITES)})")
    ver = {
        "suites": suites,
        "paths": int(r.number("verify", "paths", int)),
        "convexity_trials": int(r.number("verify", "convexity_trials", int)),
        "support_probes": int(r.number("verify", "support_probes", int)),
        "support_grid": int(r.number("verify", "support_grid", int)),
        "support": r.choice("verify", "support", ("closed_form", "vertex_only")),
    }
    return RunConfig(
        values=values,
        model=model,
        grid=grid,
        path_count=paths,
        seed=int(r.number("grid", "seed", int)),
        scheme=r.choice("grid", "scheme", ("exact_exponential", "euler")),
        bootstrap=bootstrap,
        policy=policy,
        preferences=prefs,
        optimize=opt,
        verify=ver,
        output_dir=r.raw("output", "dir"),
        source=source,
    )


def load_config(path: str | os.PathLike, seed_override: int | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc}") from None
    return parse_config(text, source=str(path), seed_override=seed_override)


def config_from_header(path: str | os.PathLike) -> str:
    """Recover the embedded configuration text from an output file's ``# config:`` lines."""
    lines = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            if line.startswith("# config: "):
                lines.append(line[len("# config: "):].rstrip("\n"))
            elif line.rstrip("\n") == "# config:":
                lines.append("")
    if not lines:
        raise ConfigError(f"no embedded configuration in {path}")
    return "\n".join(lines) + "\n"
