"""``cptinvest`` command-line interface.

Exit codes: 0 ok, 1 configuration parse error, 2 model validation failure,
3 preference / well-posedness failure, 4 verification failure,
5 numerical abort.  Every output file starts with ``#`` header lines that
embed the fully resolved configuration; ``run.meta`` repeats it together
with the list of files written.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .cpt import evaluate, validate_preferences
from .errors import (
    ConfigError,
    ControlError,
    ModelValidationError,
    NumericalError,
    PreferenceError,
    WellPosednessError,
)
from .market import validate_model
from .optimize import PolicyFamily, optimize, write_trace_csv
from .paths import simulate, write_bundle_csv
from .relaxed import _linear_parts, support_function
from .verify import run_suites

__all__ = ["main", "build_parser", "OUT_ENV", "EXIT_OK", "EXIT_PARSE", "EXIT_MODEL", "EXIT_PREFS", "EXIT_VERIFY", "EXIT_NUMERIC"]

OUT_ENV = "CPTINVEST_OUT"
EXIT_OK, EXIT_PARSE, EXIT_MODEL, EXIT_PREFS, EXIT_VERIFY, EXIT_NUMERIC = range(6)

_ASSUMPTION = {
    "theta_nonnegative": "non-negativity assumption on theta",
    "rate_nonnegative": "non-negativity assumption on the riskless rate",
    "theta_above_rate": "growth-rate ordering theta >= r",
    "bound": "uniform boundedness of the coefficients",
    "unbounded": "uniform boundedness of the coefficients",
}


class _Abort(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cptinvest", description="Simulate, evaluate, verify and optimise CPT portfolio strategies.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (
        ("simulate", "simulate wealth and factor paths under the configured policy"),
        ("evaluate", "estimate the CPT value of the configured policy"),
        ("verify", "run the geometric and statistical property suites"),
        ("optimize", "search the configured policy family for the best CPT value"),
    ):
        s = sub.add_parser(name, help=text, description=text)
        s.add_argument("--config", required=True, help="INI configuration file")
        s.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and [output] dir)")
        s.add_argument("--seed", type=int, help="master seed (overrides [grid] seed)")
        s.add_argument("--threads", type=int, default=1, help="worker threads for simulation; results do not depend on it")
    return p


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _out_dir(cfg: RunConfig, flag: str | None) -> Path:
    d = Path(flag or os.environ.get(OUT_ENV) or cfg.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _header(cfg: RunConfig, command: str) -> dict[str, object]:
    return {"cptinvest": __version__, "command": command, "seed": cfg.seed, "config": cfg.canonical()}


def _write_meta(out: Path, cfg: RunConfig, command: str, files: list[Path]) -> None:
    with open(out / "run.meta", "w", newline="\n") as fh:
        for k, v in _header(cfg, command).items():
            for line in str(v).splitlines() or [""]:
                fh.write(f"# {k}: {line}\n")
        for f in files:
            digest = hashlib.sha256(f.read_bytes()).hexdigest()
            fh.write(f"# output: {f.name} sha256={digest}\n")


def _check_model(cfg: RunConfig) -> None:
    rep = validate_model(cfg.model, probe_count=1000, rng_seed=cfg.seed)
    if not rep.ok:
        first = rep.violations[0]
        what = _ASSUMPTION.get(first.check, first.check)
        raise _Abort(
            EXIT_MODEL,
            f"model validation failed: {len(rep.violations)} violation(s) of the {what}; first: {first.detail} (config key model.{_key_for(first)})",
        )


def _key_for(v) -> str:
    if v.check in ("theta_nonnegative", "theta_above_rate"):
        return "theta"
    if v.check == "rate_nonnegative":
        return "rate"
    return v.detail.split("|")[1] if "|" in v.detail else "coefficients"


def _check_prefs(cfg: RunConfig):
    prefs = cfg.preferences
    if prefs is None:
        raise _Abort(EXIT_PARSE, "configuration error: missing section [preferences] (key 'preferences')")
    if not prefs.well_posed:
        raise _Abort(
            EXIT_PREFS,
            f"well-posedness assumption violated: theta_star * gamma = {prefs.theta_gamma:.6g} must exceed 1 "
            "(config keys preferences.theta_star, preferences.gamma)",
        )
    rep = validate_preferences(prefs, model=cfg.model, seed=cfg.seed)
    if not rep.ok:
        first = rep.violations[0]
        raise _Abort(EXIT_PREFS, f"preference validation failed: {len(rep.violations)} violation(s); first [{first.check}]: {first.detail}")
    return prefs, rep


def _simulate(cfg: RunConfig, threads: int):
    return simulate(cfg.model, cfg.policy, cfg.grid, cfg.path_count, cfg.seed, cfg.scheme, workers=max(1, threads))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    _check_model(cfg)
    bundle = _simulate(cfg, threads)
    path = out / "paths.csv"
    write_bundle_csv(bundle, path, _header(cfg, "simulate"))
    xt = bundle.terminal_wealth
    qs = (0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99)
    qv = np.quantile(xt, qs)
    summary = out / "summary.csv"
    with open(summary, "w", newline="") as fh:
        for k, v in _header(cfg, "simulate").items():
            for line in str(v).splitlines() or [""]:
                fh.write(f"# {k}: {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["statistic", "value"])
        w.writerow(["mean", format(float(xt.mean()), ".17g")])
        w.writerow(["std", format(float(xt.std(ddof=1)) if xt.size > 1 else 0.0, ".17g")])
        for q, v in zip(qs, qv):
            w.writerow([f"q{q:g}", format(float(v), ".17g")])
    _write_meta(out, cfg, "simulate", [path, summary])
    print(f"simulated {bundle.path_count} paths x {cfg.grid.steps} steps ({cfg.scheme}, seed {cfg.seed})")
    print(f"terminal wealth: mean {xt.mean():.6g}, " + ", ".join(f"q{q:g} {v:.6g}" for q, v in zip(qs, qv)))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    _check_model(cfg)
    prefs, prep = _check_prefs(cfg)
    bundle = _simulate(cfg, threads)
    report = evaluate(bundle, prefs, bootstrap=cfg.bootstrap)
    path = out / "report.csv"
    with open(path, "w", newline="") as fh:
        for k, v in _header(cfg, "evaluate").items():
            for line in str(v).splitlines() or [""]:
                fh.write(f"# {k}: {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(report.CSV_FIELDS)
        w.writerow(report.csv_row())
    _write_meta(out, cfg, "evaluate", [path])
    print(report.text())
    print(f"  loss-side benchmark integral on random factor paths = {prep.notes['loss_benchmark_proxy']:.10g}")
    print(f"wrote {path}")
    return EXIT_OK


def _vertex_only_support(ctx, u, v) -> float:
    """Deliberately incomplete support function (vertices only), for self-tests."""
    fixed, c1, c2 = _linear_parts(ctx, u, v)
    return fixed + max(0.0, c1, c1 + c2)


def cmd_verify(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    opts = cfg.verify
    support = support_function if opts["support"] == "closed_form" else _vertex_only_support
    report = run_suites(
        cfg.model,
        cfg.grid,
        path_count=opts["paths"],
        seed=cfg.seed,
        prefs=cfg.preferences,
        suites=opts["suites"],
        support=support,
        convexity_trials=opts["convexity_trials"],
        support_probes=opts["support_probes"],
        support_grid=opts["support_grid"],
    )
    path = out / "verify.csv"
    report.write_csv(path, _header(cfg, "verify"))
    _write_meta(out, cfg, "verify", [path])
    print(report.table())
    if not report.ok:
        names = ", ".join(f"{r.name} ({r.invariant})" for r in report.failed)
        print(f"verification failed: {names}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_optimize(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    _check_model(cfg)
    prefs, _ = _check_prefs(cfg)
    opts = cfg.optimize
    if opts["family"] == "constant":
        family = PolicyFamily.constant()
    elif opts["family"] == "piecewise_constant_time":
        family = PolicyFamily.piecewise(cfg.model.horizon, opts["intervals"])
    else:
        family = PolicyFamily.feedback(cfg.model, cfg.grid, opts["intervals"], opts["bins"], seed=cfg.seed)
    if opts["budget"] < family.dimension + 1:
        raise _Abort(EXIT_PARSE, f"configuration error: budget must be at least {family.dimension + 1} (key 'optimize.budget')")
    result = optimize(
        family, cfg.model, prefs, cfg.grid, opts["paths"], cfg.seed, opts["budget"], opts["method"],
        scheme=cfg.scheme, bootstrap=cfg.bootstrap,
    )
    header = _header(cfg, "optimize")
    trace = out / "trace.csv"
    write_trace_csv(result, trace, header)
    res = out / "result.csv"
    with open(res, "w", newline="") as fh:
        for k, v in header.items():
            for line in str(v).splitlines() or [""]:
                fh.write(f"# {k}: {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", "seed"] + list(result.best_value.CSV_FIELDS))
        w.writerow(["in_sample", result.seed] + result.best_value.csv_row())
        if result.out_of_sample is not None:
            w.writerow(["out_of_sample", result.out_of_sample_seed] + result.out_of_sample.csv_row())
        w.writerow(["parameters", ""] + [format(float(v), ".17g") for v in result.best_parameters])
    _write_meta(out, cfg, "optimize", [trace, res])
    print(result.summary())
    print(f"wrote {trace} and {res}")
    return EXIT_OK


_COMMANDS = {"simulate": cmd_simulate, "evaluate": cmd_evaluate, "verify": cmd_verify, "optimize": cmd_optimize}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed_override=args.seed)
        out = _out_dir(cfg, args.out)
        return _COMMANDS[args.command](cfg, out, args.threads)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except _Abort as exc:
        print(str(exc), file=sys.stderr)
        return exc.code
    except ModelValidationError as exc:
        print(f"model validation failed: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (WellPosednessError, PreferenceError) as exc:
        print(f"preference error: {exc}", file=sys.stderr)
        return EXIT_PREFS
    except (NumericalError, ControlError, FloatingPointError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
