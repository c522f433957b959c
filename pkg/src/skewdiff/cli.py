"""Batch front end: INI-style config in, CSV data plus JSON metadata out.

Each invocation runs one command named in the config, writes one CSV of
row data to the configured output path and one JSON sidecar next to it
holding a normalized config echo, the seed, version and wall time,
fitted constants and the oracle descriptions of every reference used.
Exit status: 0 on success, 2 on config errors, 3 on numeric failures.
"""

from __future__ import annotations

import configparser
import json
import math
import subprocess
import sys
import time
from argparse import ArgumentParser
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (ExperimentSpec, _DENSITY_OFFSETS, slope_fit,
                          two_sided_bound_experiment, weak_error_density,
                          weak_error_functional)
from .model import Coefficients, MODEL_BUILDERS, TimeGrid, make_model, \
    validate_assumptions
from .parametrix import SeriesConfig, density_series, fit_gaussian_envelope
from .scheme import mc_terminal_samples, scheme_density_series

COMMANDS = ("simulate", "density", "rate-functional", "rate-density",
            "bounds", "validate")


class ConfigError(Exception):
    """Config file problem; the message names the section and key."""


@dataclass(frozen=True)
class CliConfig:
    """Parsed and validated run description."""

    command: str
    coeffs: Coefficients
    T: float
    N_values: tuple
    x0: float
    n_paths: int
    seed: int
    threads: int | None
    output: Path
    test_function: str
    reference: str
    lattice: tuple | None
    series: SeriesConfig | None
    echo: dict


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float) or isinstance(v, np.floating):
        return format(float(v), ".17g")
    return str(v)


def _cast(section, key, raw, kind):
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError("not finite")
            return v
    except ValueError as exc:
        raise ConfigError(
            f"[{section}] {key}: cannot read '{raw}' as {kind.__name__} "
            f"({exc})") from exc
    return raw


def _floats_list(section, key, raw):
    parts = [p for p in raw.replace(",", " ").split() if p]
    if not parts:
        raise ConfigError(f"[{section}] {key}: empty list")
    return tuple(_cast(section, key, p, float) for p in parts)


def _ints_list(section, key, raw):
    vals = tuple(_cast(section, key, p, int)
                 for p in raw.replace(",", " ").split() if p)
    if not vals:
        raise ConfigError(f"[{section}] {key}: empty list")
    if any(n < 1 for n in vals):
        raise ConfigError(f"[{section}] {key}: entries must be >= 1")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError(f"[{section}] {key}: entries must be strictly "
                          "increasing")
    return vals


def _section(cp, name):
    if not cp.has_section(name):
        raise ConfigError(f"missing required section [{name}]")
    return dict(cp.items(name))


def _pop(d, section, key, kind=str, default=None, required=False):
    if key not in d:
        if required:
            raise ConfigError(f"[{section}] {key}: required key is missing")
        return default
    return _cast(section, key, d.pop(key), kind)


_SERIES_KEYS = (("series_order", "order", int),
                ("series_time_slices", "time_slices", int),
                ("series_nodes_per_side", "nodes_per_side", int),
                ("series_max_slice_nodes", "max_slice_nodes", int),
                ("series_radius", "radius", float))


def _parse_model(cp) -> tuple:
    """Resolve [model] to (Coefficients, echo dict)."""
    sec = _section(cp, "model")
    if "name" in sec:
        name = sec.pop("name")
        params = {k: _cast("model", k, v, float) for k, v in sec.items()}
        try:
            coeffs = make_model(name, **params)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[model] {exc}") from exc
        echo = {"name": name}
        echo.update({k: _fmt(v) for k, v in sorted(params.items())})
        return coeffs, echo
    # Inline spec: constant drift and sigma plus explicit regularity data.
    for key in ("drift", "sigma", "alpha"):
        if key not in sec:
            raise ConfigError(f"[model] {key}: required for an inline model "
                              "(or give a catalog 'name')")

    def kind_value(key):
        parts = sec.pop(key).split()
        if len(parts) != 2 or parts[0] != "constant":
            raise ConfigError(f"[model] {key}: inline coefficients must be "
                              f"'constant VALUE', got '{' '.join(parts)}'")
        return _cast("model", key, parts[1], float)

    bval = kind_value("drift")
    sval = kind_value("sigma")
    alpha = _pop(sec, "model", "alpha", float, required=True)
    try:
        base = make_model("constant", alpha=alpha, drift=bval, sigma=sval)
        coeffs = replace(
            base, name="inline",
            eta=_pop(sec, "model", "eta", float, base.eta),
            L_bound=_pop(sec, "model", "L", float, base.L_bound),
            lambda_ell=_pop(sec, "model", "lambda", float, base.lambda_ell))
    except ValueError as exc:
        raise ConfigError(f"[model] {exc}") from exc
    if sec:
        raise ConfigError(f"[model] unknown keys: {', '.join(sorted(sec))}")
    echo = {"drift": f"constant {_fmt(bval)}",
            "sigma": f"constant {_fmt(sval)}", "alpha": _fmt(coeffs.alpha),
            "eta": _fmt(coeffs.eta), "L": _fmt(coeffs.L_bound),
            "lambda": _fmt(coeffs.lambda_ell)}
    return coeffs, echo


def load_config(path, overrides=()) -> CliConfig:
    """Parse, apply --set overrides, validate, and resolve a config file."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case-sensitive (T vs t)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cp.read_file(fh, source=str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read '{path}': {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for item in overrides:
        target, _, value = item.partition("=")
        section, _, key = target.partition(".")
        if not (section and key and _):
            raise ConfigError(f"override '{item}' is not "
                              "section.key=value")
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, value)

    run = _section(cp, "run")
    command = _pop(run, "run", "command", str, required=True)
    if command not in COMMANDS:
        raise ConfigError(f"[run] command: '{command}' is not one of "
                          f"{', '.join(COMMANDS)}")
    coeffs, model_echo = _parse_model(cp)

    if cp.has_section("grid"):
        grid = _section(cp, "grid")
        T = _pop(grid, "grid", "T", float, required=True)
        if T <= 0.0:
            raise ConfigError("[grid] T: must be positive")
        n_raw = grid.pop("N", None)
        if n_raw is None:
            raise ConfigError("[grid] N: required key is missing")
        N_values = _ints_list("grid", "N", n_raw)
        if grid:
            raise ConfigError(
                f"[grid] unknown keys: {', '.join(sorted(grid))}")
    elif command == "validate":
        T, N_values = 1.0, (1,)
    else:
        raise ConfigError("missing required section [grid]")
    if command in ("simulate", "density") and len(N_values) != 1:
        raise ConfigError(f"[grid] N: '{command}' takes a single N")
    if command in ("rate-functional", "rate-density") and len(N_values) < 3:
        raise ConfigError("[grid] N: rate commands need at least three "
                          "N values")
    if command == "bounds":
        if N_values[-1] % 4 != 0:
            raise ConfigError("[grid] N: bounds needs the finest N to be "
                              "a multiple of 4")
        if len(N_values) < 3:
            N = N_values[-1]
            N_values = tuple(sorted({max(1, N // 4), max(2, N // 2), N}))
            if len(N_values) < 3:
                raise ConfigError("[grid] N: bounds needs N >= 4")

    output = run.pop("output", None)
    if output is None:
        raise ConfigError("[run] output: required key is missing")
    seed = _pop(run, "run", "seed", int, 0)
    n_paths = _pop(run, "run", "n_paths", int, 100_000)
    if n_paths < 1:
        raise ConfigError("[run] n_paths: must be >= 1")
    threads = _pop(run, "run", "threads", int, 0)
    if threads < 0:
        raise ConfigError("[run] threads: must be >= 0 (0 = all cores)")
    x0 = _pop(run, "run", "x0", float, 0.0)
    tf = _pop(run, "run", "test_function", str, "cos")
    reference = _pop(run, "run", "reference", str, "auto")
    if reference not in ("auto", "closed-form", "richardson", "quadrature"):
        raise ConfigError(f"[run] reference: unknown mode '{reference}'")
    lattice = None
    if "lattice" in run:
        lattice = _floats_list("run", "lattice", run.pop("lattice"))
    series_kwargs = {}
    for cfg_key, field, kind in _SERIES_KEYS:
        if cfg_key in run:
            series_kwargs[field] = _cast("run", cfg_key, run.pop(cfg_key),
                                         kind)
    try:
        series = SeriesConfig(**series_kwargs) if series_kwargs else None
    except ValueError as exc:
        raise ConfigError(f"[run] series override: {exc}") from exc
    if run:
        raise ConfigError(f"[run] unknown keys: {', '.join(sorted(run))}")

    echo_run = {"command": command, "output": str(output),
                "seed": _fmt(seed), "n_paths": _fmt(n_paths),
                "threads": _fmt(threads), "x0": _fmt(x0),
                "test_function": tf, "reference": reference}
    if lattice is not None:
        echo_run["lattice"] = ",".join(_fmt(v) for v in lattice)
    for cfg_key, field, _kind in _SERIES_KEYS:
        if field in series_kwargs:
            echo_run[cfg_key] = _fmt(series_kwargs[field])
    echo = {"run": echo_run, "model": model_echo,
            "grid": {"T": _fmt(T), "N": ",".join(_fmt(n)
                                                 for n in N_values)}}
    return CliConfig(command=command, coeffs=coeffs, T=T,
                     N_values=N_values, x0=x0, n_paths=n_paths, seed=seed,
                     threads=threads or None, output=Path(output),
                     test_function=tf, reference=reference, lattice=lattice,
                     series=series, echo=echo)


def _running_slopes(h_values, errors):
    out = []
    for k in range(len(errors)):
        if k + 1 >= 3 and all(e > 0.0 for e in errors[:k + 1]):
            s, _, _ = slope_fit(zip(h_values[:k + 1], errors[:k + 1]))
            out.append(s)
        else:
            out.append(float("nan"))
    return out


def _spec(cfg: CliConfig, n_values=None) -> ExperimentSpec:
    return ExperimentSpec(
        model=cfg.coeffs, T=cfg.T, N_values=n_values or cfg.N_values,
        x0=cfg.x0, test_function=cfg.test_function, lattice=cfg.lattice,
        n_paths=cfg.n_paths, seed=cfg.seed, threads=cfg.threads,
        reference=cfg.reference, series=cfg.series)


def _run_simulate(cfg: CliConfig):
    grid = TimeGrid(cfg.T, cfg.N_values[-1])
    samples = mc_terminal_samples(cfg.coeffs, grid, cfg.x0, cfg.n_paths,
                                  cfg.seed, threads=cfg.threads)
    rows = list(enumerate(samples.tolist()))
    oracle = ("terminal states from per-step exact sampling of the frozen "
              "skew transition, counter-based streams per path block")
    return ["path", "x_T"], rows, {}, [oracle], []


def _density_points(cfg: CliConfig):
    if cfg.lattice is not None:
        ys = np.asarray(cfg.lattice, dtype=float)
    else:
        scale = math.sqrt(float(cfg.coeffs.a(cfg.x0)) * cfg.T)
        ys = cfg.x0 + scale * np.asarray(_DENSITY_OFFSETS)
    return np.where(ys == 0.0, 1e-9, ys)


def _run_density(cfg: CliConfig):
    N = cfg.N_values[-1]
    ys = _density_points(cfg)
    cont = density_series(cfg.coeffs, cfg.series, cfg.T, cfg.x0, ys)
    sch = scheme_density_series(cfg.coeffs, TimeGrid(cfg.T, N), None, 0, N,
                                cfg.x0, ys)
    cert = fit_gaussian_envelope(np.full(ys.size, cfg.T), ys - cfg.x0,
                                 cont.values, "upper")
    rows = [(float(y), float(p), float(pn), abs(float(p) - float(pn)))
            for y, p, pn in zip(ys, cont.values, sch.values)]
    fitted = {"envelope_C": cert.fitted_C, "envelope_c": cert.fitted_c}
    oracles = [f"continuous expansion, order {cont.order}",
               f"scheme expansion '{sch.kind}', order {sch.order} of {N}"]
    return (["y", "p_continuous", "p_scheme", "abs_gap"], rows, fitted,
            oracles, [])


def _run_rate_functional(cfg: CliConfig):
    rep = weak_error_functional(_spec(cfg))
    ses = rep.std_errors or (0.0,) * len(rep.errors)
    slopes = _running_slopes(rep.h_values, rep.errors)
    rows = [(n, h, e, se, s) for n, h, e, se, s
            in zip(rep.N_values, rep.h_values, rep.errors, ses, slopes)]
    fitted = {"slope": rep.slope, "intercept": rep.intercept,
              "residual": rep.residual,
              "theoretical_slope": rep.theoretical_slope}
    return (["N", "h", "error", "std_error", "slope_running"], rows, fitted,
            [rep.oracle], list(rep.flags))


def _run_rate_density(cfg: CliConfig):
    rep = weak_error_density(_spec(cfg))
    comp = dict(rep.components)
    sups = comp.get("sup_abs_error", rep.errors)
    env_C, env_c = comp.get("fitted_envelope", (float("nan"),) * 2)
    slopes = _running_slopes(rep.h_values, rep.errors)
    rows = [(n, h, s_abs, e, s) for n, h, s_abs, e, s
            in zip(rep.N_values, rep.h_values, sups, rep.errors, slopes)]
    fitted = {"C": env_C, "c": env_c, "slope": rep.slope,
              "intercept": rep.intercept, "residual": rep.residual,
              "theoretical_slope": rep.theoretical_slope,
              "resolution_floor": comp.get("resolution_floor", (None,))[0]}
    return (["N", "h", "sup_norm_error", "normalized_error",
             "slope_running"], rows, fitted, [rep.oracle], list(rep.flags))


def _run_bounds(cfg: CliConfig):
    rep = two_sided_bound_experiment(_spec(cfg))
    rows = []
    fitted = {}
    for side, cert in (("upper", rep.upper), ("lower", rep.lower)):
        rows.append((side, cert.fitted_C, cert.fitted_c,
                     cert.max_violation, rep.n_points, rep.n_excluded))
        fitted[side] = {"C": cert.fitted_C, "c": cert.fitted_c,
                        "max_violation": cert.max_violation}
    flags = [] if rep.upper.max_violation <= 0.0 \
        and rep.lower.max_violation <= 0.0 else ["bound-violated"]
    return (["side", "C", "c", "max_violation", "n_points", "n_excluded"],
            rows, fitted, [rep.lattice], flags)


def _run_validate(cfg: CliConfig):
    half = 4.0 * math.sqrt(cfg.coeffs.lambda_ell * cfg.T) + 1.0
    probes = np.linspace(cfg.x0 - half, cfg.x0 + half, 241)
    report = validate_assumptions(cfg.coeffs, probes, seed=cfg.seed)
    rows = [(name, int(c.passed), c.observed, c.bound,
             ";".join(_fmt(w) for w in c.witness))
            for name, c in report.conditions.items()]
    flags = [] if report.passed else ["assumption-violated"]
    oracle = (f"sampled checks on {probes.size} probe points over "
              f"[{probes[0]:.6g}, {probes[-1]:.6g}]")
    return (["condition", "passed", "observed", "bound", "witness"], rows,
            {"passed": report.passed}, [oracle], flags)


_RUNNERS = {"simulate": _run_simulate, "density": _run_density,
            "rate-functional": _run_rate_functional,
            "rate-density": _run_rate_density, "bounds": _run_bounds,
            "validate": _run_validate}


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _sidecar_path(output: Path) -> Path:
    if output.suffix == ".csv":
        return output.with_suffix(".json")
    return Path(str(output) + ".json")


def _version_string() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent, capture_output=True,
            text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except OSError:
        pass
    return __version__


def _arg_parser() -> ArgumentParser:
    p = ArgumentParser(
        prog="skewdiff",
        description="Run a skew-diffusion experiment described by an "
                    "INI-style config and write CSV + JSON outputs.")
    p.add_argument("config", help="path to the config file")
    p.add_argument("--set", action="append", default=[], metavar="S.K=V",
                   help="override a config entry, e.g. --set run.threads=2")
    return p


def main(argv=None) -> int:
    args = _arg_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    try:
        header, rows, fitted, oracles, flags = _RUNNERS[cfg.command](cfg)
    except Exception as exc:  # numeric phase: report context, signal 3
        print(f"numeric error in '{cfg.command}': "
              f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    wall = time.perf_counter() - t0
    _write_csv(cfg.output, header, rows)
    meta = {"command": cfg.command, "config": cfg.echo, "seed": cfg.seed,
            "version": _version_string(),
            "wall_time_seconds": round(wall, 6), "fitted": fitted,
            "oracles": oracles, "flags": flags, "n_rows": len(rows),
            "csv": str(cfg.output)}
    sidecar = _sidecar_path(cfg.output)
    with open(sidecar, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"{cfg.command}: wrote {len(rows)} rows to {cfg.output} "
          f"(metadata: {sidecar})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
