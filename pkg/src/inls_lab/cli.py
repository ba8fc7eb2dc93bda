"""inls-lab command line.

Precedence for every setting: command-line flag, then the --config file, then
built-in defaults.
"""

from __future__ import annotations

import json
import math
import random
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional

import click

from .exponent_core import (
    ClassKind,
    HypothesisError,
    Pair,
    PairClass,
    ParamSet,
    classify_pair,
    fmt,
    range_window,
    rat,
    recip,
)
from .lemma_catalog import LEMMA_NAMES, lemma_by_name, verify_lemma
from .sampling import sample_params
from . import solver as sv

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_BLOWUP, EXIT_NAN = 0, 1, 2, 3, 4


# ---------------------------------------------------------------------------
# configuration


_SECTIONS: dict[str, set[str]] = {
    "params": {"N", "alpha", "b", "s", "theta", "mu", "epsilon", "lambda"},
    "grid": {"dim", "extent", "points"},
    "run": {"T", "dt", "sample_every", "amplitude_ceiling"},
    "output": {"dir", "formats"},
    "initial": {"profile", "width", "amplitude", "radius", "k"},
}


class ConfigError(click.ClickException):
    exit_code = EXIT_USAGE


@dataclass
class RunConfig:
    params: dict[str, Any] = field(default_factory=dict)
    grid: dict[str, Any] = field(default_factory=dict)
    run: dict[str, Any] = field(default_factory=dict)
    output: dict[str, Any] = field(default_factory=dict)
    initial: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def load(cls, path: Optional[str]) -> "RunConfig":
        if path is None:
            return cls()
        try:
            data = tomllib.loads(Path(path).read_text())
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_mapping(data)

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        cfg = cls()
        for section, values in data.items():
            if section not in _SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            if not isinstance(values, dict):
                raise ConfigError(f"[{section}] must be a table")
            for key in values:
                if key not in _SECTIONS[section]:
                    raise ConfigError(f"unknown key '{key}' in [{section}]")
            getattr(cfg, section).update(values)
        return cfg

    def override(self, section: str, **values) -> None:
        for key, value in values.items():
            if value is not None:
                getattr(self, section)[key] = value


def _rational(value, key: str) -> Fraction:
    if isinstance(value, float):
        raise ConfigError(f"'{key}' must be an exact rational such as \"3/4\", not a float")
    try:
        return rat(str(value) if not isinstance(value, int) else value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"'{key}': {exc}") from exc


def _real(value, key: str) -> float:
    try:
        if isinstance(value, str):
            return float(Fraction(value))
        return float(value)
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"'{key}' is not a number: {value!r}") from exc


def build_params(cfg: RunConfig) -> ParamSet:
    p = cfg.params
    for key in ("N", "alpha", "b"):
        if key not in p:
            raise ConfigError(f"missing [params] key '{key}'")
    try:
        lam = int(str(p.get("lambda", 1)).replace("+", ""))
        opt = {k: (None if p.get(k) is None else _rational(p[k], k)) for k in ("theta", "mu", "epsilon")}
        return ParamSet(
            N=int(p["N"]),
            alpha=_rational(p["alpha"], "alpha"),
            b=_rational(p["b"], "b"),
            s=_rational(p.get("s", 0), "s"),
            lambda_sign=lam,
            **opt,
        )
    except HypothesisError as exc:
        raise ConfigError(str(exc)) from exc
    except ValueError as exc:
        raise ConfigError(f"[params]: {exc}") from exc


def build_grid(cfg: RunConfig, dim_default: int = 1) -> sv.Grid:
    g = cfg.grid
    dim = int(g.get("dim", cfg.params.get("N", dim_default)))
    try:
        return sv.make_grid(dim, g.get("extent", 40.0), g.get("points", 256))
    except ValueError as exc:
        raise ConfigError(f"[grid]: {exc}") from exc


def build_spec(params: ParamSet) -> sv.PotentialSpec:
    return sv.PotentialSpec(float(params.b), float(params.alpha), params.lambda_sign)


def build_initial(cfg: RunConfig, grid: sv.Grid) -> sv.Field:
    ini = cfg.initial
    kind = str(ini.get("profile", "gaussian")).lower()
    try:
        if kind == "gaussian":
            amp = ini.get("amplitude", 1.0)
            amp = amp if amp == "unit-mass" else _real(amp, "amplitude")
            return sv.sample_initial(sv.Gaussian(_real(ini.get("width", 1.0), "width"), amp), grid)
        if kind == "ring":
            return sv.sample_initial(
                sv.Ring(_real(ini.get("radius", 2.0), "radius"), _real(ini.get("width", 0.5), "width"),
                        _real(ini.get("amplitude", 1.0), "amplitude")), grid)
        if kind in ("planewave", "plane-wave"):
            k = ini.get("k", 0.0)
            k = tuple(_real(v, "k") for v in k) if isinstance(k, list) else (_real(k, "k"),) * grid.dim
            return sv.sample_initial(sv.PlaneWave(k, _real(ini.get("amplitude", 1.0), "amplitude")), grid)
        if kind == "zero":
            return sv.Field(grid, 0 * sv.sample_initial(sv.Gaussian(1.0), grid).values)
    except ValueError as exc:
        raise ConfigError(f"[initial]: {exc}") from exc
    raise ConfigError(f"unknown initial profile '{kind}'")


# ---------------------------------------------------------------------------
# shared plumbing


@dataclass
class Context:
    config: RunConfig
    output: Optional[Path]
    fmt: Optional[str]
    seed: int


def _emit(ctx: Context, payload: dict, name: str) -> None:
    text = json.dumps(payload, indent=2)
    click.echo(text)
    if ctx.output is not None:
        ctx.output.mkdir(parents=True, exist_ok=True)
        (ctx.output / name).write_text(text + "\n")


def _param_options(func):
    options = [
        click.option("--n", "N", type=int, help="Dimension N."),
        click.option("--alpha", help="Power alpha as p/q."),
        click.option("--b", help="Weight exponent b as p/q."),
        click.option("--s", help="Regularity s as p/q."),
        click.option("--theta", help="Split exponent theta as p/q."),
        click.option("--mu", help="mu as p/q (three-dimensional global branch)."),
        click.option("--epsilon", help="Window shrink epsilon as p/q."),
        click.option("--lambda", "lam", type=click.Choice(["+1", "1", "-1"]), help="Sign of the nonlinearity."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _apply_params(ctx: Context, N, alpha, b, s, theta, mu, epsilon, lam) -> None:
    ctx.config.override("params", N=N, alpha=alpha, b=b, s=s, theta=theta, mu=mu, epsilon=epsilon, **{"lambda": lam})


def _grid_options(func):
    options = [
        click.option("--dim", type=int, help="Grid dimension (defaults to N)."),
        click.option("--extent", type=float, help="Box side length."),
        click.option("--points", type=int, help="Nodes per axis (power of two)."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="TOML run configuration.")
@click.option("--output", type=click.Path(file_okay=False), help="Directory for written artifacts.")
@click.option("--format", "out_format", type=click.Choice(["csv", "json", "bin"]), help="Simulation output format.")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=0, show_default=True,
              help="Seed for randomly drawn parameters.")
@click.pass_context
def main(click_ctx, config_path, output, out_format, seed):
    """Exponent verifier and pseudospectral solver for i u_t + Lap u + lam |x|^-b |u|^alpha u = 0.

    Settings come from command-line flags first, then the --config file
    (sections [params], [grid], [run], [output], [initial]), then defaults.
    """
    cfg = RunConfig.load(config_path)
    out_dir = output if output is not None else cfg.output.get("dir")
    click_ctx.obj = Context(cfg, Path(out_dir) if out_dir else None, out_format, seed)


# ---------------------------------------------------------------------------
# check-pair


@main.command("check-pair")
@click.option("--q", "q_text", required=True, help="Time exponent (p/q or inf).")
@click.option("--r", "r_text", required=True, help="Space exponent (p/q or inf).")
@click.option("--n", "N", type=int, required=True)
@click.option("--s", "s_text", default="0", show_default=True)
@click.option("--eps", "eps_text", default="1/1000", show_default=True)
@click.option("--dual", is_flag=True, help="Request the dual H^-s class.")
@click.pass_obj
def check_pair(ctx: Context, q_text, r_text, N, s_text, eps_text, dual):
    """Classify (q, r); exit 0 iff it is admissible in the requested class."""
    try:
        pair = Pair(rat(q_text), rat(r_text))
        s, eps = rat(s_text), rat(eps_text)
        verdict = classify_pair(pair, N, s, eps)
    except (ValueError, TypeError) as exc:
        click.echo(json.dumps({"error": str(exc)}), err=True)
        sys.exit(EXIT_USAGE)
    if s == 0:
        wanted = PairClass.l2()
        shift = Fraction(0)
    elif dual:
        wanted, shift = PairClass.hs_dual(s), s
    else:
        wanted, shift = PairClass.hs(s), -s
    window = range_window(wanted.kind, N, s, eps)
    payload = {
        "pair": [fmt(pair.q), fmt(pair.r)],
        "requested": str(wanted),
        "class": str(verdict),
        "scaling_lhs": fmt(2 * recip(pair.q)),
        "scaling_rhs": fmt(Fraction(N, 2) - N * recip(pair.r) + shift),
        "window": None if window is None else str(window),
        "window_check": bool(window is not None and window.contains(pair.r)),
    }
    _emit(ctx, payload, "check_pair.json")
    sys.exit(EXIT_OK if verdict == wanted else EXIT_FAIL)


# ---------------------------------------------------------------------------
# lemma


@main.command("lemma")
@click.argument("name", type=click.Choice(LEMMA_NAMES))
@_param_options
@click.option("--random", "draw", is_flag=True, help="Draw parameters inside the hypothesis region using --seed.")
@click.option("--lenient", is_flag=True, help="Record hypothesis violations as failed sign conditions instead of stopping.")
@click.pass_obj
def lemma(ctx: Context, name, N, alpha, b, s, theta, mu, epsilon, lam, draw, lenient):
    """Build and verify one lemma report; exit 0 iff every check passes."""
    _apply_params(ctx, N, alpha, b, s, theta, mu, epsilon, lam)
    try:
        if draw:
            lemma_id = lemma_by_name(name, build_params(ctx.config) if name in ("local-hs", "global-deriv") else None)
            params = sample_params(lemma_id, random.Random(ctx.seed))
        else:
            params = build_params(ctx.config)
            lemma_id = lemma_by_name(name, params)
        report = verify_lemma(lemma_id, params, strict=not lenient)
    except HypothesisError as exc:
        _emit(ctx, {"lemma": name, "error": str(exc)}, "lemma.json")
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_FAIL)
    _emit(ctx, report.to_dict(), "lemma.json")
    sys.exit(EXIT_OK if report.passed else EXIT_FAIL)


# ---------------------------------------------------------------------------
# simulate


@main.command("simulate")
@_param_options
@_grid_options
@click.option("--T", "T", help="Final time.")
@click.option("--dt", help="Time step.")
@click.option("--sample-every", type=int, help="Record diagnostics every this many steps.")
@click.option("--hs", "hs_list", multiple=True, help="Extra homogeneous H^s norms to trace (repeatable).")
@click.pass_obj
def simulate(ctx: Context, N, alpha, b, s, theta, mu, epsilon, lam, dim, extent, points, T, dt, sample_every, hs_list):
    """Run the split-step evolution. Exit 3 on suspected blow-up, 4 on NaN."""
    _apply_params(ctx, N, alpha, b, s, theta, mu, epsilon, lam)
    ctx.config.override("grid", dim=dim, extent=extent, points=points)
    ctx.config.override("run", T=T, dt=dt, sample_every=sample_every)
    params = build_params(ctx.config)
    grid = build_grid(ctx.config)
    spec = build_spec(params)
    u0 = build_initial(ctx.config, grid)
    run = ctx.config.run
    formats = _formats(ctx)
    hs = {text: _real(text, "hs") for text in (hs_list or ([fmt(params.s)] if params.s > 0 else []))}
    try:
        result = sv.evolve(
            u0,
            _real(run.get("T", 1.0), "T"),
            _real(run.get("dt", 1e-3), "dt"),
            spec,
            sample_every=int(run.get("sample_every", 10)),
            hs=hs,
            ceiling_factor=_real(run.get("amplitude_ceiling", sv.DEFAULT_CEILING_FACTOR), "amplitude_ceiling"),
            keep_snapshots="bin" in formats,
        )
    except sv.NaNEncountered as exc:
        click.echo(json.dumps({"status": "nan", "step": exc.step}), err=True)
        sys.exit(EXIT_NAN)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    diag = result.diagnostics
    summary = {
        "status": diag.status,
        "steps": diag.steps,
        "regularization": diag.regularization,
        "boundary_flag": diag.boundary_flag,
        "relative_mass_drift": diag.relative_mass_drift(),
        "energy_drift": diag.energy_drift(),
        "params": params.to_dict(),
        "seed": ctx.seed,
    }
    if "csv" in formats:
        if ctx.output is not None:
            ctx.output.mkdir(parents=True, exist_ok=True)
            (ctx.output / "diagnostics.csv").write_text(diag.to_csv())
        else:
            click.echo(diag.to_csv(), nl=False)
    if "json" in formats:
        summary["trace"] = dict(zip(diag.header(), map(list, zip(*diag.rows()))))
    if "bin" in formats:
        if ctx.output is None:
            raise ConfigError("binary output needs --output")
        ctx.output.mkdir(parents=True, exist_ok=True)
        sv.write_binary(ctx.output / "trajectory.bin", result.snapshots, {"params": params.to_dict()})
    if "json" in formats or ctx.output is not None:
        _emit(ctx, summary, "simulate.json")
    else:
        click.echo(json.dumps(summary), err=True)
    sys.exit(EXIT_BLOWUP if diag.status == "suspected blow-up" else EXIT_OK)


def _formats(ctx: Context) -> list[str]:
    if ctx.fmt:
        return [ctx.fmt]
    raw = ctx.config.output.get("formats", ["csv"])
    formats = [raw] if isinstance(raw, str) else list(raw)
    bad = [f for f in formats if f not in ("csv", "json", "bin")]
    if bad:
        raise ConfigError(f"unknown output formats {bad}")
    return formats


# ---------------------------------------------------------------------------
# scaling-test


def _s_value(text: str, s_c: Fraction) -> Fraction:
    """Parse an s entry: a rational, or 'sc' optionally followed by +p/q or -p/q."""
    text = text.replace(" ", "")
    if text.startswith("sc"):
        rest = text[2:].lstrip("+")
        return s_c + (rat(rest) if rest else 0)
    return rat(text)


@main.command("scaling-test")
@_param_options
@_grid_options
@click.option("--delta", "deltas", multiple=True, help="Dilation factors (repeatable; default 1/2 and 2).")
@click.option("--s-value", "s_values", multiple=True,
              help="Regularities: p/q or sc, sc+1/2, sc-1/2 (repeatable; default those three).")
@click.option("--refine", type=int, default=2, show_default=True, help="Grid refinement factor.")
@click.option("--tol", type=float, default=0.01, show_default=True)
@click.pass_obj
def scaling_test(ctx: Context, N, alpha, b, s, theta, mu, epsilon, lam, dim, extent, points, deltas, s_values, refine, tol):
    """Compare ||u_delta||_{H^s}/||u||_{H^s} with delta^(s - s_c); exit 0 iff all errors < tol."""
    _apply_params(ctx, N, alpha, b, s, theta, mu, epsilon, lam)
    ctx.config.override("grid", dim=dim, extent=extent, points=points)
    params = build_params(ctx.config)
    grid = build_grid(ctx.config).refined(refine)
    spec = build_spec(params)
    u0 = build_initial(ctx.config, grid)
    s_c = params.s_c
    try:
        s_list = [_s_value(t, s_c) for t in (s_values or ("sc-1/2", "sc", "sc+1/2"))]
        delta_list = [_real(d, "delta") for d in (deltas or ("1/2", "2"))]
        rows = sv.scaling_table(u0, spec, delta_list, [float(x) for x in s_list])
    except (ValueError, sv.SolverError) as exc:
        _emit(ctx, {"error": str(exc)}, "scaling_test.json")
        sys.exit(EXIT_FAIL)
    table = [
        {"delta": r.delta, "s": fmt(sx), "measured": r.measured, "predicted": r.predicted, "rel_error": r.rel_error}
        for r, sx in zip(rows, [sx for _ in delta_list for sx in s_list])
    ]
    ok = all(r.rel_error < tol for r in rows)
    _emit(ctx, {"s_c": fmt(s_c), "grid_points": list(grid.points), "tolerance": tol, "rows": table, "pass": ok},
          "scaling_test.json")
    sys.exit(EXIT_OK if ok else EXIT_FAIL)


# ---------------------------------------------------------------------------
# picard


@main.command("picard")
@_param_options
@_grid_options
@click.option("--n-iter", type=int, default=6, show_default=True)
@click.option("--n-time", type=int, default=64, show_default=True)
@click.option("--t-scale", type=float, default=1.0, show_default=True,
              help="Run at this multiple of the calibrated contraction time.")
@click.option("--T", "T_fixed", help="Skip calibration and iterate on [0, T].")
@click.pass_obj
def picard(ctx: Context, N, alpha, b, s, theta, mu, epsilon, lam, dim, extent, points, n_iter, n_time, t_scale, T_fixed):
    """Duhamel iteration; exit 0 iff the largest distance ratio stays below 1."""
    _apply_params(ctx, N, alpha, b, s, theta, mu, epsilon, lam)
    ctx.config.override("grid", dim=dim, extent=extent, points=points)
    params = build_params(ctx.config)
    grid = build_grid(ctx.config)
    spec = build_spec(params)
    u0 = build_initial(ctx.config, grid)
    payload: dict[str, Any] = {"params": params.to_dict(), "regularization": spec.describe(grid)}
    if T_fixed is not None or sv.l2_norm(u0) == 0:
        T = _real(T_fixed if T_fixed is not None else ctx.config.run.get("T", 1.0), "T")
        result = sv.picard_iterate(u0, t_scale * T, n_time, n_iter, spec)
    else:
        try:
            report = verify_lemma(lemma_by_name("local-l2"), params.with_(s=Fraction(0)))
        except HypothesisError as exc:
            _emit(ctx, {"error": f"contraction exponents unavailable: {exc}"}, "picard.json")
            sys.exit(EXIT_FAIL)
        t1, t2 = report.theta_exponents
        try:
            exhibit = sv.contraction_exhibit(u0, spec, t1, t2, n_time, n_iter, t_scale)
        except sv.SolverError as exc:
            _emit(ctx, {"error": str(exc)}, "picard.json")
            sys.exit(EXIT_FAIL)
        result = exhibit.scaled if exhibit.scaled is not None else exhibit.run
        payload["calibration"] = {
            "theta1": fmt(t1),
            "theta2": fmt(t2),
            "c": exhibit.c,
            "probe_T": exhibit.probe.T,
            "probe_max_ratio": exhibit.probe.max_ratio,
            "contraction_T": exhibit.bound.T,
            "a": exhibit.bound.a,
            "d_exponent": fmt(exhibit.bound.d_exponent),
            "t_scale": t_scale,
        }
    payload["run"] = result.to_dict()
    _emit(ctx, _finite_json(payload), "picard.json")
    sys.exit(EXIT_OK if result.max_ratio < 1 else EXIT_FAIL)


def _finite_json(obj):
    """JSON has no inf/nan; spell them as strings."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, dict):
        return {k: _finite_json(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite_json(v) for v in obj]
    return obj


if __name__ == "__main__":  # pragma: no cover
    main()
