"""Command-line entry point.

A run is described by a YAML (or JSON) mapping::

    command: figure            # spectrum | steady | g2tau | sweep | figure | compare
    figure: fig4c              # required for command=figure
    kappa_hz: 160000.0         # optional, annotation only
    params:                    # rates in units of kappa; every key optional
      g: 4.0
      omega: 8.4
      u0: 12.0
      delta_c: 0.0
      gamma: 0.046875
      eta: 0.1
      variant: STARK_ON_G1
      n_max: 7
    sweep:                     # command=sweep
      axis1: {name: delta_c, min: -24, max: 24, steps: 481}
      axis2: {name: u0, min: 0, max: 16, steps: 121}     # optional
      outputs: [g2_0, t_a, n_s, p3, splittings]         # optional
    g2tau: {tau_max: 10.0, n_points: 201}
    compare: {u0: [0.0, 4.0, 8.0, 12.0, 16.0]}
    spectrum: {n: [1, 2, 3]}

Exit codes: 0 success, 2 configuration error, 3 convergence or degeneracy
failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import datetime
import json
import logging
import math
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__, correlation, spectrum, steady, sweep
from .errors import (
    ConfigError,
    ConvergenceError,
    DegeneracyError,
    InvalidArgumentError,
    SweepError,
)
from .model import ModelParams, Variant, build_liouvillian

log = logging.getLogger("eitblockade")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

COMMANDS = ("spectrum", "steady", "g2tau", "sweep", "figure", "compare")
PARAM_KEYS = ("g", "omega", "u0", "delta_c", "gamma", "eta", "variant", "n_max")
TOP_KEYS = ("command", "figure", "kappa_hz", "params", "sweep", "g2tau", "compare", "spectrum")
OBS_COLUMNS = ("delta_c", "u0", "omega", "n_s", "t_a", "g2_0", "p1", "p2", "p3")
SPLIT_COLUMNS = ("delta_minus", "delta_zero", "delta_plus")


@dataclass(frozen=True)
class RunConfig:
    command: str
    params: ModelParams = field(default_factory=ModelParams)
    figure: str | None = None
    sweep: sweep.SweepSpec | None = None
    tau_max: float = correlation.DEFAULT_TAU_MAX
    n_points: int = correlation.DEFAULT_POINTS
    u0_values: tuple[float, ...] | None = None
    manifolds: tuple[int, ...] = (1,)
    kappa_hz: float | None = None


# ---------------------------------------------------------------- parsing


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads ``1e-3`` style floats (YAML 1.1 wants a dot)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)[eE][-+]?[0-9]+$"),
    list("-+0123456789."),
)


def _mapping(value, key):
    if not isinstance(value, dict):
        raise ConfigError(key, f"expected a mapping, got {type(value).__name__}")
    return value


def _check_keys(doc: dict, allowed, prefix: str):
    for k in doc:
        if k not in allowed:
            path = f"{prefix}.{k}" if prefix else str(k)
            raise ConfigError(path, f"unknown key (allowed: {', '.join(allowed)})")


def _number(value, key) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(key, f"must be finite, got {value!r}")
    return float(value)


def _integer(value, key) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    return value


def _parse_params(doc: dict) -> ModelParams:
    _check_keys(doc, PARAM_KEYS, "params")
    kw = {}
    for k, v in doc.items():
        key = f"params.{k}"
        if k == "variant":
            try:
                kw[k] = Variant.parse(v)
            except InvalidArgumentError as exc:
                raise ConfigError(key, str(exc)) from None
        elif k == "n_max":
            kw[k] = _integer(v, key)
            if kw[k] < 1:
                raise ConfigError(key, "must be >= 1")
        else:
            kw[k] = _number(v, key)
            if k in ("g", "omega", "gamma", "eta") and kw[k] < 0:
                raise ConfigError(key, f"rate must be >= 0, got {kw[k]!r}")
    return ModelParams(**kw)


def _parse_axis(doc, key) -> sweep.Axis:
    doc = _mapping(doc, key)
    _check_keys(doc, ("name", "min", "max", "steps"), key)
    for k in ("name", "min", "max", "steps"):
        if k not in doc:
            raise ConfigError(f"{key}.{k}", "missing required key")
    try:
        return sweep.Axis(
            name=doc["name"],
            min=_number(doc["min"], f"{key}.min"),
            max=_number(doc["max"], f"{key}.max"),
            steps=_integer(doc["steps"], f"{key}.steps"),
        )
    except InvalidArgumentError as exc:
        raise ConfigError(key, str(exc)) from None


def _parse_sweep(doc, params: ModelParams) -> sweep.SweepSpec:
    doc = _mapping(doc, "sweep")
    _check_keys(doc, ("axis1", "axis2", "outputs"), "sweep")
    if "axis1" not in doc:
        raise ConfigError("sweep.axis1", "missing required key")
    axis1 = _parse_axis(doc["axis1"], "sweep.axis1")
    axis2 = _parse_axis(doc["axis2"], "sweep.axis2") if doc.get("axis2") is not None else None
    outputs = doc.get("outputs", list(sweep.DEFAULT_OUTPUTS))
    if not isinstance(outputs, list) or not all(isinstance(o, str) for o in outputs):
        raise ConfigError("sweep.outputs", "expected a list of output names")
    try:
        return sweep.SweepSpec(params, axis1, axis2, tuple(outputs))
    except InvalidArgumentError as exc:
        raise ConfigError("sweep", str(exc)) from None


def config_from_dict(doc) -> RunConfig:
    doc = _mapping(doc, "")
    _check_keys(doc, TOP_KEYS, "")
    if "command" not in doc:
        raise ConfigError("command", "missing required key")
    command = doc["command"]
    if command not in COMMANDS:
        raise ConfigError("command", f"unknown command {command!r} (expected one of {COMMANDS})")
    params = _parse_params(_mapping(doc.get("params", {}), "params"))
    kw: dict = {"command": command, "params": params}

    if doc.get("kappa_hz") is not None:
        kw["kappa_hz"] = _number(doc["kappa_hz"], "kappa_hz")
        if kw["kappa_hz"] <= 0:
            raise ConfigError("kappa_hz", "must be > 0")
    if doc.get("figure") is not None:
        if doc["figure"] not in sweep.FIGURES:
            raise ConfigError("figure", f"unknown figure {doc['figure']!r}")
        kw["figure"] = doc["figure"]
    elif command == "figure":
        raise ConfigError("figure", "missing required key for command=figure")
    if doc.get("sweep") is not None:
        kw["sweep"] = _parse_sweep(doc["sweep"], params)
    elif command == "sweep":
        raise ConfigError("sweep", "missing required key for command=sweep")
    if doc.get("g2tau") is not None:
        sec = _mapping(doc["g2tau"], "g2tau")
        _check_keys(sec, ("tau_max", "n_points"), "g2tau")
        if "tau_max" in sec:
            kw["tau_max"] = _number(sec["tau_max"], "g2tau.tau_max")
            if kw["tau_max"] <= 0:
                raise ConfigError("g2tau.tau_max", "must be > 0")
        if "n_points" in sec:
            kw["n_points"] = _integer(sec["n_points"], "g2tau.n_points")
            if kw["n_points"] < 2:
                raise ConfigError("g2tau.n_points", "must be >= 2")
    if doc.get("compare") is not None:
        sec = _mapping(doc["compare"], "compare")
        _check_keys(sec, ("u0",), "compare")
        if "u0" in sec:
            vals = sec["u0"]
            if not isinstance(vals, list) or not vals:
                raise ConfigError("compare.u0", "expected a non-empty list")
            kw["u0_values"] = tuple(_number(v, f"compare.u0[{i}]") for i, v in enumerate(vals))
    if doc.get("spectrum") is not None:
        sec = _mapping(doc["spectrum"], "spectrum")
        _check_keys(sec, ("n",), "spectrum")
        if "n" in sec:
            vals = sec["n"]
            if not isinstance(vals, list) or not vals:
                raise ConfigError("spectrum.n", "expected a non-empty list")
            ns = tuple(_integer(v, f"spectrum.n[{i}]") for i, v in enumerate(vals))
            if min(ns) < 1:
                raise ConfigError("spectrum.n", "manifold indices must be >= 1")
            kw["manifolds"] = ns
    return RunConfig(**kw)


def parse_config(text: str) -> RunConfig:
    """Parse a YAML or JSON configuration document."""
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"malformed document: {exc}") from None
    if doc is None:
        raise ConfigError("command", "missing required key")
    return config_from_dict(doc)


def _axis_doc(ax: sweep.Axis) -> dict:
    return {"name": ax.name, "min": ax.min, "max": ax.max, "steps": ax.steps}


def config_to_dict(cfg: RunConfig) -> dict:
    """Configuration document that parses back to an identical RunConfig."""
    p = cfg.params
    doc: dict = {
        "command": cfg.command,
        "params": {
            "g": p.g,
            "omega": p.omega,
            "u0": p.u0,
            "delta_c": p.delta_c,
            "gamma": p.gamma,
            "eta": p.eta,
            "variant": p.variant.value,
            "n_max": p.n_max,
        },
        "g2tau": {"tau_max": cfg.tau_max, "n_points": cfg.n_points},
        "spectrum": {"n": list(cfg.manifolds)},
    }
    if cfg.figure is not None:
        doc["figure"] = cfg.figure
    if cfg.kappa_hz is not None:
        doc["kappa_hz"] = cfg.kappa_hz
    if cfg.sweep is not None:
        sec = {"axis1": _axis_doc(cfg.sweep.axis1), "outputs": list(cfg.sweep.outputs)}
        if cfg.sweep.axis2 is not None:
            sec["axis2"] = _axis_doc(cfg.sweep.axis2)
        doc["sweep"] = sec
    if cfg.u0_values is not None:
        doc["compare"] = {"u0": list(cfg.u0_values)}
    return doc


# ---------------------------------------------------------------- emitting


def fmt(x) -> str:
    """Round-trip exact scientific notation with 17 significant digits."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.16e}"


def write_csv(path: Path, header, rows) -> int:
    """Write rows of floats; returns the number of non-finite cells."""
    bad = 0
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
                cells.append(str(int(v)))
            else:
                bad += not math.isfinite(float(v))
                cells.append(fmt(v))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return bad


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


class Emitter:
    """Collects the CSV files of one run and writes the JSON sidecar."""

    def __init__(self, out_dir: Path, cfg: RunConfig, stem: str):
        self.out_dir = Path(out_dir)
        self.cfg = cfg
        self.stem = stem
        self.files: list[str] = []
        self.warnings: list[str] = []
        self.guard: dict = {}
        self.extra: dict = {}
        self.started = time.perf_counter()
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, header, rows) -> Path:
        path = self.out_dir / f"{name}.csv"
        bad = write_csv(path, header, rows)
        if bad:
            self.warnings.append(f"{path.name}: {bad} non-finite value(s) emitted verbatim")
        self.files.append(path.name)
        return path

    def sidecar(self) -> Path:
        doc = {
            "config": config_to_dict(self.cfg),
            "version": __version__,
            "files": self.files,
            "truncation_guard": self.guard,
            "warnings": self.warnings,
            "wall_time_s": time.perf_counter() - self.started,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        }
        if self.cfg.kappa_hz is not None:
            doc["units"] = {"rate_unit": "kappa", "kappa_hz": self.cfg.kappa_hz}
        doc.update(self.extra)
        path = self.out_dir / f"{self.stem}.json"
        path.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _obs_row(delta_c, u0, omega, obs: steady.SteadyObservables | None, columns):
    vals = {"delta_c": delta_c, "u0": u0, "omega": omega}
    vals.update(obs.as_dict() if obs is not None else {k: math.nan for k in steady.SteadyObservables.__annotations__})
    return [vals[c] for c in columns]


def sweep_columns(spec: sweep.SweepSpec) -> list[str]:
    cols = ["delta_c", "u0", "omega"] + [c for c in OBS_COLUMNS[3:] if c in spec.outputs]
    if "splittings" in spec.outputs:
        cols += list(SPLIT_COLUMNS)
    return cols


def emit_sweep(em: Emitter, name: str, result: sweep.SweepResult) -> None:
    cols = sweep_columns(result.spec)
    em.csv(name, cols, ([r.value(c) for c in cols] for r in result.rows))
    summary = result.guard_summary()
    em.guard[name] = summary
    if summary["flagged_rows"]:
        em.warnings.append(f"{name}: {len(summary['flagged_rows'])} row(s) flagged")


def emit_optimum_scan(em: Emitter, name: str, rows: list[sweep.OptimumScanRow]) -> None:
    em.csv(name, OBS_COLUMNS, ([r.value(c) for c in OBS_COLUMNS] for r in rows))
    guards = [r.report.guard for r in rows if r.report.guard is not None]
    em.guard[name] = {
        "rows": len(rows),
        "failed_rows": [i for i, r in enumerate(rows) if r.report.guard and not r.report.guard.ok],
        "max_rel_diff": {
            k: max(g.rel_diff[k] for g in guards) for k in ("n_s", "t_a", "g2_0")
        } if guards else {},
    }
    boundary = [i for i, r in enumerate(rows) if r.report.at_boundary]
    if boundary:
        em.warnings.append(f"{name}: optimum at window edge for rows {boundary}")


def emit_compare(em: Emitter, name: str, rows: list[sweep.CompareRow]) -> None:
    em.csv(name, ("u0", "g2_g1", "g2_g2", "ratio"), ([r.u0, r.g2_g1, r.g2_g2, r.ratio] for r in rows))
    failed = [i for i, r in enumerate(rows) if not r.guard_ok]
    em.guard[name] = {"rows": len(rows), "failed_rows": failed}


def emit_series(em: Emitter, name: str, series: correlation.CorrelationSeries) -> None:
    em.csv(name, ("tau", "g2"), zip(series.tau, series.g2))


def emit_spectrum(em: Emitter, name: str, params: ModelParams, manifolds) -> None:
    header = ("n", "u0", "omega", "delta_minus", "delta_zero", "delta_plus",
              "e_minus", "e_zero", "e_plus", "beta_plus", "beta_zero", "beta_minus")  # fmt: skip
    rows = []
    for n in manifolds:
        s = spectrum.dressed_splittings(n, params)
        b = spectrum.dark_state_amplitudes(n, params)
        rows.append([n, params.u0, params.omega, *s.as_tuple(), *s.eigenvalues,
                     b.beta_plus, b.beta_zero, b.beta_minus])  # fmt: skip
    em.csv(name, header, rows)


# ---------------------------------------------------------------- commands


def _guard_failed(em: Emitter) -> bool:
    for entry in em.guard.values():
        if entry.get("failed_rows") or entry.get("ok") is False:
            return True
    return False


def run(cfg: RunConfig, out_dir: Path, workers: int = 1) -> Emitter:
    cmd = cfg.command
    p = cfg.params
    stem = cfg.figure if cmd == "figure" else cmd
    em = Emitter(out_dir, cfg, stem)

    if cmd == "spectrum":
        emit_spectrum(em, "spectrum", p, cfg.manifolds)
    elif cmd == "steady":
        obs, report = steady.guarded_observables(p)
        em.csv("steady", OBS_COLUMNS, [_obs_row(p.delta_c, p.u0, p.omega, obs, OBS_COLUMNS)])
        em.guard["steady"] = report.as_dict()
    elif cmd == "g2tau":
        lv = build_liouvillian(p)
        rho = steady.steady_state(lv)
        series = correlation.g2_tau(lv, rho, p, tau_max=cfg.tau_max, n_points=cfg.n_points)
        _, report = steady.guarded_observables(p)
        emit_series(em, "g2tau", series)
        em.guard["g2tau"] = report.as_dict()
        if cfg.n_points >= 3:
            verdict = correlation.antibunching_check(series)
            em.extra["antibunching"] = {"antibunched": verdict.antibunched, "margin": verdict.margin}
    elif cmd == "sweep":
        emit_sweep(em, "sweep", sweep.run_sweep(cfg.sweep, workers=workers))
    elif cmd == "compare":
        u0s = cfg.u0_values if cfg.u0_values is not None else sweep.figure_preset("fig5b", p).u0_values
        g1 = p.replace(variant=Variant.STARK_ON_G1, omega=2.1 * p.g)
        g2 = p.replace(variant=Variant.STARK_ON_G2, omega=0.44 * p.g)
        emit_compare(em, "compare", sweep.compare_variants(u0s, g1, g2, workers=workers))
    elif cmd == "figure":
        job = sweep.figure_preset(cfg.figure, p)
        if job.kind == "sweep":
            for label, spec in job.sweeps:
                emit_sweep(em, label, sweep.run_sweep(spec, workers=workers))
        elif job.kind == "optimum_scan":
            emit_optimum_scan(em, job.name, sweep.optimum_scan(job.base, job.scan, workers=workers))
        else:
            g1, g2 = (
                p.replace(variant=Variant.STARK_ON_G1, omega=2.1 * p.g),
                p.replace(variant=Variant.STARK_ON_G2, omega=0.44 * p.g),
            )
            emit_compare(em, job.name, sweep.compare_variants(job.u0_values, g1, g2, workers=workers))
    return em


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="eitblockade",
        description="Photon blockade in a driven single-atom cavity-EIT system with a Stark shift.",
    )
    ap.add_argument("--config", type=Path, help="YAML/JSON run configuration")
    ap.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
    ap.add_argument("--threads", type=int, default=1, help="worker processes, 0 = all cores")
    ap.add_argument("--nmax", type=int, help="override the Fock cutoff n_max")
    ap.add_argument("--figure", choices=sweep.FIGURES, help="run a figure preset")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def load_config(args) -> RunConfig:
    if args.config is not None:
        cfg = parse_config(args.config.read_text(encoding="utf-8"))
    elif args.figure is not None:
        cfg = RunConfig(command="figure", figure=args.figure)
    else:
        raise ConfigError("--config", "either --config or --figure is required")
    if args.figure is not None:
        cfg = RunConfig(**{**cfg.__dict__, "command": "figure", "figure": args.figure})
    if args.nmax is not None:
        if args.nmax < 1:
            raise ConfigError("--nmax", "must be >= 1")
        params = cfg.params.replace(n_max=args.nmax)
        spec = cfg.sweep
        if spec is not None:
            spec = sweep.SweepSpec(params, spec.axis1, spec.axis2, spec.outputs)
        cfg = RunConfig(**{**cfg.__dict__, "params": params, "sweep": spec})
    if args.threads < 0:
        raise ConfigError("--threads", "must be >= 0")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        em = run(cfg, args.out, workers=args.threads)
        em.sidecar()
    except (ConfigError, InvalidArgumentError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, DegeneracyError, SweepError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for w in em.warnings:
        log.warning(w)
    if _guard_failed(em):
        print("truncation guard failed; see sidecar", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
