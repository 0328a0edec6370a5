"""Command line front end.

Usage::

    lanewave <command> --config <path> [--out <dir>] [--set key=value ...]

The config file holds one ``key = value`` per line; ``#`` starts a comment.
Exit codes: 0 success, 2 configuration error, 3 numerical or I/O failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import riemann
from .core import (
    Direction,
    InvalidState,
    ModelParams,
    NoPreimage,
    eigenvalues,
    eigenvectors_numeric,
    riemann_invariants,
)
from .fvm import Field1D, Field2D, Grid2D, NumericalFailure, run
from .micro import Fleet, MicroParams, ftl1d_density, per_vehicle_density, run_micro
from .scenarios import (
    QUADRANTS,
    SCENARIOS,
    ScenarioSpec,
    build_scenario,
    compare_1d,
    compare_micro_macro,
    compare_trajectories,
    initial_field,
    initial_field_1d,
    place_fleet_1d,
    place_fleet_four_lanes,
    read_trajectories,
    replay_against_reference,
)

COMMANDS = ("run-macro-2d", "run-macro-1d", "run-micro", "compare", "riemann", "eigen")
FORMATS = ("csv", "pgm")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAILURE = 3


class ConfigError(ValueError):
    pass


MODEL_KEYS = tuple(f.name for f in dataclasses.fields(ModelParams))
GRID_KEYS = tuple(f.name for f in dataclasses.fields(Grid2D))
SPEC_KEYS = ("t_final", "target_density", "lanes", "micro_dt", "dx_car", "dy_car", "cfl")
QUADRANT_KEYS = tuple(f"{q.lower()}_{c}" for q in QUADRANTS for c in ("rho", "u", "v"))
STATE_KEYS = ("rho_l", "u_l", "v_l", "rho_r", "u_r", "v_r", "rho", "u", "v", "xi1", "xi2")
STRING_KEYS = ("scenario", "formats", "bc_x", "reference", "snapshot_times")
INT_KEYS = ("nx", "ny", "lanes")

SCHEMA = MODEL_KEYS + GRID_KEYS + SPEC_KEYS + QUADRANT_KEYS + STATE_KEYS + STRING_KEYS

DEFAULTS = {"scenario": "micro-macro", "formats": ("csv",), "cfl": 0.45, "rho_floor": 1e-8}


@dataclass
class RunConfig:
    scenario: str = "micro-macro"
    formats: tuple = ("csv",)
    overrides: dict = field(default_factory=dict)
    output_dir: str = "."

    @property
    def cfl(self) -> float:
        return self.overrides.get("cfl", DEFAULTS["cfl"])

    @property
    def rho_floor(self) -> float:
        return self.overrides.get("rho_floor", DEFAULTS["rho_floor"])

    def get(self, key, default=None):
        return self.overrides.get(key, default)


def _convert(key: str, raw: str, where: str):
    raw = raw.strip()
    if key == "scenario":
        if raw not in SCENARIOS:
            raise ConfigError(f"{where}: key 'scenario': unknown scenario {raw!r}")
        return raw
    if key == "formats":
        vals = tuple(s.strip() for s in raw.split(",") if s.strip())
        bad = [f for f in vals if f not in FORMATS]
        if bad or not vals:
            raise ConfigError(f"{where}: key 'formats': expected a subset of {', '.join(FORMATS)}")
        return vals
    if key == "bc_x":
        if raw not in ("outflow", "periodic"):
            raise ConfigError(f"{where}: key 'bc_x': expected outflow or periodic")
        return raw
    if key == "reference":
        return raw
    if key == "snapshot_times":
        try:
            vals = tuple(float(s) for s in raw.split(",") if s.strip())
        except ValueError:
            raise ConfigError(f"{where}: key 'snapshot_times': non-numeric value {raw!r}") from None
        if any(not math.isfinite(t) or t <= 0 for t in vals):
            raise ConfigError(f"{where}: key 'snapshot_times': times must be positive")
        return vals
    try:
        val = float(raw)
    except ValueError:
        raise ConfigError(f"{where}: key {key!r}: non-numeric value {raw!r}") from None
    if not math.isfinite(val):
        raise ConfigError(f"{where}: key {key!r}: value must be finite")
    if key in INT_KEYS:
        if val != int(val) or val < 1:
            raise ConfigError(f"{where}: key {key!r}: expected a positive integer")
        return int(val)
    return val


def _validate(key: str, val, where: str):
    if key == "cfl" and not 0 < val < 1:
        raise ConfigError(f"{where}: key 'cfl': cfl out of (0,1)")
    if key in ("rho_floor", "u_ref", "micro_dt", "dx_car", "dy_car", "t_final", "rho_max") and not val > 0:
        raise ConfigError(f"{where}: key {key!r}: must be positive")
    if key in ("gamma1", "gamma2", "v_ref") and val < 0:
        raise ConfigError(f"{where}: key {key!r}: must be non-negative")


def _assign(cfg: RunConfig, key: str, raw: str, where: str):
    if key not in SCHEMA:
        raise ConfigError(f"{where}: unknown key {key!r}")
    val = _convert(key, raw, where)
    _validate(key, val, where)
    if key == "scenario":
        cfg.scenario = val
    elif key == "formats":
        cfg.formats = val
    else:
        cfg.overrides[key] = val


def parse_config(text: str, overrides=()) -> RunConfig:
    """Parse ``key = value`` lines, then apply ``--set`` style overrides."""
    cfg = RunConfig()
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        _assign(cfg, key, raw, f"line {n}")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        key, raw = (s.strip() for s in item.split("=", 1))
        _assign(cfg, key, raw, f"--set {key}")
    _check_cross(cfg)
    return cfg


def _check_cross(cfg: RunConfig):
    o = cfg.overrides
    floor = o.get("rho_floor", DEFAULTS["rho_floor"])
    if floor >= o.get("rho_max", 1.0):
        raise ConfigError("key 'rho_floor': must be below rho_max")
    for lo, hi in (("ax", "bx"), ("ay", "by")):
        if lo in o and hi in o and not o[hi] > o[lo]:
            raise ConfigError(f"key {hi!r}: must exceed {lo}")


def build_spec(cfg: RunConfig) -> ScenarioSpec:
    """Scenario defaults with every configured override applied."""
    spec = build_scenario(cfg.scenario)
    o = cfg.overrides
    model = {k: o[k] for k in MODEL_KEYS if k in o}
    model.setdefault("rho_floor", cfg.rho_floor)
    grid = {k: o[k] for k in GRID_KEYS if k in o}
    quads = dict(spec.quadrants)
    for key in QUADRANT_KEYS:
        if key in o:
            name, comp = key.split("_")
            vals = list(quads[name.upper()])
            vals[("rho", "u", "v").index(comp)] = o[key]
            quads[name.upper()] = tuple(vals)
    rest = {k: o[k] for k in SPEC_KEYS if k in o}
    rest.setdefault("cfl", cfg.cfl)
    if "bc_x" in o:
        rest["bc_x"] = o["bc_x"]
    if "snapshot_times" in o:
        rest["snapshot_times"] = o["snapshot_times"]
    try:
        return spec.replace(
            params=dataclasses.replace(spec.params, **model),
            grid=dataclasses.replace(spec.grid, **grid),
            quadrants=quads,
            **rest,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# -- writers ------------------------------------------------------------------

def _fmt(x) -> str:
    return "%.17g" % x


def write_field_csv(fld: Field2D, path, params: ModelParams):
    """One row per cell, j outer and i inner."""
    g = fld.grid
    rho, u, v = fld.primitive(params)
    safe = np.where(rho > 0, rho, 1.0)
    w = np.where(rho > 0, fld.q[1] / safe, 0.0)
    sigma = np.where(rho > 0, fld.q[2] / safe, 0.0)
    xc, yc = g.xc, g.yc
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("x,y,rho,rho_u,rho_v,u,v,w,sigma\n")
        for j in range(g.ny):
            for i in range(g.nx):
                row = (xc[i], yc[j], rho[i, j], rho[i, j] * u[i, j], rho[i, j] * v[i, j],
                       u[i, j], v[i, j], w[i, j], sigma[i, j])
                fh.write(",".join(_fmt(a) for a in row) + "\n")


def write_field1d_csv(fld: Field1D, path, params: ModelParams):
    rho, u = fld.primitive(params)
    safe = np.where(rho > 0, rho, 1.0)
    w = np.where(rho > 0, fld.q[1] / safe, 0.0)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("x,rho,rho_u,u,w\n")
        for i in range(fld.nx):
            fh.write(",".join(_fmt(a) for a in (fld.xc[i], rho[i], rho[i] * u[i], u[i], w[i])) + "\n")


def write_fleet_csv(fleet: Fleet, path, one_d: bool = False):
    if one_d:
        rho = np.append(ftl1d_density(fleet), np.nan) if len(fleet) else np.zeros(0)
    else:
        rho = per_vehicle_density(fleet)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("t,id,lane,x,y,u,v,rho_local\n")
        for k in np.argsort(fleet.id, kind="stable"):
            row = [_fmt(fleet.t), str(int(fleet.id[k])), str(int(fleet.lane[k]))]
            row += [_fmt(a[k]) for a in (fleet.x, fleet.y, fleet.u, fleet.v, rho)]
            fh.write(",".join(row) + "\n")


def write_pgm(fld: Field2D, path, rho_max: float):
    """8-bit binary greyscale map of the density, row 0 at the top (max y)."""
    g = fld.grid
    img = np.clip(np.rint(fld.q[0] / rho_max * 255.0), 0, 255).astype(np.uint8)
    img = img.T[::-1]
    with open(path, "wb") as fh:
        fh.write(f"P5\n{g.nx} {g.ny}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def _report_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    if isinstance(v, (tuple, list, np.ndarray)):
        return ",".join(_report_value(a) for a in v)
    return str(v)


def write_report(report: dict, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for k, v in report.items():
            fh.write(f"{k}={_report_value(v)}\n")


def _tag(t: float) -> str:
    return f"t{t:.6f}"


# -- commands -----------------------------------------------------------------

def _cmd_macro_2d(cfg: RunConfig, spec: ScenarioSpec, out: str) -> dict:
    f0 = initial_field(spec)
    m0 = f0.totals()
    snaps = run(f0, spec.t_final, spec.cfl, spec.params, spec.snapshot_times)
    for t, fld in snaps:
        if "csv" in cfg.formats:
            write_field_csv(fld, os.path.join(out, f"field_{_tag(t)}.csv"), spec.params)
        if "pgm" in cfg.formats:
            write_pgm(fld, os.path.join(out, f"rho_{_tag(t)}.pgm"), spec.params.rho_max)
    last = snaps[-1][1]
    rep = {"command": "run-macro-2d", "scenario": spec.name, "t_final": last.t, "steps": last.steps,
           "mass_initial": m0, "mass_final": last.totals()}
    rep.update({f"events.{k}": v for k, v in last.events.as_dict().items()})
    return rep


def _cmd_macro_1d(cfg: RunConfig, spec: ScenarioSpec, out: str) -> dict:
    f0 = initial_field_1d(spec)
    snaps = run(f0, spec.t_final, spec.cfl, spec.params, spec.snapshot_times)
    for t, fld in snaps:
        write_field1d_csv(fld, os.path.join(out, f"field1d_{_tag(t)}.csv"), spec.params)
    last = snaps[-1][1]
    rep = {"command": "run-macro-1d", "scenario": spec.name, "t_final": last.t, "steps": last.steps,
           "mass_initial": f0.totals(), "mass_final": last.totals()}
    rep.update({f"events.{k}": v for k, v in last.events.as_dict().items()})
    return rep


def _micro_setup(spec: ScenarioSpec):
    if spec.lanes == 1:
        return place_fleet_1d(spec), spec.params, True
    fleet = place_fleet_four_lanes(spec)
    return fleet, MicroParams.for_fleet(fleet, spec.params), False


def _cmd_micro(cfg: RunConfig, spec: ScenarioSpec, out: str) -> dict:
    fleet, mp, one_d = _micro_setup(spec)
    write_fleet_csv(fleet, os.path.join(out, f"fleet_{_tag(0.0)}.csv"), one_d)
    snaps = run_micro(fleet, spec.t_final, spec.micro_dt, mp, spec.snapshot_times, one_d=one_d)
    for t, fl in snaps:
        write_fleet_csv(fl, os.path.join(out, f"fleet_{_tag(t)}.csv"), one_d)
    last = snaps[-1][1]
    rep = {"command": "run-micro", "scenario": spec.name, "t_final": last.t, "vehicles": len(last),
           "dt": spec.micro_dt}
    rep.update({f"events.{k}": v for k, v in last.events.as_dict().items()})
    return rep


def _cmd_compare(cfg: RunConfig, spec: ScenarioSpec, out: str) -> dict:
    ref_path = cfg.get("reference")
    if ref_path:
        reference = read_trajectories(ref_path)
        series = replay_against_reference(reference, spec.params, spec.dx_car, spec.dy_car, spec.micro_dt,
                                          spec.grid.by - spec.grid.ay)
        errs = compare_trajectories(series, reference)
        with open(os.path.join(out, "trajectory_errors.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write("id,t,error\n")
            for vid, rows in errs.items():
                for t, e in rows:
                    fh.write(f"{vid},{_fmt(t)},{_fmt(e)}\n")
        worst = max((float(r[:, 1].max()) for r in errs.values() if len(r)), default=0.0)
        return {"command": "compare", "mode": "trajectories", "vehicles": len(errs), "max_error": worst}
    fleet, mp, one_d = _micro_setup(spec)
    flT = run_micro(fleet, spec.t_final, spec.micro_dt, mp, one_d=one_d)[-1][1]
    if one_d:
        fT = run(initial_field_1d(spec), spec.t_final, spec.cfl, spec.params)[-1][1]
        return {"command": "compare", "mode": "1d", "scenario": spec.name, "vehicles": len(flT),
                "cells": fT.nx, "l1_density": compare_1d(flT, fT)}
    fT = run(initial_field(spec), spec.t_final, spec.cfl, spec.params)[-1][1]
    rep = {"command": "compare", "mode": "micro-macro", "scenario": spec.name}
    rep.update(compare_micro_macro(flT, fT, spec.params).as_dict())
    return rep


def _state(cfg: RunConfig, suffix: str):
    keys = [f"{c}{suffix}" for c in ("rho", "u", "v")]
    missing = [k for k in keys if k not in cfg.overrides]
    if missing:
        raise ConfigError(f"missing state keys: {', '.join(missing)}")
    return tuple(cfg.overrides[k] for k in keys)


def _cmd_riemann(cfg: RunConfig, spec: ScenarioSpec, out: str) -> dict:
    Wl, Wr = _state(cfg, "_l"), _state(cfg, "_r")
    res = riemann.solve(Wl, Wr, spec.params)
    rep = {"command": "riemann", "left": Wl, "right": Wr, "classification": res["classification"],
           "speeds": res["speeds"]}
    if "case" in res:
        rep["case"] = res["case"]
    for n, st in enumerate(res["intermediates"]):
        rep[f"intermediate{n + 1}"] = tuple(st)
    for k, v in res.get("residuals", {}).items():
        rep[f"residual.{k}"] = v
    for k, v in rep.items():
        print(f"{k}: {_report_value(v)}")
    return rep


def _cmd_eigen(cfg: RunConfig, spec: ScenarioSpec, out: str) -> dict:
    W = _state(cfg, "")
    xi = Direction(cfg.get("xi1", 1.0), cfg.get("xi2", 0.0))
    norm = math.hypot(*xi)
    if norm == 0:
        raise ConfigError("key 'xi1': direction must be non-zero")
    xi = Direction(xi[0] / norm, xi[1] / norm)
    lams = tuple(float(x) for x in eigenvalues(W, xi, spec.params))
    z = tuple(float(x) for x in riemann_invariants(W, spec.params))
    eig = eigenvectors_numeric(W, xi, spec.params)
    rep = {"command": "eigen", "state": W, "direction": tuple(xi), "eigenvalues": lams,
           "riemann_invariants": z, "degenerate": eig.degenerate}
    if eig.vectors is not None:
        for k in range(3):
            rep[f"r{k + 1}"] = tuple(eig.vectors[:, k])
    for k, v in rep.items():
        print(f"{k}: {_report_value(v)}")
    return rep


HANDLERS = {
    "run-macro-2d": _cmd_macro_2d,
    "run-macro-1d": _cmd_macro_1d,
    "run-micro": _cmd_micro,
    "compare": _cmd_compare,
    "riemann": _cmd_riemann,
    "eigen": _cmd_eigen,
}


def dispatch(cfg: RunConfig, command: str) -> int:
    if command not in HANDLERS:
        print(f"error: unknown command {command!r}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        spec = build_spec(cfg)
        out = cfg.output_dir
        try:
            os.makedirs(out, exist_ok=True)
        except OSError as exc:
            print(f"error: cannot create output directory {out}: {exc}", file=sys.stderr)
            return EXIT_FAILURE
        rep = HANDLERS[command](cfg, spec, out)
        write_report(rep, os.path.join(out, f"report_{command}.txt"))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, InvalidState, NoPreimage, riemann.NoAdmissibleState, riemann.DegenerateField) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except ValueError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def main(argv=None) -> int:
    ap = _Parser(prog="lanewave", description="Two-dimensional traffic model runs.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="key = value configuration file")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    args = ap.parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"config error: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text, args.set)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg.output_dir = args.out
    return dispatch(cfg, args.command)


if __name__ == "__main__":
    sys.exit(main())
