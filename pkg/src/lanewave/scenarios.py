"""Numerical experiments: the micro-macro Riemann problem, the two
overtaking manoeuvres and the 1D particle/continuum comparison, plus the
metrics that quantify agreement between particle and grid solutions."""
from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .core import ModelParams, primitive_to_conserved
from .fvm import Field1D, Field2D, Grid2D
from .micro import (
    Fleet,
    GhostRule,
    MicroParams,
    ftl1d_density,
    micro_step,
    per_vehicle_density,
)

ROAD_WIDTH = 0.012
QUADRANTS = ("NE", "NW", "SE", "SW")
SCENARIOS = ("micro-macro", "overtake-left", "overtake-right", "arz1d-vs-ftl1d", "custom")


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    params: ModelParams
    grid: Grid2D
    t_final: float
    snapshot_times: tuple = ()
    quadrants: dict = field(default_factory=dict)  # name -> (rho, u, v)
    bc_x: str = "outflow"
    target_density: float = 0.05  # per-car density of the particle placement
    lanes: int = 4
    micro_dt: float = 1e-3
    dx_car: float = 1 / 200
    dy_car: float = ROAD_WIDTH / 32
    cfl: float = 0.45

    def __post_init__(self):
        for key, (rho, u, _v) in self.quadrants.items():
            if key not in QUADRANTS:
                raise ValueError(f"unknown quadrant {key!r}")
            if not 0 <= rho <= self.params.rho_max:
                raise ValueError(f"quadrant {key} density out of range")
            if u < 0:
                raise ValueError(f"quadrant {key} has negative u")

    def replace(self, **kw) -> "ScenarioSpec":
        return dataclasses.replace(self, **kw)


def build_scenario(name: str) -> ScenarioSpec:
    """Preset experiments. The overtaking runs use a periodic road so that
    north/south mass changes come from lateral motion only."""
    params = ModelParams(u_ref=1.0, v_ref=0.009, gamma1=1.0, gamma2=1.0, rho_floor=1e-8, rho_max=1.0)
    grid = Grid2D(200, 32, -0.5, 0.5, 0.0, ROAD_WIDTH)
    if name == "micro-macro":
        q = {
            "NE": (0.05, 0.8, -0.001),
            "NW": (0.05, 0.05, -0.001),
            "SE": (0.05, 0.8, 0.001),
            "SW": (0.05, 0.05, 0.001),
        }
        return ScenarioSpec(name, params, grid, 0.1, (0.1,), q)
    if name == "overtake-left":
        q = {
            "NE": (0.05, 0.8, 0.0),
            "NW": (0.4, 0.8, 0.0),
            "SE": (0.4, 0.35, 0.0),
            "SW": (0.6, 0.65, 0.04),
        }
        return ScenarioSpec(name, params, grid, 1.5, (0.5, 1.0, 1.5), q, bc_x="periodic")
    if name == "overtake-right":
        q = {
            "NE": (0.9, 0.1, 0.0),
            "NW": (0.7, 0.7, 0.0),
            "SE": (0.05, 1.0, 0.0),
            "SW": (0.05, 1.0, 0.0),
        }
        return ScenarioSpec(name, params, grid, 1.5, (0.5, 1.0, 1.5), q, bc_x="periodic")
    if name == "arz1d-vs-ftl1d":
        q = {"NE": (0.05, 0.8, 0.0), "SE": (0.05, 0.8, 0.0), "NW": (0.05, 0.05, 0.0), "SW": (0.05, 0.05, 0.0)}
        grid1 = Grid2D(400, 1, -0.5, 0.5, 0.0, ROAD_WIDTH)
        return ScenarioSpec(name, params, grid1, 0.1, (0.1,), q, lanes=1, dx_car=1 / 2000, micro_dt=2.5e-4)
    if name == "custom":
        q = {k: (0.05, 0.5, 0.0) for k in QUADRANTS}
        return ScenarioSpec(name, params, grid, 0.1, (0.1,), q)
    raise ValueError(f"unknown scenario {name!r}")


def _quadrant_arrays(spec: ScenarioSpec, X, Y):
    ymid = 0.5 * (spec.grid.ay + spec.grid.by)
    east = X >= 0
    north = Y >= ymid
    out = []
    for c in range(3):
        val = np.empty(np.broadcast(X, Y).shape)
        for key in QUADRANTS:
            mask = (east == (key[1] == "E")) & (north == (key[0] == "N"))
            val[mask] = spec.quadrants[key][c]
        out.append(val)
    return out


def initial_field(spec: ScenarioSpec) -> Field2D:
    g = spec.grid
    X, Y = np.meshgrid(g.xc, g.yc, indexing="ij")
    rho, u, v = _quadrant_arrays(spec, X, Y)
    q = np.stack(primitive_to_conserved((rho, u, v), spec.params))
    return Field2D(g, q, bc_x=spec.bc_x)


def initial_field_1d(spec: ScenarioSpec) -> Field1D:
    g = spec.grid
    xc = g.xc
    rho = np.where(xc >= 0, spec.quadrants["SE"][0], spec.quadrants["SW"][0])
    u = np.where(xc >= 0, spec.quadrants["SE"][1], spec.quadrants["SW"][1])
    rho_w = rho * (u + spec.params.p1(rho))
    return Field1D(g.nx, g.ax, g.bx, np.stack([rho, rho_w]), bc_x=spec.bc_x)


def lane_centres(spec: ScenarioSpec) -> np.ndarray:
    g = spec.grid
    w = (g.by - g.ay) / spec.lanes
    return g.ay + (np.arange(spec.lanes) + 0.5) * w


def place_fleet_four_lanes(spec: ScenarioSpec) -> Fleet:
    """Staggered four-lane placement with per-car density ``target_density``.

    Lanes 1 and 3 start at the left end of the road; lanes 2 and 4 start a
    distance ``d`` further on, where ``d`` makes the density of a lane-1 car
    towards its lane-2 partner equal the target. Every lane is then filled
    with spacing ``2 d``. A ghost leader mirrors the front car of lane 3.
    """
    if spec.lanes != 4:
        raise ValueError("the staggered placement needs exactly four lanes")
    g = spec.grid
    yl = lane_centres(spec)
    dX, dY = spec.dx_car, spec.dy_car
    d = dX * dY / (spec.target_density * abs(yl[1] - yl[0]))
    starts = (g.ax, g.ax + d, g.ax, g.ax + d)
    # lanes 1-2 lie in the southern half, lanes 3-4 in the northern half
    halves = ("S", "S", "N", "N")
    ids, lanes, xs, ys, us, vs = [], [], [], [], [], []
    k = 0
    for lane in range(4):
        x = starts[lane]
        while x < g.bx:
            ids.append(k)
            lanes.append(lane + 1)
            xs.append(x)
            ys.append(yl[lane])
            _rho, u, v = spec.quadrants[halves[lane] + ("W" if x <= 0 else "E")]
            us.append(u)
            vs.append(v)
            k += 1
            x = x + 2 * d
    return Fleet(ids, lanes, xs, ys, us, vs, dX, dY, road_width=g.by - g.ay, ghost=GhostRule(3, 2 * d))


def place_fleet_1d(spec: ScenarioSpec) -> Fleet:
    """Equally spaced cars reproducing the initial 1D density."""
    g = spec.grid
    rho0 = spec.quadrants["SW"][0]
    gap = spec.dx_car / rho0
    xs = np.arange(g.ax, g.bx + gap, gap)
    us = np.where(xs < 0, spec.quadrants["SW"][1], spec.quadrants["SE"][1])
    n = len(xs)
    return Fleet(np.arange(n), np.ones(n), xs, np.zeros(n), us, np.zeros(n), spec.dx_car, spec.dy_car)


def bilinear(field: Field2D, comp: np.ndarray, x, y):
    """Interpolate a cell-centred array at points; constant beyond the
    outermost centres."""
    g = field.grid
    fx = np.clip((np.asarray(x) - g.ax) / g.dx - 0.5, 0.0, g.nx - 1)
    fy = np.clip((np.asarray(y) - g.ay) / g.dy - 0.5, 0.0, g.ny - 1)
    i0 = np.minimum(np.floor(fx).astype(int), max(g.nx - 2, 0))
    j0 = np.minimum(np.floor(fy).astype(int), max(g.ny - 2, 0))
    i1 = np.minimum(i0 + 1, g.nx - 1)
    j1 = np.minimum(j0 + 1, g.ny - 1)
    tx = fx - i0
    ty = fy - j0
    return (
        comp[i0, j0] * (1 - tx) * (1 - ty)
        + comp[i1, j0] * tx * (1 - ty)
        + comp[i0, j1] * (1 - tx) * ty
        + comp[i1, j1] * tx * ty
    )


def relative_l1(a, ref) -> float:
    a, ref = np.asarray(a, float), np.asarray(ref, float)
    den = np.sum(np.abs(ref))
    return float(np.sum(np.abs(a - ref)) / den) if den > 0 else float(np.sum(np.abs(a - ref)))


def relative_linf(a, ref) -> float:
    a, ref = np.asarray(a, float), np.asarray(ref, float)
    den = np.max(np.abs(ref)) if ref.size else 0.0
    return float(np.max(np.abs(a - ref)) / den) if den > 0 else float(np.max(np.abs(a - ref), initial=0.0))


@dataclass
class ComparisonReport:
    l1_density: float
    linf_density: float
    l1_flux_x: float
    l1_flux_y: float
    n_compared: int
    n_excluded: int
    events: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        ev = d.pop("events")
        meta = d.pop("metadata")
        d.update({f"events.{k}": v for k, v in ev.items()})
        d.update(meta)
        return d


def compare_micro_macro(fleet: Fleet, fld: Field2D, params: ModelParams) -> ComparisonReport:
    """Particle densities and fluxes against the grid solution at the cars."""
    g = fld.grid
    rho_i = per_vehicle_density(fleet)
    inside = (fleet.x >= g.ax) & (fleet.x <= g.bx) & (fleet.y >= g.ay) & (fleet.y <= g.by)
    ok = inside & np.isfinite(rho_i)
    rho, u, v = fld.primitive(params)
    x, y = fleet.x[ok], fleet.y[ok]
    R = bilinear(fld, rho, x, y)
    RU = bilinear(fld, rho * u, x, y)
    RV = bilinear(fld, rho * v, x, y)
    r = rho_i[ok]
    return ComparisonReport(
        l1_density=relative_l1(r, R),
        linf_density=relative_linf(r, R),
        l1_flux_x=relative_l1(r * fleet.u[ok], RU),
        l1_flux_y=relative_l1(r * fleet.v[ok], RV),
        n_compared=int(np.count_nonzero(ok)),
        n_excluded=int(np.count_nonzero(~ok)),
        events={**fld.events.as_dict(), **{f"micro_{k}": v for k, v in fleet.events.as_dict().items()}},
        metadata={"t_macro": fld.t, "t_micro": fleet.t},
    )


def compare_1d(fleet: Fleet, fld: Field1D) -> float:
    """Relative L1 gap between car densities and the interpolated grid density.

    Each car's density describes the stretch up to its leader, so it is
    compared with the grid value at the midpoint of that stretch.
    """
    rho_car = ftl1d_density(fleet)
    mid = 0.5 * (fleet.x[:-1] + fleet.x[1:])
    ok = (mid >= fld.ax) & (mid <= fld.bx)
    grid_rho = np.interp(mid[ok], fld.xc, fld.q[0])
    return relative_l1(rho_car[ok], grid_rho)


# -- trajectory comparison ---------------------------------------------------

TRAJ_COLUMNS = ("t", "id", "x", "y", "u", "v")


def read_trajectories(path) -> dict:
    """Reference trajectory file -> ``{id: array of rows (t, x, y, u, v)}``."""
    out: dict[int, list] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRAJ_COLUMNS:
            raise ValueError(f"expected header {','.join(TRAJ_COLUMNS)}")
        for row in reader:
            if not row:
                continue
            t, vid, x, y, u, v = row
            out.setdefault(int(vid), []).append((float(t), float(x), float(y), float(u), float(v)))
    return {k: np.array(sorted(rows)) for k, rows in out.items()}


def write_trajectories(path, series) -> None:
    """``series`` is a list of ``(t, Fleet)``; rows sorted by (t, id)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJ_COLUMNS)
        for t, fl in series:
            for k in np.argsort(fl.id):
                w.writerow([repr(float(t)), int(fl.id[k])] + [repr(float(a[k])) for a in (fl.x, fl.y, fl.u, fl.v)])


def compare_trajectories(simulated, reference: dict) -> dict:
    """Per-car 2-norm position error over time.

    ``simulated`` is a list of ``(t, Fleet)``; ``reference`` maps ids to
    rows ``(t, x, y, ...)``. Returns ``{id: array of (t, error)}`` evaluated
    at the simulated times, interpolating the reference linearly in time.
    """
    sim_ids = set(int(i) for i in simulated[0][1].id)
    ref_ids = set(reference)
    if sim_ids != ref_ids:
        bad = sorted(sim_ids ^ ref_ids)
        raise ValueError(f"id mismatch between simulation and reference: {bad}")
    out = {}
    for vid in sorted(sim_ids):
        rows = reference[vid]
        errs = []
        for t, fl in simulated:
            if not rows[0, 0] - 1e-12 <= t <= rows[-1, 0] + 1e-12:
                continue
            k = int(np.flatnonzero(fl.id == vid)[0])
            rx = np.interp(t, rows[:, 0], rows[:, 1])
            ry = np.interp(t, rows[:, 0], rows[:, 2])
            errs.append((t, float(np.hypot(fl.x[k] - rx, fl.y[k] - ry))))
        out[vid] = np.array(errs)
    return out


def replay_against_reference(reference: dict, params: ModelParams, dx_car: float, dy_car: float,
                             dt: float, road_width: float = ROAD_WIDTH):
    """Simulate from the reference's first frame, forcing the right-most car
    along its recorded trajectory. Returns a list of ``(t, Fleet)``."""
    ids = sorted(reference)
    t0 = max(reference[i][0, 0] for i in ids)
    t1 = min(reference[i][-1, 0] for i in ids)

    def frame(t):
        return np.array([[np.interp(t, reference[i][:, 0], reference[i][:, c]) for c in range(1, 5)] for i in ids])

    f0 = frame(t0)
    fleet = Fleet(ids, np.zeros(len(ids)), f0[:, 0], f0[:, 1], f0[:, 2], f0[:, 3], dx_car, dy_car,
                  road_width=road_width, t=t0)
    lead = int(np.argmax(f0[:, 0]))
    mp = MicroParams(params, dx_car, dy_car)
    series = [(t0, fleet)]
    n = int(np.ceil((t1 - t0) / dt - 1e-9))
    for _ in range(n):
        h = min(dt, t1 - fleet.t)
        fleet = micro_step(fleet, h, mp)
        fr = frame(fleet.t)
        fleet.x[lead], fleet.y[lead], fleet.u[lead], fleet.v[lead] = fr[lead]
        series.append((fleet.t, fleet))
    return series
