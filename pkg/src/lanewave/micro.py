"""Follow-the-leader particle models in one and two space dimensions.

A :class:`Fleet` stores vehicle states as parallel numpy arrays. In 2D each
vehicle interacts with the nearest vehicle ahead of it on the side it is
steering towards; the interaction defines a local density and, through the
constancy of the desired speeds ``w = u + P1`` and ``sigma = v + P2``, the
accelerations.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .core import Events, ModelParams
from .fvm import Grid2D, NumericalFailure

LATERAL_GAP_MIN = 1e-3
AHEAD_MIN = 1.0  # in vehicle lengths


@dataclass
class Vehicle:
    id: int
    lane: int
    x: float
    y: float
    u: float
    v: float


@dataclass(frozen=True)
class GhostRule:
    """A phantom leader mirroring the front-most vehicle of ``lane``,
    shifted forward by ``offset`` along x."""

    lane: int
    offset: float


@dataclass
class Fleet:
    id: np.ndarray
    lane: np.ndarray
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    v: np.ndarray
    dx_car: float
    dy_car: float
    road_width: float = np.inf
    ghost: GhostRule | None = None
    t: float = 0.0
    events: Events = field(default_factory=Events)

    def __post_init__(self):
        self.id = np.asarray(self.id, dtype=int)
        self.lane = np.asarray(self.lane, dtype=int)
        for name in ("x", "y", "u", "v"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (self.dx_car > 0 and self.dy_car > 0):
            raise ValueError("vehicle dimensions must be positive")
        if len(np.unique(self.id)) != len(self.id):
            raise ValueError("vehicle ids must be unique")
        if np.any(self.u < 0):
            raise ValueError("longitudinal speeds must be non-negative")

    @classmethod
    def from_vehicles(cls, vehicles, dx_car, dy_car, **kw) -> "Fleet":
        cols = {k: [getattr(veh, k) for veh in vehicles] for k in ("id", "lane", "x", "y", "u", "v")}
        return cls(**cols, dx_car=dx_car, dy_car=dy_car, **kw)

    def vehicles(self) -> list[Vehicle]:
        return [
            Vehicle(int(i), int(la), float(x), float(y), float(u), float(v))
            for i, la, x, y, u, v in zip(self.id, self.lane, self.x, self.y, self.u, self.v)
        ]

    def __len__(self):
        return len(self.id)

    def copy(self) -> "Fleet":
        return copy.deepcopy(self)

    def ghost_state(self):
        """``(x, y, u, v)`` of the ghost leader, or ``None``."""
        if self.ghost is None:
            return None
        in_lane = np.flatnonzero(self.lane == self.ghost.lane)
        if len(in_lane) == 0:
            return None
        k = in_lane[np.argmax(self.x[in_lane])]
        return self.x[k] + self.ghost.offset, self.y[k], self.u[k], self.v[k]


@dataclass(frozen=True)
class MicroParams:
    model: ModelParams
    dx_car: float
    dy_car: float

    @property
    def c1(self) -> float:
        g = self.model.gamma1
        return self.model.u_ref * self.dx_car**g * self.dy_car**g

    @property
    def c2(self) -> float:
        g = self.model.gamma2
        return self.model.v_ref * self.dx_car**g * self.dy_car**g

    @classmethod
    def for_fleet(cls, fleet: Fleet, model: ModelParams) -> "MicroParams":
        return cls(model, fleet.dx_car, fleet.dy_car)


def _candidates(fleet: Fleet):
    """Vehicles plus the ghost (if any), as arrays sorted by id.

    Returns ``(order, x, y, u, v)`` where ``order[k]`` is the fleet index of
    candidate ``k`` or ``-1`` for the ghost.
    """
    n = len(fleet)
    x, y, u, v = fleet.x, fleet.y, fleet.u, fleet.v
    ids = fleet.id
    idx = np.arange(n)
    g = fleet.ghost_state()
    if g is not None:
        x, y, u, v = (np.append(a, b) for a, b in zip((x, y, u, v), g))
        ids = np.append(ids, ids.max() + 1 if n else 0)
        idx = np.append(idx, -1)
    order = np.argsort(ids, kind="stable")
    return idx[order], x[order], y[order], u[order], v[order]


def _partner_table(fleet: Fleet):
    """Partner of every vehicle as an index into the candidate arrays (-1: none)."""
    order, cx, cy, cu, cv = _candidates(fleet)
    dx = cx[None, :] - fleet.x[:, None]
    dy = cy[None, :] - fleet.y[:, None]
    vi = fleet.v[:, None]
    # a car less than one length ahead overlaps i longitudinally: it drives
    # alongside, not in front
    ok = (dx > 0) & (dx >= AHEAD_MIN * fleet.dx_car) & ((vi * dy > 0) | (vi == 0))
    d2 = np.where(ok, dx * dx + dy * dy, np.inf)
    # argmin returns the first minimum, i.e. the smallest id on ties
    j = np.argmin(d2, axis=1) if len(cx) else np.zeros(len(fleet), dtype=int)
    has = np.isfinite(d2[np.arange(len(fleet)), j]) if len(cx) else np.zeros(len(fleet), bool)
    return np.where(has, j, -1), (order, cx, cy, cu, cv)


def select_interacting(i: int, fleet: Fleet) -> int | None:
    """Fleet index of the vehicle ``i`` interacts with.

    Returns ``None`` without an admissible partner and ``-1`` when the
    partner is the ghost leader.
    """
    j, (order, *_rest) = _partner_table(fleet)
    if j[i] < 0:
        return None
    return int(order[j[i]])


def _clamped_gaps(gx, gy, dx_car, dy_car):
    gx = np.maximum(gx, dx_car)
    sgn = np.where(gy < 0, -1.0, 1.0)
    gy = sgn * np.maximum(np.abs(gy), LATERAL_GAP_MIN * dy_car)
    return gx, gy


def density_from_gaps(gx, gy, dx_car, dy_car):
    """Local density ``dX*dY / (gap_x * |gap_y|)`` with clamped gaps."""
    if np.any(np.asarray(gx) <= 0):
        raise ValueError("not ahead")
    gx, gy = _clamped_gaps(np.asarray(gx, float), np.asarray(gy, float), dx_car, dy_car)
    return dx_car * dy_car / (gx * np.abs(gy))


def _partner_state(fleet: Fleet, j: int):
    if j == -1:
        g = fleet.ghost_state()
        if g is None:
            raise ValueError("fleet has no ghost leader")
        return g
    return fleet.x[j], fleet.y[j], fleet.u[j], fleet.v[j]


def local_density(i: int, j: int, fleet: Fleet) -> float:
    xj, yj, _, _ = _partner_state(fleet, j)
    return float(density_from_gaps(xj - fleet.x[i], yj - fleet.y[i], fleet.dx_car, fleet.dy_car))


def _accel(gx, gy, du, dv, mp: MicroParams):
    gx, gy = _clamped_gaps(gx, gy, mp.dx_car, mp.dy_car)
    area = gx * np.abs(gy)
    core = du / gx + dv / gy
    m = mp.model
    return mp.c1 * core / area**m.gamma1, mp.c2 * core / area**m.gamma2


def accelerations(i: int, j: int, fleet: Fleet, params: MicroParams):
    """``(du/dt, dv/dt)`` of vehicle ``i`` reacting to partner ``j``."""
    xj, yj, uj, vj = _partner_state(fleet, j)
    gx = xj - fleet.x[i]
    if gx <= 0:
        raise ValueError("not ahead")
    au, av = _accel(gx, yj - fleet.y[i], uj - fleet.u[i], vj - fleet.v[i], params)
    return float(au), float(av)


def _interaction(fleet: Fleet):
    """Per-vehicle partner gaps and speed differences at the current time.

    Returns ``(has, gx, gy, du, dv)``; entries without a partner are zero.
    """
    j, (_, cx, cy, cu, cv) = _partner_table(fleet)
    has = j >= 0
    js = np.where(has, j, 0)
    if len(cx) == 0:
        z = np.zeros(len(fleet))
        return has, z, z, z, z
    gx = np.where(has, cx[js] - fleet.x, 1.0)
    gy = np.where(has, cy[js] - fleet.y, 1.0)
    du = np.where(has, cu[js] - fleet.u, 0.0)
    dv = np.where(has, cv[js] - fleet.v, 0.0)
    return has, gx, gy, du, dv


def per_vehicle_density(fleet: Fleet):
    """Local density of every vehicle (NaN where no partner exists)."""
    has, gx, gy, _, _ = _interaction(fleet)
    rho = np.full(len(fleet), np.nan)
    if np.any(has):
        rho[has] = density_from_gaps(gx[has], gy[has], fleet.dx_car, fleet.dy_car)
    return rho


def micro_step(fleet: Fleet, dt: float, params: MicroParams) -> Fleet:
    """Explicit Euler step of the 2D model.

    Partners are recomputed from the time-n snapshot and all vehicles are
    updated at once. Vehicles without a partner keep their speeds. Lateral
    positions are clamped to the road, zeroing ``v`` on contact.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    out = fleet.copy()
    if dt == 0 or len(fleet) == 0:
        return out
    has, gx, gy, du, dv = _interaction(fleet)
    au = np.zeros(len(fleet))
    av = np.zeros(len(fleet))
    if np.any(has):
        au[has], av[has] = _accel(gx[has], gy[has], du[has], dv[has], params)

    out.x = fleet.x + dt * fleet.u
    out.y = fleet.y + dt * fleet.v
    out.u = fleet.u + dt * au
    out.v = fleet.v + dt * av
    out.t = fleet.t + dt

    off = (out.y < 0) | (out.y > fleet.road_width)
    if np.any(off):
        out.y = np.clip(out.y, 0.0, fleet.road_width)
        out.v = np.where(off, 0.0, out.v)
        out.events.wall_contact += int(np.count_nonzero(off))
    neg = out.u < 0
    if np.any(neg):
        out.u = np.where(neg, 0.0, out.u)
        out.events.u_clamp += int(np.count_nonzero(neg))
    for a in (out.x, out.y, out.u, out.v):
        if not np.all(np.isfinite(a)):
            raise NumericalFailure("numerical failure", int(np.flatnonzero(~np.isfinite(a))[0]))
    return out


def ftl1d_step(fleet: Fleet, dt: float, params: ModelParams) -> Fleet:
    """Explicit Euler step of the 1D follow-the-leader model.

    Vehicles must be stored in increasing x order; vehicle ``i + 1`` leads
    vehicle ``i`` and the front-most vehicle keeps its speed.
    """
    x, u = fleet.x, fleet.u
    gaps = np.diff(x)
    if np.any(gaps <= 0):
        raise ValueError("vehicles must be strictly ordered along x")
    umax = float(np.max(u)) if len(u) else 0.0
    if len(gaps) and umax > 0 and dt > gaps.min() / umax:
        raise ValueError(f"dt={dt} exceeds min gap / max speed = {gaps.min() / umax}")
    g = params.gamma1
    acc = np.zeros_like(u)
    acc[:-1] = params.u_ref * fleet.dx_car**g * np.diff(u) / gaps ** (g + 1)
    out = fleet.copy()
    out.x = x + dt * u
    out.u = u + dt * acc
    out.t = fleet.t + dt
    neg = out.u < 0
    if np.any(neg):
        out.u = np.where(neg, 0.0, out.u)
        out.events.u_clamp += int(np.count_nonzero(neg))
    if np.any(np.diff(out.x) <= 0):
        raise ValueError("ordering violated after step")
    if not (np.all(np.isfinite(out.x)) and np.all(np.isfinite(out.u))):
        raise NumericalFailure("numerical failure")
    return out


def ftl1d_density(fleet: Fleet) -> np.ndarray:
    """``dX / (x_{i+1} - x_i)`` for every vehicle but the front-most."""
    return fleet.dx_car / np.diff(fleet.x)


def run_micro(fleet: Fleet, t_final: float, dt: float, params, snapshot_times=(), one_d: bool = False):
    """Advance with fixed ``dt``, shortening steps to land on snapshot times.

    ``params`` is :class:`MicroParams` in 2D and :class:`ModelParams` in 1D.
    Returns ``[(t, fleet), ...]``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    targets = sorted({float(s) for s in snapshot_times if fleet.t < s < t_final} | {float(t_final)})
    cur = fleet
    snaps = []
    for target in targets:
        # step count fixed up front so repeated runs agree bitwise
        n = int(np.ceil((target - cur.t) / dt - 1e-9))
        for k in range(n):
            h = min(dt, target - cur.t) if k == n - 1 else dt
            cur = ftl1d_step(cur, h, params) if one_d else micro_step(cur, h, params)
        cur.t = target
        snaps.append((target, cur))
    return snaps


def fleet_to_field(fleet: Fleet, grid: Grid2D):
    """Per-vehicle ``(rho, rho*u, rho*v)`` and their per-cell averages.

    Returns ``(per_vehicle, per_cell)`` with shapes ``(3, n)`` and
    ``(3, nx, ny)``. Vehicles without a partner are skipped; empty cells
    hold zeros.
    """
    rho = per_vehicle_density(fleet)
    pv = np.stack([rho, rho * fleet.u, rho * fleet.v])
    cells = np.zeros((3, grid.nx, grid.ny))
    ok = np.isfinite(rho)
    ix = np.floor((fleet.x - grid.ax) / grid.dx).astype(int)
    iy = np.floor((fleet.y - grid.ay) / grid.dy).astype(int)
    ok &= (ix >= 0) & (ix < grid.nx) & (iy >= 0) & (iy < grid.ny)
    counts = np.zeros((grid.nx, grid.ny))
    np.add.at(counts, (ix[ok], iy[ok]), 1.0)
    for c in range(3):
        np.add.at(cells[c], (ix[ok], iy[ok]), pv[c][ok])
    filled = counts > 0
    cells[:, filled] /= counts[filled]
    return pv, cells
