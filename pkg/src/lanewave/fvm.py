"""First-order finite-volume solvers with local Lax-Friedrichs fluxes.

Conserved arrays are laid out component-first: a 2D field stores
``q[c, i, j]`` for component ``c`` in ``(rho, rho*w, rho*sigma)``, cell
``i`` along x and ``j`` along y. The 1D solver stores ``q[c, i]`` with
``c`` in ``(rho, rho*w)``.

Boundaries: x is either zero-gradient ("outflow") or "periodic"; y is a
zero-flux wall, so no vehicle leaves the road laterally.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .core import Events, ModelParams, max_wave_speed, recover_speeds

DEFAULT_CFL = 0.45


class NumericalFailure(RuntimeError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, message: str, index=None):
        super().__init__(message if index is None else f"{message} at cell {index}")
        self.index = index


@dataclass(frozen=True)
class Grid2D:
    nx: int
    ny: int
    ax: float
    bx: float
    ay: float
    by: float

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("nx and ny must be at least 1")
        if not (self.bx > self.ax and self.by > self.ay):
            raise ValueError("empty domain")

    @property
    def dx(self) -> float:
        return (self.bx - self.ax) / self.nx

    @property
    def dy(self) -> float:
        return (self.by - self.ay) / self.ny

    @property
    def xc(self) -> np.ndarray:
        return self.ax + (np.arange(self.nx) + 0.5) * self.dx

    @property
    def yc(self) -> np.ndarray:
        return self.ay + (np.arange(self.ny) + 0.5) * self.dy


@dataclass
class Field2D:
    grid: Grid2D
    q: np.ndarray
    bc_x: str = "outflow"
    bc_y: str = "wall"
    t: float = 0.0
    events: Events = field(default_factory=Events)
    steps: int = 0

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        if self.q.shape != (3, self.grid.nx, self.grid.ny):
            raise ValueError(f"expected q of shape (3, {self.grid.nx}, {self.grid.ny}), got {self.q.shape}")
        if self.bc_x not in ("outflow", "periodic"):
            raise ValueError(f"unknown x boundary {self.bc_x!r}")
        if self.bc_y != "wall":
            raise ValueError(f"unknown y boundary {self.bc_y!r}")

    def copy(self) -> "Field2D":
        return Field2D(self.grid, self.q.copy(), self.bc_x, self.bc_y, self.t, copy.deepcopy(self.events), self.steps)

    def totals(self) -> np.ndarray:
        """Integrals of the three conserved components over the domain."""
        return self.q.sum(axis=(1, 2)) * self.grid.dx * self.grid.dy

    def primitive(self, params: ModelParams):
        u, v, _ = recover_speeds(self.q[0], self.q[1], self.q[2], params)
        return self.q[0], u, v


@dataclass
class Field1D:
    nx: int
    ax: float
    bx: float
    q: np.ndarray
    bc_x: str = "outflow"
    t: float = 0.0
    events: Events = field(default_factory=Events)
    steps: int = 0

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        if self.q.shape != (2, self.nx):
            raise ValueError(f"expected q of shape (2, {self.nx}), got {self.q.shape}")
        if self.bc_x not in ("outflow", "periodic"):
            raise ValueError(f"unknown x boundary {self.bc_x!r}")

    @property
    def dx(self) -> float:
        return (self.bx - self.ax) / self.nx

    @property
    def xc(self) -> np.ndarray:
        return self.ax + (np.arange(self.nx) + 0.5) * self.dx

    def copy(self) -> "Field1D":
        return Field1D(self.nx, self.ax, self.bx, self.q.copy(), self.bc_x, self.t, copy.deepcopy(self.events), self.steps)

    def totals(self) -> np.ndarray:
        return self.q.sum(axis=1) * self.dx

    def primitive(self, params: ModelParams):
        u, _, _ = recover_speeds(self.q[0], self.q[1], np.zeros_like(self.q[0]), params)
        return self.q[0], u


def _alpha(q, axis, params, events=None):
    u, v, _ = recover_speeds(q[0], q[1], q[2], params, events)
    return max_wave_speed(q[0], u, v, axis, params), u, v


def llf_flux(QL, QR, axis: str, params: ModelParams, alpha=None, events: Events | None = None) -> np.ndarray:
    """Local Lax-Friedrichs flux ``(f(L) + f(R))/2 - alpha/2 * (R - L)``.

    ``alpha`` defaults to the larger of the two states' maximal wave speeds
    along ``axis``; pass a number to use a global coefficient instead.
    """
    QL = np.asarray(QL, dtype=float)
    QR = np.asarray(QR, dtype=float)
    aL, uL, vL = _alpha(QL, axis, params, events)
    aR, uR, vR = _alpha(QR, axis, params, events)
    sL, sR = (uL, uR) if axis == "x" else (vL, vR)
    if alpha is None:
        alpha = np.maximum(aL, aR)
    fL = np.stack([QL[0] * sL, sL * QL[1], sL * QL[2]])
    fR = np.stack([QR[0] * sR, sR * QR[1], sR * QR[2]])
    return 0.5 * (fL + fR) - 0.5 * alpha * (QR - QL)


def cfl_dt(fld: Field2D | Field1D, cfl: float, params: ModelParams) -> float:
    """Largest stable step ``cfl / (max ax/dx + max ay/dy)``."""
    if not 0 < cfl <= 1:
        raise ValueError("cfl out of (0,1]")
    if isinstance(fld, Field1D):
        u, _, _ = recover_speeds(fld.q[0], fld.q[1], np.zeros(fld.nx), params)
        rate = float(np.max(max_wave_speed(fld.q[0], u, 0.0, "x", params))) / fld.dx
        hmin = fld.dx
    else:
        q = fld.q
        u, v, _ = recover_speeds(q[0], q[1], q[2], params)
        ax, ay = max_wave_speed(q[0], u, v, "x", params), max_wave_speed(q[0], u, v, "y", params)
        rate = float(np.max(ax)) / fld.grid.dx + float(np.max(ay)) / fld.grid.dy
        hmin = min(fld.grid.dx, fld.grid.dy)
    if rate <= 0:
        return cfl * hmin / params.u_ref
    return cfl / rate


def apply_boundaries(fld: Field2D) -> np.ndarray:
    """Conserved array padded with one ghost column on each x side.

    The y direction needs no ghost cells: wall edges carry zero flux.
    """
    q = fld.q
    if fld.bc_x == "periodic":
        left, right = q[:, -1:, :], q[:, :1, :]
    else:
        left, right = q[:, :1, :], q[:, -1:, :]
    return np.concatenate([left, q, right], axis=1)


def _check(q, t):
    bad = ~np.isfinite(q)
    if np.any(bad):
        idx = tuple(int(k) for k in np.argwhere(bad)[0][1:])
        raise NumericalFailure(f"numerical failure (t={t})", idx)


def _apply_floor(q, params, events):
    """Count cells below ``rho_floor``; they are vacuum (zero speeds) for the
    fluxes. Their mass is kept so the scheme stays conservative; only a
    negative density (round-off) is reset to an empty cell."""
    low = q[0] < params.rho_floor
    n = int(np.count_nonzero(low))
    if n:
        events.floor += n
        neg = q[0] < 0
        if np.any(neg):
            q[:, neg] = 0.0
            events.extra["negative_density"] = events.extra.get("negative_density", 0) + int(np.count_nonzero(neg))


def _stability_guard(dt, limit):
    if dt > limit * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds the stability limit {limit}")


def step_2d(fld: Field2D, dt: float, params: ModelParams, global_alpha: bool = False) -> Field2D:
    """One explicit Euler update of the 2D scheme; returns a new field."""
    _check(fld.q, fld.t)
    _stability_guard(dt, cfl_dt(fld, 1.0, params))
    out = fld.copy()
    ev = out.events
    q = fld.q
    u, v, _ = recover_speeds(q[0], q[1], q[2], params, ev)
    ax_c = max_wave_speed(q[0], u, v, "x", params)
    ay_c = max_wave_speed(q[0], u, v, "y", params)

    # x edges i-1/2 for i = 0..nx, through one ghost column per side
    qe = apply_boundaries(fld)
    pad = (lambda a: np.concatenate([a[-1:], a, a[:1]])) if fld.bc_x == "periodic" else (
        lambda a: np.concatenate([a[:1], a, a[-1:]]))
    ue, axe = pad(u), pad(ax_c)
    alpha_x = float(np.max(ax_c)) if global_alpha else np.maximum(axe[:-1], axe[1:])
    fx = np.stack([qe[0] * ue, ue * qe[1], ue * qe[2]])
    F = 0.5 * (fx[:, :-1] + fx[:, 1:]) - 0.5 * alpha_x * (qe[:, 1:] - qe[:, :-1])

    # interior y edges j+1/2 for j = 0..ny-2; wall edges carry zero flux
    gy = np.stack([q[0] * v, v * q[1], v * q[2]])
    alpha_y = float(np.max(ay_c)) if global_alpha else np.maximum(ay_c[:, :-1], ay_c[:, 1:])
    G_in = 0.5 * (gy[:, :, :-1] + gy[:, :, 1:]) - 0.5 * alpha_y * (q[:, :, 1:] - q[:, :, :-1])
    zero = np.zeros((3, fld.grid.nx, 1))
    G = np.concatenate([zero, G_in, zero], axis=2)

    g = fld.grid
    qn = q - dt / g.dx * (F[:, 1:] - F[:, :-1]) - dt / g.dy * (G[:, :, 1:] - G[:, :, :-1])
    _check(qn, fld.t)
    _apply_floor(qn, params, ev)
    out.q = qn
    out.t = fld.t + dt
    out.steps += 1
    return out


def step_1d(fld: Field1D, dt: float, params: ModelParams, global_alpha: bool = False) -> Field1D:
    """One explicit Euler update of the 1D ARZ scheme; returns a new field."""
    _check(fld.q, fld.t)
    _stability_guard(dt, cfl_dt(fld, 1.0, params))
    out = fld.copy()
    q = fld.q
    if fld.bc_x == "periodic":
        qe = np.concatenate([q[:, -1:], q, q[:, :1]], axis=1)
    else:
        qe = np.concatenate([q[:, :1], q, q[:, -1:]], axis=1)
    uc, _, _ = recover_speeds(q[0], q[1], np.zeros(fld.nx), params, out.events)
    ac = max_wave_speed(q[0], uc, 0.0, "x", params)
    if fld.bc_x == "periodic":
        u = np.concatenate([uc[-1:], uc, uc[:1]])
        a = np.concatenate([ac[-1:], ac, ac[:1]])
    else:
        u = np.concatenate([uc[:1], uc, uc[-1:]])
        a = np.concatenate([ac[:1], ac, ac[-1:]])
    alpha = float(np.max(ac)) if global_alpha else np.maximum(a[:-1], a[1:])
    f = np.stack([qe[0] * u, u * qe[1]])
    F = 0.5 * (f[:, :-1] + f[:, 1:]) - 0.5 * alpha * (qe[:, 1:] - qe[:, :-1])
    qn = q - dt / fld.dx * (F[:, 1:] - F[:, :-1])
    _check(qn, fld.t)
    _apply_floor(qn, params, out.events)
    out.q = qn
    out.t = fld.t + dt
    out.steps += 1
    return out


def run(fld, t_final: float, cfl: float, params: ModelParams, snapshot_times=(), global_alpha: bool = False):
    """Advance to ``t_final`` with CFL-sized steps.

    The last step before each snapshot time (and before ``t_final``) is
    shortened to land on it exactly. Returns ``[(t, field), ...]`` for every
    requested snapshot in ``(fld.t, t_final]`` plus ``t_final`` itself.
    """
    if t_final < fld.t:
        raise ValueError("t_final precedes the field time")
    stepper = step_1d if isinstance(fld, Field1D) else step_2d
    targets = sorted({float(s) for s in snapshot_times if fld.t < s < t_final} | {float(t_final)})
    snaps = []
    cur = fld
    if t_final == fld.t:
        return [(cur.t, cur.copy())]
    for target in targets:
        while cur.t < target:
            dt = cfl_dt(cur, cfl, params)
            landing = cur.t + dt >= target
            if landing:
                dt = target - cur.t
            cur = stepper(cur, dt, params, global_alpha)
            if landing:
                cur.t = target
        snaps.append((target, cur))
    return snaps
