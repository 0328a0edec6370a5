"""Planar Riemann problems for the 2D ARZ-type system.

Elementary waves are identified through the Riemann invariants
``z1 = u + v + P1 + P2``, ``z2 = u + v`` and ``z3 = u``. Intermediate
states follow the two lane-changing cases: vanishing lateral desired speed
(the 1D ARZ solution) and a shared positive lateral desired speed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .core import (
    X_AXIS,
    ModelParams,
    PrimitiveState,
    eigenvalues,
    eigenvectors_numeric,
    pressure_inverse,
    riemann_invariants,
)

INVARIANT_TOL = 1e-10

ONE_SHOCK = "1-shock"
ONE_RAREFACTION = "1-rarefaction"
TWO_CONTACT = "2-contact"
THREE_CONTACT = "3-contact"
NOT_ELEMENTARY = "not elementary"


class NoAdmissibleState(ValueError):
    def __init__(self, message, bracket=None, residuals=None):
        super().__init__(message)
        self.bracket = bracket
        self.residuals = residuals


class DegenerateField(ValueError):
    pass


@dataclass
class WaveStructure:
    family: str
    left: PrimitiveState
    right: PrimitiveState
    speeds: tuple = ()
    intermediates: list = field(default_factory=list)
    degenerate: bool = False
    fan: list | None = None  # [(speed, PrimitiveState), ...] inside rarefactions

    @property
    def lo(self) -> float:
        return self.speeds[0]

    @property
    def hi(self) -> float:
        return self.speeds[-1]


def _prim(W) -> PrimitiveState:
    return PrimitiveState(*(float(c) for c in W))


def shock_speed(Wl, Wr) -> float:
    """Jump speed ``(rho_r m_r - rho_l m_l) / (rho_r - rho_l)`` with ``m = u + v``."""
    rl, ul, vl = Wl
    rr, ur, vr = Wr
    if abs(rr - rl) <= 1e-12:
        raise ValueError("degenerate shock (equal densities)")
    return (rr * (ur + vr) - rl * (ul + vl)) / (rr - rl)


def lax_admissible(Wl, Wr, params: ModelParams, xi=X_AXIS) -> bool:
    """Whether ``lambda1(Wl) >= s >= lambda1(Wr)`` for the jump ``Wl -> Wr``."""
    s = shock_speed(Wl, Wr)
    return bool(eigenvalues(Wl, xi, params)[0] >= s >= eigenvalues(Wr, xi, params)[0])


def classify(Wl, Wr, params: ModelParams, xi=X_AXIS, tol: float = INVARIANT_TOL) -> WaveStructure:
    """Identify the single elementary wave joining ``Wl`` to ``Wr``.

    Invariants are checked in the order z1, z2, z3. Identical states are
    reported as a degenerate 2-contact.
    """
    Wl, Wr = _prim(Wl), _prim(Wr)
    if min(Wl.rho, Wr.rho) < params.rho_floor:
        raise ValueError("states must have rho >= rho_floor")
    zl = riemann_invariants(Wl, params)
    zr = riemann_invariants(Wr, params)
    match = [abs(a - b) <= tol for a, b in zip(zl, zr)]
    if all(match):
        s = Wl.u + Wl.v
        return WaveStructure(TWO_CONTACT, Wl, Wr, (s,), degenerate=True)
    if match[0]:
        ml, mr = Wl.u + Wl.v, Wr.u + Wr.v
        if ml > mr:
            return WaveStructure(ONE_SHOCK, Wl, Wr, (shock_speed(Wl, Wr),))
        lam_l = float(eigenvalues(Wl, xi, params)[0])
        lam_r = float(eigenvalues(Wr, xi, params)[0])
        return WaveStructure(ONE_RAREFACTION, Wl, Wr, (lam_l, lam_r))
    if match[1]:
        return WaveStructure(TWO_CONTACT, Wl, Wr, (Wl.u + Wl.v,))
    if match[2]:
        return WaveStructure(THREE_CONTACT, Wl, Wr, (Wl.u,))
    return WaveStructure(NOT_ELEMENTARY, Wl, Wr)


def _family_field(W, xi, params, family, h=1e-6):
    """Eigenvector of ``family`` scaled so that ``grad(lambda) . r = 1``."""
    k = family - 1
    res = eigenvectors_numeric(W, xi, params)
    if res.degenerate:
        raise DegenerateField("degenerate field")
    r = res.vectors[:, k]
    grad = np.empty(3)
    for c in range(3):
        e = np.zeros(3)
        e[c] = h
        grad[c] = (eigenvalues(np.asarray(W) + e, xi, params)[k] - eigenvalues(np.asarray(W) - e, xi, params)[k]) / (2 * h)
    denom = float(grad @ r)
    if abs(denom) < 1e-10:
        raise DegenerateField("degenerate field")
    return r / denom


def rarefaction_fan(Wl, Wr, xi, n: int, params: ModelParams, family: int = 1):
    """Sample the centred rarefaction of ``family`` joining ``Wl`` to ``Wr``.

    Integrates ``dW/ds = r(W) / (grad(lambda) . r(W))`` from ``lambda(Wl)``
    to ``lambda(Wr)`` and returns ``n`` samples ``(s, W)``. The eigenvector
    field of the first family of this system is linearly degenerate (its
    ``rho`` component vanishes while the eigenvalue depends only on
    ``rho``), so ``family=1`` raises :class:`DegenerateField`; the second
    family is genuinely nonlinear and carries the classical ARZ fan.
    """
    Wl, Wr = _prim(Wl), _prim(Wr)
    if Wl == Wr:
        return []
    k = family - 1
    s0 = float(eigenvalues(Wl, xi, params)[k])
    s1 = float(eigenvalues(Wr, xi, params)[k])
    _family_field(Wl, xi, params, family)
    if not s1 > s0:
        raise ValueError("not a rarefaction: speeds must increase from left to right")

    ref = [None]

    def rhs(_s, W):
        r = _family_field(W, xi, params, family)
        # keep orientation continuous along the path
        if ref[0] is not None and r @ ref[0] < 0:
            r = -r
        ref[0] = r
        return r

    speeds = np.linspace(s0, s1, max(n, 2))
    sol = solve_ivp(rhs, (s0, s1), np.asarray(Wl), t_eval=speeds, rtol=1e-10, atol=1e-12, method="DOP853")
    if not sol.success:
        raise DegenerateField(f"fan integration failed: {sol.message}")
    end = sol.y[:, -1]
    if np.max(np.abs(end - np.asarray(Wr))) > 1e-6:
        raise ValueError("right state is not on the rarefaction curve through the left state")
    return [(float(s), PrimitiveState(*map(float, sol.y[:, i]))) for i, s in enumerate(sol.t)]


def _find_density(g, dg, lo, hi, tol=1e-12, maxiter=100):
    """Root of ``g`` on ``[lo, hi]``: damped Newton with bisection fallback."""
    glo, ghi = g(lo), g(hi)
    if glo == 0:
        return lo
    if ghi == 0:
        return hi
    if glo * ghi > 0:
        raise NoAdmissibleState("no admissible intermediate state", (lo, hi), (glo, ghi))
    x = 0.5 * (lo + hi)
    for _ in range(maxiter):
        gx = g(x)
        if abs(gx) <= tol * 1e-2 or hi - lo <= tol * max(1.0, abs(x)) * 1e-3:
            return x
        if (gx < 0) == (glo < 0):
            lo, glo = x, gx
        else:
            hi = x
        d = dg(x)
        step = gx / d if d != 0 else np.inf
        lam = 1.0
        cand = x - step
        # damping: halve until the Newton step decreases |g| inside the bracket
        while lam > 1e-4 and not (lo < cand < hi and abs(g(cand)) < abs(gx)):
            lam *= 0.5
            cand = x - lam * step
        if not (lo < cand < hi and abs(g(cand)) < abs(gx)):
            cand = 0.5 * (lo + hi)
        if abs(cand - x) <= tol * max(1.0, abs(x)):
            return cand
        x = cand
    return x


def _dp(rho, ref, gamma):
    return ref * rho ** (gamma - 1) if gamma > 0 else ref / rho


def _solve_pressure(target, params: ModelParams, which=1):
    """Density with ``P_which(rho) = target`` on ``[rho_floor, rho_max]``."""
    ref, gam = (params.u_ref, params.gamma1) if which == 1 else (params.v_ref, params.gamma2)
    P = params.p1 if which == 1 else params.p2
    return _find_density(
        lambda r: float(P(r)) - target,
        lambda r: _dp(r, ref, gam),
        params.rho_floor,
        params.rho_max,
    )


@dataclass
class Case1Result:
    state: PrimitiveState
    clamped: bool
    invariant_residual: float


def solve_case1(Wl, Wr, params: ModelParams, printed_variant: bool = False) -> Case1Result:
    """Intermediate state when both lateral desired speeds vanish.

    ``u* = u_r`` and ``P1(rho*) = u_l - u* + P1(rho_l)`` (the left desired
    speed is carried across the first wave). ``printed_variant`` uses
    ``u_l + u*`` instead, for comparison only.
    """
    Wl, Wr = _prim(Wl), _prim(Wr)
    for W in (Wl, Wr):
        if abs(W.v + float(params.p2(W.rho))) > 1e-10:
            raise ValueError("case 1 requires sigma_l = sigma_r = 0")
    u_star = Wr.u
    sign = 1.0 if printed_variant else -1.0
    p = Wl.u + sign * u_star + float(params.p1(Wl.rho))
    rho, clamped = pressure_inverse(p, params.u_ref, params.gamma1, params.rho_floor, params.rho_max)
    W = PrimitiveState(rho, u_star, -float(params.p2(rho)))
    resid = abs(riemann_invariants(Wl, params)[0] - riemann_invariants(W, params)[0])
    return Case1Result(W, clamped, float(resid))


@dataclass
class Case2Result:
    left_star: PrimitiveState
    right_star: PrimitiveState
    lane_change: bool
    residuals: dict


def case2_residuals(Wl, Wr, left_star, right_star, params: ModelParams) -> dict:
    """Residuals of the six defining equations of the lane-changing case."""
    rl, ul, vl = Wl
    _, ur, _ = Wr
    rls, uls, vls = left_star
    rrs, urs, vrs = right_star
    P1, P2 = params.p1, params.p2
    lane_change = vl > INVARIANT_TOL
    left = {
        "left_w": ul + P1(rl) - (uls + P1(rls)),
        "left_sigma": (vl if lane_change else 0.0) + P2(rl) - (vls + P2(rls)),
        "left_u": uls - (ul + vl if lane_change else ul),
    }
    right = {
        "right_w": uls + P1(rls) - (urs + P1(rrs)),
        "right_sigma": vls + P2(rls) - (vrs + P2(rrs)),
        "right_u": urs - ur,
    }
    return {k: float(abs(val)) for k, val in {**left, **right}.items()}


def solve_case2(Wl, Wr, params: ModelParams) -> Case2Result:
    """Intermediate states when both sides share a positive lateral desired speed."""
    Wl, Wr = _prim(Wl), _prim(Wr)
    sig_l = Wl.v + float(params.p2(Wl.rho))
    sig_r = Wr.v + float(params.p2(Wr.rho))
    if abs(sig_l - sig_r) > INVARIANT_TOL or not sig_l > 0:
        raise ValueError("case 2 requires sigma_l = sigma_r > 0")
    if Wl.v < -INVARIANT_TOL:
        raise ValueError("case 2 requires v_l >= 0")
    w_l = Wl.u + float(params.p1(Wl.rho))
    lane_change = Wl.v > INVARIANT_TOL
    if lane_change:
        u_ls = Wl.u + Wl.v
        rho_ls = _solve_pressure(w_l - u_ls, params)
        v_ls = Wl.v + float(params.p2(Wl.rho)) - float(params.p2(rho_ls))
    else:
        u_ls = Wl.u
        rho_ls = _solve_pressure(w_l - u_ls, params)
        v_ls = float(params.p2(Wl.rho)) - float(params.p2(rho_ls))
    left_star = PrimitiveState(rho_ls, u_ls, v_ls)

    u_rs = Wr.u
    rho_rs = _solve_pressure(u_ls + float(params.p1(rho_ls)) - u_rs, params)
    v_rs = v_ls + float(params.p2(rho_ls)) - float(params.p2(rho_rs))
    right_star = PrimitiveState(rho_rs, u_rs, v_rs)
    return Case2Result(left_star, right_star, lane_change, case2_residuals(Wl, Wr, left_star, right_star, params))


def sample_solution(structure, s: float) -> PrimitiveState:
    """State at similarity speed ``s`` of a left-to-right list of waves."""
    if not structure:
        raise ValueError("empty wave pattern")
    prev_hi = -np.inf
    for wave in structure:
        if wave.lo < prev_hi:
            raise ValueError("non-ordered wave pattern")
        prev_hi = wave.hi
    for wave in structure:
        if s < wave.lo:
            return wave.left
        if wave.fan and s <= wave.hi:
            speeds = np.array([p[0] for p in wave.fan])
            states = np.array([p[1] for p in wave.fan])
            return PrimitiveState(*(float(np.interp(s, speeds, states[:, c])) for c in range(3)))
    return structure[-1].right


def solve(Wl, Wr, params: ModelParams, xi=X_AXIS) -> dict:
    """Summary used by the command line: wave type and intermediate states."""
    Wl, Wr = _prim(Wl), _prim(Wr)
    ws = classify(Wl, Wr, params, xi)
    out = {"classification": ws.family, "degenerate": ws.degenerate, "speeds": ws.speeds, "intermediates": []}
    if ws.degenerate:
        out["classification"] = "identity (degenerate contact)"
        return out
    sig_l = Wl.v + float(params.p2(Wl.rho))
    sig_r = Wr.v + float(params.p2(Wr.rho))
    if abs(sig_l) <= 1e-10 and abs(sig_r) <= 1e-10:
        r = solve_case1(Wl, Wr, params)
        out["case"] = 1
        out["intermediates"] = [r.state]
        out["clamped"] = r.clamped
    elif abs(sig_l - sig_r) <= INVARIANT_TOL and sig_l > 0 and Wl.v >= -INVARIANT_TOL:
        r = solve_case2(Wl, Wr, params)
        out["case"] = 2
        out["intermediates"] = [r.left_star, r.right_star]
        out["residuals"] = r.residuals
    return out
