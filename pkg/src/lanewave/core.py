"""Model constants, state conversions, fluxes and eigenstructure.

All functions accept python floats or numpy arrays (broadcast elementwise).
The state vector is ``W = (rho, u, v)`` in primitive form and
``Q = (rho, rho*w, rho*sigma)`` in conserved form, with the desired speeds
``w = u + P1(rho)`` and ``sigma = v + P2(rho)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class InvalidState(ValueError):
    """Raised for non-finite or otherwise unusable state values."""


class NoPreimage(ValueError):
    """Raised when a pressure value has no density preimage."""


@dataclass(frozen=True)
class ModelParams:
    u_ref: float = 1.0
    v_ref: float = 0.009
    gamma1: float = 1.0
    gamma2: float = 1.0
    rho_floor: float = 1e-8
    rho_max: float = 1.0

    def __post_init__(self):
        if not self.u_ref > 0:
            raise ValueError("u_ref must be positive")
        if not self.rho_floor > 0:
            raise ValueError("rho_floor must be positive")
        if not self.rho_floor < self.rho_max:
            raise ValueError("rho_floor must be below rho_max")
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise ValueError("pressure exponents must be non-negative")
        if self.gamma1 == self.gamma2 and self.u_ref == self.v_ref:
            warnings.warn(
                "u_ref == v_ref with gamma1 == gamma2: the first field is not "
                "genuinely nonlinear",
                stacklevel=2,
            )

    def p1(self, rho):
        return pressure(rho, self.u_ref, self.gamma1)

    def p2(self, rho):
        return pressure(rho, self.v_ref, self.gamma2)


class PrimitiveState(NamedTuple):
    rho: float
    u: float
    v: float


class ConservedState(NamedTuple):
    rho: float
    rho_w: float
    rho_sigma: float


class Direction(NamedTuple):
    xi1: float
    xi2: float

    @classmethod
    def from_angle(cls, theta: float) -> "Direction":
        return cls(math.cos(theta), math.sin(theta))


X_AXIS = Direction(1.0, 0.0)
Y_AXIS = Direction(0.0, 1.0)


@dataclass
class Events:
    """Mutable tally of regularization events (vacuum, clamps, floors)."""

    vacuum: int = 0
    u_clamp: int = 0
    floor: int = 0
    wall_contact: int = 0
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "vacuum": self.vacuum,
            "u_clamp": self.u_clamp,
            "floor": self.floor,
            "wall_contact": self.wall_contact,
            **self.extra,
        }


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise InvalidState("invalid state")


def pressure(rho, ref_speed, gamma):
    """Traffic pressure ``ref*rho**gamma/gamma`` (``ref*ln(rho)`` for gamma=0)."""
    _check_finite(rho)
    rho = np.asarray(rho, dtype=float)
    if gamma > 0:
        out = ref_speed * rho**gamma / gamma
    elif gamma == 0:
        with np.errstate(divide="ignore"):
            out = ref_speed * np.log(rho)
        _check_finite(out)
    else:
        raise ValueError("gamma must be non-negative")
    return out[()] if out.ndim == 0 else out


def rho_dpressure(rho, ref_speed, gamma):
    """``rho * P'(rho)``; equals ``ref*rho**gamma`` (``ref`` for gamma=0)."""
    rho = np.asarray(rho, dtype=float)
    if gamma > 0:
        out = ref_speed * rho**gamma
    else:
        out = np.full_like(rho, float(ref_speed))
    return out[()] if out.ndim == 0 else out


def pressure_inverse(p, ref_speed, gamma, rho_floor=1e-8, rho_max=1.0):
    """Density whose pressure equals ``p``.

    Returns ``(rho, clamped)``; ``rho`` is clamped into ``[rho_floor, rho_max]``
    and ``clamped`` reports whether that happened.
    """
    _check_finite(p)
    if gamma > 0:
        if p < 0:
            raise NoPreimage("no preimage")
        rho = (gamma * p / ref_speed) ** (1.0 / gamma)
    else:
        rho = math.exp(p / ref_speed)
    clamped = not (rho_floor <= rho <= rho_max)
    return float(min(max(rho, rho_floor), rho_max)), clamped


def primitive_to_conserved(W, params: ModelParams) -> ConservedState:
    rho, u, v = (np.asarray(c, dtype=float) for c in W)
    _check_finite(rho, u, v)
    if np.any(rho < 0) or np.any(u < 0):
        raise InvalidState("invalid state")
    # P(0) is -inf for the logarithmic law; vacuum carries no momentum anyway
    safe = np.where(rho > 0, rho, 1.0)
    rho_w = np.where(rho > 0, rho * (u + params.p1(safe)), 0.0)
    rho_sigma = np.where(rho > 0, rho * (v + params.p2(safe)), 0.0)
    return ConservedState(*(a[()] if a.ndim == 0 else a for a in (rho, rho_w, rho_sigma)))


def recover_speeds(rho, rho_w, rho_sigma, params: ModelParams, events: Events | None = None):
    """Array kernel behind :func:`conserved_to_primitive`.

    Returns ``(u, v, vacuum_mask)``. Vacuum cells get ``u = v = 0``; negative
    ``u`` is clamped to zero and tallied in ``events.u_clamp``.
    """
    rho = np.asarray(rho, dtype=float)
    vac = rho < params.rho_floor
    safe = np.where(vac, 1.0, rho)
    u = np.where(vac, 0.0, rho_w / safe - params.p1(safe))
    v = np.where(vac, 0.0, rho_sigma / safe - params.p2(safe))
    neg = u < 0
    if np.any(neg):
        u = np.where(neg, 0.0, u)
    if events is not None:
        events.vacuum += int(np.count_nonzero(vac))
        events.u_clamp += int(np.count_nonzero(neg))
    return u, v, vac


def conserved_to_primitive(Q, params: ModelParams, events: Events | None = None) -> PrimitiveState:
    """Inverse variable change; vacuum states come back as ``(rho_floor, 0, 0)``."""
    rho, rho_w, rho_sigma = (np.asarray(c, dtype=float) for c in Q)
    _check_finite(rho, rho_w, rho_sigma)
    u, v, vac = recover_speeds(rho, rho_w, rho_sigma, params, events)
    rho_out = np.where(vac, params.rho_floor, rho)
    return PrimitiveState(*(a[()] if a.ndim == 0 else a for a in (rho_out, u, v)))


def physical_flux(Q, axis: str, params: ModelParams, events: Events | None = None) -> np.ndarray:
    """Flux ``f(q) = (rho u, rho u w, rho u sigma)`` for x, ``g`` with v for y."""
    rho, rho_w, rho_sigma = (np.asarray(c, dtype=float) for c in Q)
    _check_finite(rho, rho_w, rho_sigma)
    u, v, vac = recover_speeds(rho, rho_w, rho_sigma, params, events)
    if axis == "x":
        speed = u
    elif axis == "y":
        speed = v
    else:
        raise ValueError(f"unknown axis {axis!r}")
    # rho*speed*(rho_w/rho) written as speed*rho_w keeps the vacuum row at zero
    return np.stack([rho * speed, speed * rho_w, speed * rho_sigma])


def eigenvalues(W, xi, params: ModelParams):
    """Closed-form characteristic speeds ``(lambda1, lambda2, lambda3)`` along ``xi``."""
    rho, u, v = W
    xi1, xi2 = xi
    a = rho_dpressure(rho, params.u_ref, params.gamma1)
    b = rho_dpressure(rho, params.v_ref, params.gamma2)
    lam1 = -(xi1 * a + xi2 * b)
    lam3 = xi1 * u + xi2 * v
    # xi1*(u - a) + xi2*(v - b), summed this way so lam2 = lam1 + lam3 bitwise
    lam2 = lam1 + lam3
    return lam1, lam2, lam3


def max_wave_speed(rho, u, v, axis: str, params: ModelParams):
    """``max_k |lambda_k|`` along a coordinate axis, elementwise."""
    xi = X_AXIS if axis == "x" else Y_AXIS
    lam1, lam2, lam3 = eigenvalues((rho, u, v), xi, params)
    return np.maximum(np.maximum(np.abs(lam1), np.abs(lam2)), np.abs(lam3))


def characteristic_matrix(W, xi, params: ModelParams) -> np.ndarray:
    """``C(U, xi) = xi1*A(U) + xi2*B(U)`` of the quasilinear primitive system."""
    rho, u, v = (float(c) for c in W)
    a = float(rho_dpressure(rho, params.u_ref, params.gamma1))
    b = float(rho_dpressure(rho, params.v_ref, params.gamma2))
    A = np.array([[u, rho, 0.0], [0.0, u - a, 0.0], [0.0, v, -a]])
    B = np.array([[v, 0.0, rho], [0.0, -b, u], [0.0, 0.0, v - b]])
    return xi[0] * A + xi[1] * B


@dataclass
class EigenResult:
    values: tuple
    vectors: np.ndarray | None  # columns r_1, r_2, r_3
    degenerate: bool
    residuals: tuple = ()


def eigenvectors_numeric(W, xi, params: ModelParams, tol: float = 1e-10) -> EigenResult:
    """Right eigenvectors of ``C(U, xi)`` for the closed-form eigenvalues.

    Each vector is the null direction of ``C - lambda_k I`` from an SVD,
    normalized to unit length with its largest-magnitude entry positive.
    A spectrum with eigenvalues closer than ``tol`` is flagged as degenerate
    and no vectors are returned.
    """
    rho = float(W[0])
    if not rho >= params.rho_floor:
        raise InvalidState("eigenvectors undefined at vacuum")
    lams = tuple(float(x) for x in eigenvalues(W, xi, params))
    gaps = [abs(lams[i] - lams[j]) for i, j in ((0, 1), (0, 2), (1, 2))]
    if min(gaps) <= tol:
        return EigenResult(lams, None, True)
    C = characteristic_matrix(W, xi, params)
    vecs = np.empty((3, 3))
    res = []
    for k, lam in enumerate(lams):
        _, _, vt = np.linalg.svd(C - lam * np.eye(3))
        r = vt[-1]
        r = r / np.linalg.norm(r)
        if r[np.argmax(np.abs(r))] < 0:
            r = -r
        vecs[:, k] = r
        res.append(float(np.max(np.abs(C @ r - lam * r))))
    return EigenResult(lams, vecs, False, tuple(res))


def closed_form_eigenvectors(W, params: ModelParams) -> np.ndarray:
    """Literature closed forms for the eigenvectors along ``xi = (1, 0)``.

    Kept for diagnostic comparison only: apart from ``r3`` they do not
    satisfy ``C r = lambda r``. Requires ``v != 0``.
    """
    rho, u, v = W
    dp1 = float(rho_dpressure(rho, params.u_ref, params.gamma1)) / rho
    dp2 = float(rho_dpressure(rho, params.v_ref, params.gamma2)) / rho
    r1 = np.array([-(u + v) / (v * (dp1 + dp2)), u / v, 1.0])
    r2 = np.array([0.0, -1.0, 1.0])
    r3 = np.array([1.0, 0.0, 0.0])
    return np.column_stack([r1, r2, r3])


def riemann_invariants(W, params: ModelParams):
    """``(z1, z2, z3) = (u + v + P1 + P2, u + v, u)``."""
    rho, u, v = W
    z2 = u + v
    return z2 + params.p1(rho) + params.p2(rho), z2, u


def closure_speed(rho, c, ref_speed, gamma):
    """Equilibrium speed ``c - P(rho)`` obtained with a constant desired speed."""
    return c - pressure(rho, ref_speed, gamma)
