"""Saint-Venant (shallow water) physics for a single rectangular canal.

Provides the transforms between physical variables (depth H, velocity V)
and the diagonal variables (u, v) measured relative to a subcritical
equilibrium, the characteristic speeds, the uniform speed floor shared by a
collection of canals, and the boundary device formulas that turn feedback
traces into flow-rate prescriptions.  Friction and slope source terms are
neglected throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .quasilinear import BoundaryMap, DiagonalSystem

__all__ = [
    "SaintVenantError",
    "NonpositiveDepth",
    "DepthCollapse",
    "NotSubcritical",
    "NewtonFailure",
    "CanalParams",
    "PhysicalState",
    "RiemannPair",
    "to_riemann",
    "from_riemann",
    "char_speeds",
    "pick_c",
    "diagonal_system",
    "controlled_flow_rate",
    "node_flux",
    "node_flux_du",
    "solve_node_flux",
    "simple_node_map",
]

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50


class SaintVenantError(Exception):
    """Base class for shallow-water physics failures."""


class NonpositiveDepth(SaintVenantError):
    pass


class DepthCollapse(SaintVenantError):
    """Diagonal variables outside the invertible range (depth would vanish)."""


class NotSubcritical(SaintVenantError):
    pass


class NewtonFailure(SaintVenantError):
    """Root finding for a node boundary map failed to converge."""


@dataclass(frozen=True)
class CanalParams:
    """Equilibrium and geometry of one canal.

    The equilibrium must be strictly subcritical: 0 < V* < sqrt(g H*).
    """

    depth: float  # H*
    velocity: float  # V*
    gravity: float = 9.81
    length: float = 1.0

    def __post_init__(self):
        if self.depth <= 0 or self.length <= 0 or self.gravity <= 0:
            raise ValueError("depth, length and gravity must be positive")
        if not 0.0 < self.velocity < math.sqrt(self.gravity * self.depth):
            raise NotSubcritical(
                f"equilibrium (H*={self.depth}, V*={self.velocity}) is not "
                "strictly subcritical"
            )

    @property
    def celerity(self) -> float:
        return math.sqrt(self.gravity * self.depth)

    @property
    def flow_rate(self) -> float:
        return self.depth * self.velocity


@dataclass(frozen=True)
class PhysicalState:
    depth: float
    velocity: float


@dataclass(frozen=True)
class RiemannPair:
    u: float
    v: float


def to_riemann(state: PhysicalState, p: CanalParams) -> RiemannPair:
    """Diagonal variables of a state, measured from the equilibrium."""
    if state.depth <= 0:
        raise NonpositiveDepth(f"depth {state.depth} is not positive")
    root = 2.0 * math.sqrt(p.gravity * state.depth)
    base = 2.0 * p.celerity
    return RiemannPair(
        u=state.velocity + root - (p.velocity + base),
        v=state.velocity - root - (p.velocity - base),
    )


def from_riemann(r: RiemannPair, p: CanalParams) -> PhysicalState:
    """Invert the diagonal variables; fails if the implied depth vanishes."""
    root = math.sqrt(p.depth) + (r.u - r.v) / (4.0 * math.sqrt(p.gravity))
    if root <= 0.0:
        raise DepthCollapse(f"(u, v) = ({r.u}, {r.v}) implies a nonpositive depth")
    return PhysicalState(depth=root * root, velocity=p.velocity + 0.5 * (r.u + r.v))


def riemann_fields(h_vals: np.ndarray, v_vals: np.ndarray, p: CanalParams):
    """Vectorized to_riemann over arrays of depth/velocity values."""
    h_vals = np.asarray(h_vals, float)
    if (h_vals <= 0).any():
        raise NonpositiveDepth("depth field has nonpositive entries")
    root = 2.0 * np.sqrt(p.gravity * h_vals)
    base = 2.0 * p.celerity
    u = v_vals + root - (p.velocity + base)
    v = v_vals - root - (p.velocity - base)
    return u, v


def physical_fields(u_vals: np.ndarray, v_vals: np.ndarray, p: CanalParams):
    """Vectorized from_riemann over arrays of diagonal values."""
    root = math.sqrt(p.depth) + (np.asarray(u_vals, float) - np.asarray(v_vals, float)) / (
        4.0 * math.sqrt(p.gravity)
    )
    if (root <= 0).any():
        raise DepthCollapse("diagonal fields imply a nonpositive depth")
    return root * root, p.velocity + 0.5 * (np.asarray(u_vals) + np.asarray(v_vals))


def char_speeds(r: RiemannPair, p: CanalParams) -> tuple[float, float]:
    """Characteristic speeds in diagonal coordinates."""
    lam = p.velocity + p.celerity + (3.0 * r.u + r.v) / 4.0
    mu = p.velocity - p.celerity + (r.u + 3.0 * r.v) / 4.0
    return lam, mu


def pick_c(params: list[CanalParams] | CanalParams) -> float:
    """Largest uniform speed floor admissible for all canals.

    Half the worst celerity-minus-velocity margin, shaded by 1e-9 so the
    strict inequalities survive round-off.
    """
    if isinstance(params, CanalParams):
        params = [params]
    margins = [p.celerity - p.velocity for p in params]
    worst = min(margins)
    if worst <= 0.0:
        raise NotSubcritical("a canal has no subcritical margin left")
    return 0.5 * worst * (1.0 - 1e-9)


def diagonal_system(p: CanalParams, floor: float | None = None) -> DiagonalSystem:
    """Diagonal-form system of one canal, with analytic speed gradients."""
    if floor is None:
        floor = pick_c(p)
    lam0 = p.velocity + p.celerity
    mu0 = p.velocity - p.celerity
    return DiagonalSystem(
        lam=lambda u, v: lam0 + (3.0 * u + v) / 4.0,
        mu=lambda u, v: mu0 + (u + 3.0 * v) / 4.0,
        floor=floor,
        dlam_du=lambda u, v: np.full_like(np.asarray(u, float), 0.75),
        dlam_dv=lambda u, v: np.full_like(np.asarray(u, float), 0.25),
        dmu_du=lambda u, v: np.full_like(np.asarray(u, float), 0.25),
        dmu_dv=lambda u, v: np.full_like(np.asarray(u, float), 0.75),
    )


def controlled_flow_rate(side: str, depth_measured: float, trace_value: float, p: CanalParams):
    """Flow rate a boundary device must impose to realize a feedback trace.

    On the right end the device tracks the v-trace using the measured depth;
    on the left end it tracks the u-trace.  At equilibrium depth and zero
    trace both formulas return the equilibrium flow rate.
    """
    depth_measured = np.asarray(depth_measured, float)
    if (depth_measured <= 0).any():
        raise NonpositiveDepth("measured depth must be positive")
    root = 2.0 * np.sqrt(p.gravity * depth_measured)
    if side == "right":
        out = depth_measured * (trace_value + root + p.velocity - 2.0 * p.celerity)
    elif side == "left":
        out = depth_measured * (trace_value - root + p.velocity + 2.0 * p.celerity)
    else:
        raise ValueError("side must be 'left' or 'right'")
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Node flux and the uncontrolled simple-node boundary map
# ---------------------------------------------------------------------------

def node_flux(u, v, p: CanalParams):
    """Flow rate H*V expressed in diagonal variables."""
    area = np.sqrt(p.depth) + (np.asarray(u, float) - np.asarray(v, float)) / (4.0 * math.sqrt(p.gravity))
    return area * area * (p.velocity + 0.5 * (np.asarray(u, float) + np.asarray(v, float)))


def node_flux_du(u, v, p: CanalParams):
    """Partial derivative of the node flux with respect to u."""
    g4 = 4.0 * math.sqrt(p.gravity)
    area = np.sqrt(p.depth) + (np.asarray(u, float) - np.asarray(v, float)) / g4
    mean = p.velocity + 0.5 * (np.asarray(u, float) + np.asarray(v, float))
    return area * (2.0 * mean / g4 + 0.5 * area)


def node_flux_dv(u, v, p: CanalParams):
    g4 = 4.0 * math.sqrt(p.gravity)
    area = np.sqrt(p.depth) + (np.asarray(u, float) - np.asarray(v, float)) / g4
    mean = p.velocity + 0.5 * (np.asarray(u, float) + np.asarray(v, float))
    return area * (0.5 * area - 2.0 * mean / g4)


def solve_node_flux(v, target, p: CanalParams):
    """Solve node_flux(u, v) = target for u, vectorized.

    Newton iteration seeded by the implicit-function linearization around
    the equilibrium, with a bracketed bisection fallback for entries that
    fail to converge.  Zero stays zero exactly.
    """
    v = np.asarray(v, float)
    target = np.broadcast_to(np.asarray(target, float), v.shape).astype(float)
    fu0 = float(node_flux_du(0.0, 0.0, p))
    fv0 = float(node_flux_dv(0.0, 0.0, p))
    trivial = (v == 0.0) & (target == p.flow_rate)
    u = (-fv0 * v + (target - p.flow_rate)) / fu0
    for _ in range(NEWTON_MAX_ITER):
        res = node_flux(u, v, p) - target
        if np.abs(res).max() <= NEWTON_TOL:
            break
        slope = node_flux_du(u, v, p)
        slope = np.where(np.abs(slope) < 1e-14, 1e-14, slope)
        u = u - res / slope
    res = np.abs(node_flux(u, v, p) - target)
    bad = res > NEWTON_TOL
    if bad.any():
        flat_u = u.reshape(-1)
        flat_v = v.reshape(-1)
        flat_t = target.reshape(-1)
        for i in np.nonzero(bad.reshape(-1))[0]:
            flat_u[i] = _bracketed_node_root(flat_v[i], flat_t[i], p)
        u = flat_u.reshape(u.shape)
    u = np.where(trivial, 0.0, u)
    return float(u) if u.ndim == 0 else u


def _bracketed_node_root(v: float, target: float, p: CanalParams) -> float:
    from scipy.optimize import brentq

    fu0 = float(node_flux_du(0.0, 0.0, p))
    fv0 = float(node_flux_dv(0.0, 0.0, p))
    seed = (-fv0 * v + (target - p.flow_rate)) / fu0
    width = max(4.0 * abs(v), 4.0 * abs(target - p.flow_rate) / fu0, 1e-6)
    for grow in (1.0, 2.0, 4.0, 8.0, 16.0):
        lo, hi = seed - grow * width, seed + grow * width
        try:
            flo = node_flux(lo, v, p) - target
            fhi = node_flux(hi, v, p) - target
        except FloatingPointError:  # pragma: no cover - defensive
            continue
        if flo * fhi <= 0.0:
            return float(brentq(lambda x: float(node_flux(x, v, p) - target), lo, hi, xtol=1e-15))
    raise NewtonFailure(f"no root of the node flux found near v={v}, target={target}")


def simple_node_map(p: CanalParams, floor: float | None = None) -> BoundaryMap:
    """Boundary map of an uncontrolled simple node holding Q(t, 0) = Q*.

    Solving the node flux identity for u yields u = h(v); the map is
    time-independent, vanishes at zero exactly, and its slope bound is
    sampled over the invertible working box.
    """
    if floor is None:
        floor = pick_c(p)

    def h(v, t):
        return solve_node_flux(v, p.flow_rate, p)

    # working box for the slope estimate: stay clear of the depth collapse
    radius = 0.5 * min(floor, 2.0 * p.celerity)
    vs = np.linspace(-radius, radius, 201)
    hs = solve_node_flux(vs, p.flow_rate, p)
    d1 = float(np.abs(np.diff(hs) / np.diff(vs)).max())
    sup = float(np.abs(hs).max())
    return BoundaryMap(func=h, dv_sup=d1, dt_sup=0.0, settle_time=0.0, sup=sup)
