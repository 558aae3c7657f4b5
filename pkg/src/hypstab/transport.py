"""Method-of-characteristics solver for the 1-D linear transport equation.

Solves the initial boundary-value problem

    y_t + a(t, x) y_x = 0   on (0, T) x (0, L),

for a continuous speed field a that is Lipschitz in x and uniformly bounded
away from zero (|a| >= c > 0, constant sign).  The solution is reconstructed
from backward characteristics: each space-time node is classified by whether
its characteristic reaches the initial line (it then carries initial data
evaluated at the characteristic foot) or exits through the inflow boundary
(it then carries the boundary trace evaluated at the entrance time).  The
two regions are separated by the corner characteristic emanating from the
inflow corner.

Coefficients with negative sign are handled by the change of variables
x -> L - x, which reduces them to the positive case; callers always work in
physical coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "TransportError",
    "StepTooLarge",
    "NotInJ",
    "CompatibilityViolation",
    "Domain",
    "Coefficient",
    "CharacteristicRecord",
    "BoundaryTrace",
    "Profile",
    "GridSpec",
    "Field",
    "extend_coefficient",
    "integrate_characteristic",
    "entrance_time",
    "entrance_derivatives",
    "characteristic_paths",
    "flow_map",
    "solve_linear_transport",
    "solution_gradient",
    "lipschitz_bound",
]

# Relative bisection tolerance for locating a boundary crossing inside one
# integration step.  A regula-falsi pass plus a Newton polish with the exact
# slope sharpen the bracket far below this, so constant-speed runs resolve
# entrance times to round-off.
CROSSING_RTOL = 1e-6
_BISECT_ITERS = 8


class TransportError(Exception):
    """Base class for transport solver failures."""


class StepTooLarge(TransportError):
    """Integration step too coarse to resolve a boundary crossing."""


class NotInJ(TransportError):
    """Entrance-time derivatives requested outside the boundary-fed region."""


class CompatibilityViolation(TransportError):
    """Boundary trace and initial profile disagree at the inflow corner."""


@dataclass(frozen=True)
class Domain:
    """Space-time box (0, horizon) x (0, length) with a uniform speed floor."""

    horizon: float
    length: float = 1.0
    floor: float = 1.0

    def __post_init__(self):
        if self.horizon <= 0 or self.length <= 0 or self.floor <= 0:
            raise ValueError("horizon, length and floor must all be positive")


@dataclass
class Coefficient:
    """Evaluable speed field with the metadata the solver relies on.

    Attributes:
        func: vectorized map (t, x) -> speed; must accept ndarray x.
        direction: +1 if the field is positive (inflow at x = 0),
            -1 if negative (inflow at x = L).
        sup_norm: uniform bound on |a|.
        lip_x: uniform-in-time Lipschitz constant of x -> a(t, x).
        dx_func: optional evaluable spatial derivative (t, x) -> da/dx.
        feature_scale: smallest spatial feature resolved by func (the cell
            width for tabulated fields, infinite for analytic ones).
    """

    func: Callable
    direction: int = 1
    sup_norm: float = 1.0
    lip_x: float = 0.0
    dx_func: Callable | None = None
    feature_scale: float = math.inf

    def __call__(self, t, x):
        return self.func(t, x)

    @staticmethod
    def constant(value: float) -> "Coefficient":
        mag = abs(float(value))
        if mag == 0.0:
            raise ValueError("a transport speed must be nonzero")
        sign = 1 if value > 0 else -1
        return Coefficient(
            func=lambda t, x, v=float(value): v * np.ones_like(np.asarray(x, float)),
            direction=sign,
            sup_norm=mag,
            lip_x=0.0,
            dx_func=lambda t, x: np.zeros_like(np.asarray(x, float)),
        )

    @staticmethod
    def from_table(values: np.ndarray, t_nodes: np.ndarray, x_nodes: np.ndarray) -> "Coefficient":
        """Bilinear interpolant of a field tabulated on a uniform grid."""
        values = np.asarray(values, float)
        t_nodes = np.asarray(t_nodes, float)
        x_nodes = np.asarray(x_nodes, float)
        nt, nx = values.shape
        if nt != t_nodes.size or nx != x_nodes.size:
            raise ValueError("table shape does not match node arrays")
        dt = t_nodes[1] - t_nodes[0] if nt > 1 else 1.0
        dx = x_nodes[1] - x_nodes[0] if nx > 1 else 1.0

        def eval_table(t, x):
            x = np.asarray(x, float)
            t = np.asarray(t, float)
            if nx == 1:
                return np.full_like(x, values[0, 0])
            pos = np.clip((x - x_nodes[0]) / dx, 0.0, nx - 1.0)
            j = np.minimum(pos.astype(int), nx - 2)
            frac = pos - j
            if nt == 1:
                return values[0, j] * (1.0 - frac) + values[0, j + 1] * frac
            if t.ndim == 0:
                wt = min(max((float(t) - t_nodes[0]) / dt, 0.0), nt - 1.0)
                k = min(int(wt), nt - 2)
                w = wt - k
                row = (1.0 - w) * values[k] + w * values[k + 1]
                return row[j] * (1.0 - frac) + row[j + 1] * frac
            wt = np.clip((t - t_nodes[0]) / dt, 0.0, nt - 1.0)
            k = np.minimum(wt.astype(int), nt - 2)
            w = wt - k
            lo = values[k, j] * (1.0 - frac) + values[k, j + 1] * frac
            hi = values[k + 1, j] * (1.0 - frac) + values[k + 1, j + 1] * frac
            return (1.0 - w) * lo + w * hi

        sup = float(np.abs(values).max())
        lip = 0.0
        if nx > 1:
            lip = float(np.abs(np.diff(values, axis=1)).max() / dx)
        sign = 1 if values.flat[0] > 0 else -1
        return Coefficient(
            func=eval_table,
            direction=sign,
            sup_norm=sup,
            lip_x=lip,
            feature_scale=dx if nx > 1 else math.inf,
        )


@dataclass
class CharacteristicRecord:
    """One backward characteristic through a space-time point.

    ``entrance_class`` is "I" when the characteristic reaches the initial
    line strictly inside the domain, "J" when it exits through the inflow
    boundary at a positive entrance time, and "P" when it coincides with the
    corner characteristic (both entrance time and foot vanish to tolerance).
    ``foot`` is the position on the initial line for classes I/P, and the
    inflow boundary coordinate for class J.
    """

    entrance_time: float
    entrance_class: str
    foot: float
    path: np.ndarray  # (n, 2) samples (s, position), physical coordinates


@dataclass
class BoundaryTrace:
    """Inflow boundary data t -> value with a Lipschitz certificate."""

    func: Callable
    lip: float = 0.0

    def __call__(self, t):
        return self.func(t)

    @staticmethod
    def from_samples(t_nodes: np.ndarray, values: np.ndarray) -> "BoundaryTrace":
        t_nodes = np.asarray(t_nodes, float)
        values = np.asarray(values, float)
        lip = 0.0
        if t_nodes.size > 1:
            lip = float(np.abs(np.diff(values) / np.diff(t_nodes)).max())
        return BoundaryTrace(
            func=lambda t, tn=t_nodes, vv=values: np.interp(t, tn, vv),
            lip=lip,
        )


@dataclass
class Profile:
    """Initial data x -> value with sup/Lipschitz certificates."""

    func: Callable
    sup: float
    lip: float

    def __call__(self, x):
        return self.func(x)

    @staticmethod
    def from_callable(func: Callable, length: float = 1.0, samples: int = 4001) -> "Profile":
        xs = np.linspace(0.0, length, samples)
        vals = np.asarray(func(xs), float)
        sup = float(np.abs(vals).max())
        lip = float(np.abs(np.diff(vals) / np.diff(xs)).max()) if samples > 1 else 0.0
        return Profile(func=func, sup=sup, lip=lip)

    @staticmethod
    def zero() -> "Profile":
        return Profile(func=lambda x: np.zeros_like(np.asarray(x, float)), sup=0.0, lip=0.0)


@dataclass(frozen=True)
class GridSpec:
    """Skeleton of a uniform tensor field grid on [0, horizon] x [0, length]."""

    nt: int
    nx: int
    horizon: float
    length: float = 1.0

    def __post_init__(self):
        if self.nt < 2 or self.nx < 2:
            raise ValueError("need at least two nodes per axis")

    @property
    def t_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.nt)

    @property
    def x_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.nx)

    @property
    def dt(self) -> float:
        return self.horizon / (self.nt - 1)

    @property
    def dx(self) -> float:
        return self.length / (self.nx - 1)


@dataclass
class Field:
    """Discrete space-time field y(t_k, x_j) on a uniform tensor grid."""

    values: np.ndarray
    t_nodes: np.ndarray
    x_nodes: np.ndarray
    entrance: np.ndarray | None = field(default=None, repr=False)
    foot: np.ndarray | None = field(default=None, repr=False)
    entrance_class: np.ndarray | None = field(default=None, repr=False)  # 0=I, 1=J, 2=P

    def sup(self) -> float:
        return float(np.abs(self.values).max())

    def row_at(self, t: float) -> np.ndarray:
        """Linear-in-time interpolation of the field at time t."""
        tn = self.t_nodes
        if t <= tn[0]:
            return self.values[0].copy()
        if t >= tn[-1]:
            return self.values[-1].copy()
        k = int(np.searchsorted(tn, t) - 1)
        w = (t - tn[k]) / (tn[k + 1] - tn[k])
        return (1.0 - w) * self.values[k] + w * self.values[k + 1]

    def discrete_lipschitz(self) -> float:
        """Largest adjacent-node difference quotient in either direction."""
        v = self.values
        dt = self.t_nodes[1] - self.t_nodes[0]
        dx = self.x_nodes[1] - self.x_nodes[0]
        lip_t = np.abs(np.diff(v, axis=0)).max() / dt
        lip_x = np.abs(np.diff(v, axis=1)).max() / dx
        return float(max(lip_t, lip_x))


# ---------------------------------------------------------------------------
# Extension of the coefficient to the whole plane
# ---------------------------------------------------------------------------

def _fold(x, length: float):
    """Even reflection about x = length, then 2*length periodicity."""
    p = np.mod(x, 2.0 * length)
    return np.where(p > length, 2.0 * length - p, p)


def extend_coefficient(a: Coefficient, domain: Domain) -> Coefficient:
    """Extend a speed field to all of R^2.

    Space is extended by even reflection about x = length followed by
    2*length-periodic repetition; time is extended by constants.  The
    extension keeps the sup norm, the Lipschitz-in-x constant and the
    uniform lower bound of the original field.
    """
    L = domain.length
    T = domain.horizon
    base = a.func

    def extended(t, x):
        tc = np.clip(np.asarray(t, float), 0.0, T)
        return base(tc if tc.ndim else float(tc), _fold(np.asarray(x, float), L))

    dx_ext = None
    if a.dx_func is not None:
        base_dx = a.dx_func

        def dx_ext(t, x):  # noqa: F811 - deliberate closure
            tc = np.clip(np.asarray(t, float), 0.0, T)
            x = np.asarray(x, float)
            p = np.mod(x, 2.0 * L)
            sign = np.where(p > L, -1.0, 1.0)
            return sign * base_dx(tc if tc.ndim else float(tc), _fold(x, L))

    return Coefficient(
        func=extended,
        direction=a.direction,
        sup_norm=a.sup_norm,
        lip_x=a.lip_x,
        dx_func=dx_ext,
        feature_scale=a.feature_scale,
    )


def _reduced(a: Coefficient, domain: Domain) -> Coefficient:
    """Map a negative-direction coefficient to the positive frame x -> L - x."""
    if a.direction > 0:
        return a
    L = domain.length
    base = a.func
    red = Coefficient(
        func=lambda t, x: -base(t, L - np.asarray(x, float)),
        direction=1,
        sup_norm=a.sup_norm,
        lip_x=a.lip_x,
        feature_scale=a.feature_scale,
    )
    if a.dx_func is not None:
        base_dx = a.dx_func
        red.dx_func = lambda t, x: base_dx(t, L - np.asarray(x, float))
    return red


# ---------------------------------------------------------------------------
# Fixed-step RK4 machinery (vectorized over batches of characteristics)
# ---------------------------------------------------------------------------

def _rk4_segment(f, s0: float, x, s1, substeps: int):
    """Integrate dX/ds = f(s, X) from s0 to s1 with fixed-step RK4.

    ``s1`` may be an array matching x, giving each path its own endpoint.
    """
    X = np.array(x, dtype=float, copy=True)
    h = (np.asarray(s1, float) - s0) / substeps
    s = s0 if np.ndim(s1) == 0 else np.full_like(X, s0)
    for _ in range(substeps):
        k1 = f(s, X)
        k2 = f(s + 0.5 * h, X + 0.5 * h * k1)
        k3 = f(s + 0.5 * h, X + 0.5 * h * k2)
        k4 = f(s + h, X + h * k3)
        X = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        s = s + h
    return X


def _hermite_crossing(p_lo, a_lo, p_hi, a_hi, t_lo: float, t_hi: float):
    """Root of the RK4 step's cubic dense output, vectorized.

    The step from (t_hi, p_hi) backward to (t_lo, p_lo) with endpoint slopes
    a_lo, a_hi defines a cubic Hermite interpolant of the characteristic;
    its unique zero (positions are strictly increasing in s) is bracketed by
    bisection and polished by Newton, all without further field evaluations.
    Exact whenever the speed is constant along the step.
    """
    h = t_hi - t_lo

    def val(tau):
        t2 = tau * tau
        t3 = t2 * tau
        return (
            (2.0 * t3 - 3.0 * t2 + 1.0) * p_lo
            + (t3 - 2.0 * t2 + tau) * h * a_lo
            + (-2.0 * t3 + 3.0 * t2) * p_hi
            + (t3 - t2) * h * a_hi
        )

    def slope(tau):
        t2 = tau * tau
        return (
            (6.0 * t2 - 6.0 * tau) * (p_lo - p_hi)
            + (3.0 * t2 - 4.0 * tau + 1.0) * h * a_lo
            + (3.0 * t2 - 2.0 * tau) * h * a_hi
        )

    lo = np.zeros_like(p_lo)
    hi = np.ones_like(p_lo)
    for _ in range(12):
        mid = 0.5 * (lo + hi)
        below = val(mid) < 0.0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    tau = 0.5 * (lo + hi)
    for _ in range(3):
        sl = slope(tau)
        sl = np.where(np.abs(sl) < 1e-300, 1.0, sl)
        tau = np.clip(tau - val(tau) / sl, 0.0, 1.0)
    return t_lo + tau * h


def _bisect_crossing(f, t_hi: float, x_hi, t_lo: float, substeps: int):
    """Locate s* in (t_lo, t_hi) with position(s*) = 0 along backward paths.

    Positions decrease backward in time (speeds are uniformly positive), so
    the crossing is unique.  Bisection narrows the bracket, regula falsi
    collapses it (exactly so for speeds constant along the path), and a
    short Newton polish removes what is left.
    """
    x_hi = np.asarray(x_hi, float)
    lo = np.full(x_hi.shape, t_lo)
    hi = np.full(x_hi.shape, t_hi)
    phi_lo = _rk4_segment(f, t_hi, x_hi, lo, substeps)
    phi_hi = x_hi.copy()
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        phi_mid = _rk4_segment(f, t_hi, x_hi, mid, substeps)
        below = phi_mid < 0.0
        lo = np.where(below, mid, lo)
        phi_lo = np.where(below, phi_mid, phi_lo)
        hi = np.where(below, hi, mid)
        phi_hi = np.where(below, phi_hi, phi_mid)
    denom = phi_hi - phi_lo
    frac = np.where(denom != 0.0, -phi_lo / np.where(denom == 0.0, 1.0, denom), 0.5)
    s = lo + frac * (hi - lo)
    # Newton polish with the exact slope dphi/ds = a(s, phi) >= c; two steps
    # take the bracketed estimate to round-off.
    for _ in range(2):
        phi = _rk4_segment(f, t_hi, x_hi, s, substeps)
        slope = f(s, phi)
        s = np.clip(s - phi / slope, t_lo, t_hi)
    return s


def _guard_step(a: Coefficient, domain: Domain, step: float) -> None:
    # One step must not traverse the whole channel: past that the discrete
    # path may overshoot the far boundary and the crossing bracket is lost.
    reach = step * max(a.sup_norm, domain.floor)
    if reach > domain.length:
        raise StepTooLarge(
            f"step {step:g} lets a characteristic travel {reach:g}, beyond the "
            f"domain length {domain.length:g}; a boundary crossing could be skipped"
        )


# ---------------------------------------------------------------------------
# Single-characteristic queries
# ---------------------------------------------------------------------------

def integrate_characteristic(
    a: Coefficient,
    t: float,
    x: float,
    domain: Domain,
    step: float | None = None,
) -> CharacteristicRecord:
    """Trace the backward characteristic through (t, x).

    The extended coefficient is integrated with fixed-step RK4 from s = t
    toward s = 0; a crossing of the inflow boundary is located by bisection
    inside the offending step.  The record carries the entrance time, the
    classification and the sampled path in physical coordinates.
    """
    if step is None:
        step = domain.horizon / 256.0
    if step <= 0:
        raise ValueError("step must be positive")
    _guard_step(a, domain, step)
    L = domain.length
    negative = a.direction < 0
    ext = extend_coefficient(_reduced(a, domain), domain)
    x_red = L - x if negative else x
    if not (0.0 <= t <= domain.horizon and -1e-12 <= x_red <= L + 1e-12):
        raise ValueError("query point lies outside the domain")

    tol_cross = step * CROSSING_RTOL
    tol_p = 10.0 * tol_cross

    s_vals = [t]
    p_vals = [x_red]
    e = 0.0
    crossed = False
    s = t
    pos = np.array([x_red])
    while s > 1e-15:
        h = min(step, s)
        new = _rk4_segment(ext, s, pos, s - h, 1)
        if new[0] < 0.0:
            e = float(_bisect_crossing(ext, s, pos, s - h, 1)[0])
            crossed = True
            s_vals.append(e)
            p_vals.append(0.0)
            break
        s -= h
        pos = new
        s_vals.append(s)
        p_vals.append(float(pos[0]))

    foot_red = 0.0 if crossed else float(pos[0])
    if crossed and e > tol_p:
        cls = "J"
        foot_red = 0.0
    elif foot_red > tol_p:
        cls = "I"
        e = 0.0
    else:
        cls = "P"
        e = max(e, 0.0)

    path = np.column_stack([np.array(s_vals)[::-1], np.array(p_vals)[::-1]])
    foot = foot_red
    if negative:
        path[:, 1] = L - path[:, 1]
        foot = L - foot_red if cls != "J" else L
    elif cls == "J":
        foot = 0.0
    return CharacteristicRecord(entrance_time=e, entrance_class=cls, foot=foot, path=path)


def entrance_time(
    a: Coefficient, t: float, x: float, domain: Domain, step: float | None = None
) -> tuple[float, str]:
    """Entrance time and region class of the point (t, x)."""
    rec = integrate_characteristic(a, t, x, domain, step)
    return rec.entrance_time, rec.entrance_class


def entrance_derivatives(
    a: Coefficient, t: float, x: float, domain: Domain, step: float | None = None
) -> tuple[float, float]:
    """Closed-form partial derivatives of the entrance time at a J point.

    Both expressions share the factor exp(-I)/a(e, inflow) with I the
    integral of da/dx along the stored characteristic path, computed here by
    the trapezoid rule; the time derivative carries an extra a(t, x).
    """
    if a.dx_func is None:
        raise ValueError("coefficient must carry an evaluable spatial derivative")
    rec = integrate_characteristic(a, t, x, domain, step)
    if rec.entrance_class != "J":
        raise NotInJ(f"({t}, {x}) is in region {rec.entrance_class}")
    L = domain.length
    negative = a.direction < 0
    red = _reduced(a, domain)
    s_path = rec.path[:, 0]
    p_red = L - rec.path[:, 1] if negative else rec.path[:, 1]
    dxa = np.array([float(red.dx_func(float(s), np.array([p]))[0]) for s, p in zip(s_path, p_red)])
    integral = float(np.trapezoid(dxa, s_path))
    a_here = float(red.func(t, np.array([L - x if negative else x]))[0])
    a_entry = float(red.func(rec.entrance_time, np.array([0.0]))[0])
    common = math.exp(-integral) / a_entry
    de_dt = a_here * common
    de_dx = -common
    if negative:
        de_dx = -de_dx
    return de_dt, de_dx


def characteristic_paths(
    a: Coefficient, t: float, xs: np.ndarray, domain: Domain, step: float
) -> tuple[np.ndarray, np.ndarray]:
    """Backward paths from a batch of points sharing the start time t.

    Returns (s_nodes, positions) where positions[k, i] is the location of
    the characteristic through (t, xs[i]) at time s_nodes[k]; positions are
    NaN once a path has left the domain.  Physical coordinates.
    """
    _guard_step(a, domain, step)
    L = domain.length
    negative = a.direction < 0
    ext = extend_coefficient(_reduced(a, domain), domain)
    pos = np.asarray(xs, float).copy()
    if negative:
        pos = L - pos
    n_steps = int(math.ceil(t / step - 1e-12))
    s_nodes = [t]
    rows = [pos.copy()]
    alive = np.isfinite(pos)
    s = t
    for k in range(n_steps):
        s_next = max(t - (k + 1) * step, 0.0)
        nxt = np.full_like(pos, np.nan)
        if alive.any():
            nxt[alive] = _rk4_segment(ext, s, pos[alive], s_next, 1)
        nxt[nxt < 0.0] = np.nan
        alive = np.isfinite(nxt)
        pos = nxt
        s = s_next
        s_nodes.append(s)
        rows.append(pos.copy())
    out = np.array(rows)
    if negative:
        out = L - out
    return np.array(s_nodes), out


def flow_map(
    a: Coefficient, s: float, t: float, x, domain: Domain, step: float | None = None
) -> np.ndarray:
    """Position at time s of the characteristic through (t, x).

    Integrates the extended coefficient so the query is defined for all s in
    [0, horizon]; callers checking domain membership should consult
    :func:`entrance_time` first.
    """
    if step is None:
        step = domain.horizon / 256.0
    L = domain.length
    negative = a.direction < 0
    ext = extend_coefficient(_reduced(a, domain), domain)
    pos = np.atleast_1d(np.asarray(x, float)).copy()
    if negative:
        pos = L - pos
    n = max(int(math.ceil(abs(t - s) / step - 1e-12)), 1)
    out = _rk4_segment(ext, t, pos, s, n)
    if negative:
        out = L - out
    return out


# ---------------------------------------------------------------------------
# Whole-grid classification sweep
# ---------------------------------------------------------------------------

def _classify_grid(ext: Coefficient, t_nodes: np.ndarray, x_nodes: np.ndarray, substeps: int):
    """Entrance times, feet and classes for every node of a tensor grid.

    Works level by level: one backward RK4 step takes all nodes of level m
    to level m-1, crossings are bisected inside the step, and surviving
    positions inherit entrance time / foot from the previous level through
    the semigroup property of the flow (piecewise-linear interpolation with
    the corner characteristic inserted as an explicit knot, so the kink
    between the two regions never smears).
    """
    nt, nx = t_nodes.size, x_nodes.size
    E = np.zeros((nt, nx))
    F = np.zeros((nt, nx))
    F[0] = x_nodes
    corner = np.zeros(nt)  # corner characteristic position per level
    length = x_nodes[-1]
    corner_alive = True

    for m in range(1, nt):
        t_hi = float(t_nodes[m])
        t_lo = float(t_nodes[m - 1])
        p = _rk4_segment(ext, t_hi, x_nodes, t_lo, substeps)
        e_row = np.zeros(nx)
        f_row = np.zeros(nx)
        crossed = p < 0.0
        crossed[0] = True  # the inflow column enters immediately
        if crossed[1:].any():
            idx = np.nonzero(crossed)[0][1:]
            if substeps == 1:
                a_hi = ext(t_hi, x_nodes[idx])
                a_lo = ext(t_lo, p[idx])
                e_row[idx] = _hermite_crossing(p[idx], a_lo, x_nodes[idx], a_hi, t_lo, t_hi)
            else:
                e_row[idx] = _bisect_crossing(ext, t_hi, x_nodes[idx], t_lo, substeps)
        e_row[0] = t_hi
        live = ~crossed
        if live.any():
            pos = np.clip(p[live], 0.0, length)
            xi = corner[m - 1] if corner_alive else math.inf
            prev_e = E[m - 1]
            prev_f = F[m - 1]
            if xi <= 0.0:
                e_live = np.zeros(pos.size)
                f_live = np.interp(pos, x_nodes, prev_f)
            elif math.isinf(xi):
                e_live = np.interp(pos, x_nodes, prev_e)
                f_live = np.zeros(pos.size)
            else:
                j0 = int(np.searchsorted(x_nodes, xi))
                kx_j = np.concatenate([x_nodes[:j0], [xi]])
                kv_j = np.concatenate([prev_e[:j0], [0.0]])
                kx_i = np.concatenate([[xi], x_nodes[j0:]])
                kv_i = np.concatenate([[0.0], prev_f[j0:]])
                on_j = pos < xi
                e_live = np.where(on_j, np.interp(pos, kx_j, kv_j), 0.0)
                f_live = np.where(on_j, 0.0, np.interp(pos, kx_i, kv_i))
            e_row[live] = e_live
            f_row[live] = f_live
        E[m] = e_row
        F[m] = f_row
        if corner_alive:
            nxt = float(_rk4_segment(ext, t_lo, np.array([corner[m - 1]]), t_hi, substeps)[0])
            if nxt > length:
                corner_alive = False
                corner[m] = math.inf
            else:
                corner[m] = nxt
        else:
            corner[m] = math.inf
    return E, F, corner


def solve_linear_transport(
    a: Coefficient,
    y0: Profile | Callable,
    y_bnd: BoundaryTrace | Callable,
    grid: GridSpec,
    substeps: int = 1,
    tol_compat: float = 1e-9,
) -> Field:
    """Solve the transport problem on a uniform tensor grid.

    Every grid node is classified by its backward characteristic and the
    value is read off the boundary trace (at the entrance time) or the
    initial profile (at the foot).  Because the data functions are evaluated
    directly - never interpolated as field values - the discrete solution
    obeys the maximum principle exactly.

    Raises:
        CompatibilityViolation: if trace and profile disagree at the inflow
            corner beyond ``tol_compat``.
        StepTooLarge: if one level step could hide a boundary crossing.
    """
    if not isinstance(y0, Profile):
        y0 = Profile.from_callable(y0, grid.length)
    if not isinstance(y_bnd, BoundaryTrace):
        y_bnd = BoundaryTrace(func=y_bnd)
    L = grid.length
    negative = a.direction < 0
    inflow = L if negative else 0.0
    mismatch = abs(float(np.asarray(y_bnd(0.0)).reshape(-1)[0]) - float(np.asarray(y0(np.array([inflow])))[0]))
    if mismatch > tol_compat:
        raise CompatibilityViolation(
            f"boundary trace and initial profile differ by {mismatch:g} at the inflow corner"
        )
    domain = Domain(horizon=grid.horizon, length=L, floor=max(a.sup_norm * 1e-9, 1e-30))
    _guard_step(a, domain, grid.dt / substeps)
    ext = extend_coefficient(_reduced(a, domain), domain)

    E, F_red, _ = _classify_grid(ext, grid.t_nodes, grid.x_nodes, substeps)
    tol_p = 10.0 * (grid.dt / substeps) * CROSSING_RTOL
    on_j = E > tol_p
    cls = np.where(on_j, 1, np.where((F_red > tol_p), 0, 2)).astype(np.int8)

    foot_phys = L - F_red if negative else F_red
    values = np.where(on_j, np.asarray(y_bnd(E), float), np.asarray(y0(foot_phys), float))

    if negative:
        values = values[:, ::-1].copy()
        E = E[:, ::-1].copy()
        foot_phys = foot_phys[:, ::-1].copy()
        cls = cls[:, ::-1].copy()

    # inflow column and initial row carry their data exactly
    values[0, :] = y0(grid.x_nodes)
    values[:, grid.nx - 1 if negative else 0] = y_bnd(grid.t_nodes)

    return Field(
        values=values,
        t_nodes=grid.t_nodes,
        x_nodes=grid.x_nodes,
        entrance=E,
        foot=foot_phys,
        entrance_class=cls,
    )


def solution_gradient(
    a: Coefficient,
    t: float,
    x: float,
    domain: Domain,
    y0_prime: Callable,
    y_bnd_prime: Callable,
    step: float | None = None,
) -> tuple[float, float]:
    """Closed-form (dy/dt, dy/dx) of the transport solution at one point.

    Uses the derivative expressions of the characteristic representation:
    data derivative at the entrance time (region J) or at the foot (region
    I), damped by exp(-integral of da/dx along the path).  Requires a
    coefficient with an evaluable spatial derivative.
    """
    if a.dx_func is None:
        raise ValueError("coefficient must carry an evaluable spatial derivative")
    rec = integrate_characteristic(a, t, x, domain, step)
    if rec.entrance_class == "J":
        de_dt, de_dx = entrance_derivatives(a, t, x, domain, step)
        g = float(y_bnd_prime(rec.entrance_time))
        return g * de_dt, g * de_dx
    L = domain.length
    negative = a.direction < 0
    red = _reduced(a, domain)
    s_path = rec.path[:, 0]
    p_red = L - rec.path[:, 1] if negative else rec.path[:, 1]
    dxa = np.array([float(red.dx_func(float(s), np.array([p]))[0]) for s, p in zip(s_path, p_red)])
    # d(a_red)/dx_red along the path equals da/dx at the physical position
    damp = math.exp(-float(np.trapezoid(dxa, s_path)))
    g = float(y0_prime(rec.foot))
    a_here = float(np.asarray(a.func(t, np.array([x])), float)[0])
    return -g * a_here * damp, g * damp


def lipschitz_bound(a: Coefficient, trace_lip: float, profile_lip: float, domain: Domain) -> float:
    """A-priori Lipschitz constant of the transport solution.

    max(trace_lip / floor, profile_lip) * max(1, sup|a|) * exp(L * horizon),
    with L the Lipschitz-in-x constant of the coefficient.
    """
    return (
        max(trace_lip / domain.floor, profile_lip)
        * max(1.0, a.sup_norm)
        * math.exp(a.lip_x * domain.horizon)
    )
