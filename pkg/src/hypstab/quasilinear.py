"""Closed-loop solver for 2x2 quasilinear diagonal hyperbolic systems.

The system

    u_t + lam(u, v) u_x = 0,      v_t + mu(u, v) v_x = 0,

with mu <= -c < 0 < c <= lam on the working box, is closed either by
signed-power feedback on both boundary values (u at x = 0, v at x = L) or by
feedback on v alone with u(t, 0) = h(v(t, 0), t) prescribed by a boundary
map.  Solutions are constructed by Picard iteration on the frozen-coefficient
operator: each step tabulates lam/mu over the previous iterate and performs
two linear transport solves.  Convergence is monitored through the sup-norm
gap between iterates; non-convergence is reported, never silently patched.

The module also maintains the ledger of smallness constants that govern the
sufficient conditions for the fixed-point argument, and the extinction
bookkeeping used to verify the finite-time return to equilibrium.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .feedback import FeedbackTrace, PowerFeedback
from .transport import (
    BoundaryTrace,
    Coefficient,
    CompatibilityViolation,
    Field,
    GridSpec,
    Profile,
    solve_linear_transport,
)

__all__ = [
    "QuasilinearError",
    "NoConvergence",
    "CoefficientSignLoss",
    "BoxEvaluationFailure",
    "DiagonalSystem",
    "BoundaryMap",
    "ConstantsLedger",
    "ConditionReport",
    "ClosedLoopSolution",
    "ExtinctionReport",
    "build_ledger",
    "check_two_control",
    "check_one_control",
    "picard_two_control",
    "picard_one_control",
    "verify_extinction",
    "settle_time",
]

BOX_SLACK = 1.01  # iterates may exceed the working box by 1% before failing


class QuasilinearError(Exception):
    """Base class for closed-loop solver failures."""


class NoConvergence(QuasilinearError):
    def __init__(self, iterations: int, last_residual: float):
        self.iterations = iterations
        self.last_residual = last_residual
        super().__init__(
            f"Picard iteration did not converge after {iterations} steps "
            f"(last sup-norm gap {last_residual:.3e})"
        )


class CoefficientSignLoss(QuasilinearError):
    """An iterate left the working box or a speed field lost its sign."""


class BoxEvaluationFailure(QuasilinearError):
    """Speed maps returned non-finite values on the working box."""


@dataclass
class DiagonalSystem:
    """Pair of characteristic speed maps with a uniform sign floor.

    ``lam`` and ``mu`` must be vectorized over (u, v) arrays.  Analytic
    partial derivatives may be supplied; otherwise central differences on
    the sampling grid are used when bounding the speed gradients.
    """

    lam: Callable
    mu: Callable
    floor: float
    dlam_du: Callable | None = None
    dlam_dv: Callable | None = None
    dmu_du: Callable | None = None
    dmu_dv: Callable | None = None

    def speed_bounds(self, u_amp: float, v_amp: float, samples: int = 200) -> tuple[float, float]:
        """Sup of |lam|, |mu| and of the four partials over the working box."""
        us = np.linspace(-u_amp, u_amp, samples) if u_amp > 0 else np.zeros(1)
        vs = np.linspace(-v_amp, v_amp, samples) if v_amp > 0 else np.zeros(1)
        U, V = np.meshgrid(us, vs, indexing="ij")
        lam_vals = np.asarray(self.lam(U, V), float)
        mu_vals = np.asarray(self.mu(U, V), float)
        if not (np.isfinite(lam_vals).all() and np.isfinite(mu_vals).all()):
            raise BoxEvaluationFailure("speed maps are not finite on the working box")
        m1 = float(max(np.abs(lam_vals).max(), np.abs(mu_vals).max()))

        grads = []
        analytic = (self.dlam_du, self.dlam_dv, self.dmu_du, self.dmu_dv)
        if all(g is not None for g in analytic):
            for g in analytic:
                grads.append(np.abs(np.asarray(g(U, V), float)).max())
        else:
            h = max(u_amp, v_amp, 1.0) * 1e-6
            for f in (self.lam, self.mu):
                grads.append(np.abs(f(U + h, V) - f(U - h, V)).max() / (2 * h))
                grads.append(np.abs(f(U, V + h) - f(U, V - h)).max() / (2 * h))
        m2 = float(max(grads))
        return m1, m2

    def sign_margin(self, u_amp: float, v_amp: float, samples: int = 200) -> float:
        """min(lam) - floor and -floor - max(mu) over the box, the smaller one."""
        us = np.linspace(-u_amp, u_amp, samples) if u_amp > 0 else np.zeros(1)
        vs = np.linspace(-v_amp, v_amp, samples) if v_amp > 0 else np.zeros(1)
        U, V = np.meshgrid(us, vs, indexing="ij")
        lam_min = float(np.asarray(self.lam(U, V), float).min())
        mu_max = float(np.asarray(self.mu(U, V), float).max())
        return min(lam_min - self.floor, -self.floor - mu_max)


@dataclass
class BoundaryMap:
    """Left boundary closure u(t, 0) = h(v(t, 0), t).

    ``dv_sup`` and ``dt_sup`` bound the partial derivatives of h over the
    working strip; ``settle_time`` is the instant after which h(0, t) = 0.
    """

    func: Callable
    dv_sup: float = 0.0
    dt_sup: float = 0.0
    settle_time: float = 0.0
    sup: float | None = None  # sup |h| over the working strip, if known

    def __call__(self, v, t):
        return self.func(v, t)

    @staticmethod
    def reflection() -> "BoundaryMap":
        """Pure reflection u(t, 0) = v(t, 0)."""
        return BoundaryMap(func=lambda v, t: v, dv_sup=1.0, dt_sup=0.0, settle_time=0.0)

    def sup_on(self, v_amp: float, t_max: float, samples: int = 200) -> float:
        vs = np.linspace(-v_amp, v_amp, samples)
        ts = np.linspace(0.0, max(t_max, self.settle_time) + 1.0, samples)
        worst = 0.0
        for t in ts:
            worst = max(worst, float(np.abs(np.asarray(self.func(vs, t), float)).max()))
        return worst


@dataclass
class ConstantsLedger:
    """All named smallness constants of the closed-loop construction."""

    amp: float  # sup bound on the initial data
    slope: float  # sup bound on the initial data derivative
    u_amp: float  # sup bound for u (equals amp with two controls)
    horizon: float  # conservative extinction deadline T
    speed_sup: float  # sup of |lam|, |mu| over the box
    speed_grad_sup: float  # sup of the four speed partials over the box
    lip_budget: float  # Lipschitz radius of the fixed-point domain
    lip_transported: float  # Lipschitz bound after one transport sweep
    lip_transported_map: float  # same, with the boundary-map left data
    gain: float
    exponent: float
    floor: float
    map_dv: float = 0.0
    map_dt: float = 0.0
    settle_time: float = 0.0
    two_control: bool = True

    @property
    def trace_extinction(self) -> float:
        """Worst-case extinction time of a feedback trace started inside the box."""
        g = self.exponent
        return self.amp ** (1.0 - g) / ((1.0 - g) * self.gain)


@dataclass
class ConditionReport:
    holds: bool
    margins: tuple[float, ...]

    def __bool__(self):
        return self.holds


def build_ledger(
    system: DiagonalSystem,
    amp: float,
    slope: float,
    fb: PowerFeedback,
    bmap: BoundaryMap | None = None,
    box_samples: int = 200,
) -> ConstantsLedger:
    """Populate the constants ledger for given data bounds and feedback.

    With a boundary map the u-range widens to max(amp, sup|h|), the deadline
    stretches by the map settle time, and the Lipschitz budget absorbs the
    data slope.  All box suprema are taken by dense sampling.
    """
    k, g, c = fb.gain, fb.exponent, system.floor
    t_star = amp ** (1.0 - g) / ((1.0 - g) * k)
    if bmap is None:
        u_amp = amp
        horizon = 1.0 / c + t_star
    else:
        horizon_guess = 1.0 / c + max(bmap.settle_time, 1.0 / c + t_star)
        u_amp = max(amp, bmap.sup if bmap.sup is not None else bmap.sup_on(amp, horizon_guess))
        horizon = horizon_guess
    m1, m2 = system.speed_bounds(u_amp, amp, box_samples)

    if m2 == 0.0:
        # limit convention: 2*T*M2 * lip_budget -> 1 as the gradient sup
        # vanishes, with the budget itself unbounded
        lip_budget = math.inf
        exp_arg = 1.0
    elif bmap is None:
        lip_budget = 1.0 / (2.0 * horizon * m2)
        exp_arg = 1.0
    else:
        lip_budget = max(1.0 / (2.0 * horizon * m2), slope)
        exp_arg = 2.0 * horizon * m2 * lip_budget
    growth = max(1.0, m1) * math.exp(exp_arg)
    lip_transported = max(k * amp**g / c, slope) * growth
    d1 = bmap.dv_sup if bmap is not None else 0.0
    d2 = bmap.dt_sup if bmap is not None else 0.0
    lip_transported_map = max((d1 * lip_transported + d2) / c, slope) * growth

    return ConstantsLedger(
        amp=amp,
        slope=slope,
        u_amp=u_amp,
        horizon=horizon,
        speed_sup=m1,
        speed_grad_sup=m2,
        lip_budget=lip_budget,
        lip_transported=lip_transported,
        lip_transported_map=lip_transported_map,
        gain=k,
        exponent=g,
        floor=c,
        map_dv=d1,
        map_dt=d2,
        settle_time=bmap.settle_time if bmap is not None else 0.0,
        two_control=bmap is None,
    )


def check_two_control(ledger: ConstantsLedger) -> ConditionReport:
    """Smallness condition for the two-control fixed point.

    Left side: T * M2 * max(1, M1) * max(K C1^g / c, C2); it must not exceed
    1/(2e).  The reported margin is the left side scaled by 2e, so margins
    at most one pass.
    """
    left = (
        ledger.horizon
        * ledger.speed_grad_sup
        * max(1.0, ledger.speed_sup)
        * max(ledger.gain * ledger.amp**ledger.exponent / ledger.floor, ledger.slope)
    )
    margin = left * 2.0 * math.e
    return ConditionReport(holds=margin <= 1.0, margins=(margin,))


def check_one_control(ledger: ConstantsLedger) -> ConditionReport:
    """Both one-control smallness conditions, reported as ratios to the budget.

    The transported Lipschitz bound and its boundary-map counterpart must
    each stay within the Lipschitz budget; margins are the two ratios.
    """
    if math.isinf(ledger.lip_budget):
        return ConditionReport(holds=True, margins=(0.0, 0.0))
    m1 = ledger.lip_transported / ledger.lip_budget
    m2 = ledger.lip_transported_map / ledger.lip_budget
    return ConditionReport(holds=(m1 <= 1.0 and m2 <= 1.0), margins=(m1, m2))


@dataclass
class ClosedLoopSolution:
    u: Field
    v: Field
    iterations: int
    residual_history: list[float]
    ledger: ConstantsLedger
    converged: bool = True
    left_trace: np.ndarray | None = field(default=None, repr=False)
    right_trace: np.ndarray | None = field(default=None, repr=False)

    def sup_at(self, t: float) -> tuple[float, float]:
        return (
            float(np.abs(self.u.row_at(t)).max()),
            float(np.abs(self.v.row_at(t)).max()),
        )


# ---------------------------------------------------------------------------
# Picard iteration on the frozen-coefficient operator
# ---------------------------------------------------------------------------

def _eval_map(bmap: BoundaryMap, v_arr: np.ndarray, t_arr: np.ndarray) -> np.ndarray:
    """Evaluate a boundary map along paired (v, t) samples, vectorized if possible."""
    try:
        out = np.asarray(bmap(v_arr, t_arr), float)
        if out.shape == v_arr.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([float(np.asarray(bmap(float(v), float(t)))) for v, t in zip(v_arr, t_arr)])


def _tabulated_speeds(system: DiagonalSystem, u_vals, v_vals, grid: GridSpec):
    lam_tab = np.asarray(system.lam(u_vals, v_vals), float)
    mu_tab = np.asarray(system.mu(u_vals, v_vals), float)
    if lam_tab.min() <= 0.0 or mu_tab.max() >= 0.0:
        raise CoefficientSignLoss(
            "a speed field changed sign on the grid; the iterate left the "
            "admissible regime"
        )
    lam_c = Coefficient.from_table(lam_tab, grid.t_nodes, grid.x_nodes)
    mu_c = Coefficient.from_table(mu_tab, grid.t_nodes, grid.x_nodes)
    mu_c.direction = -1
    return lam_c, mu_c


def _check_box(u_vals, v_vals, u_amp: float, v_amp: float):
    worst_u = float(np.abs(u_vals).max())
    worst_v = float(np.abs(v_vals).max())
    if worst_u > u_amp * BOX_SLACK + 1e-15 or worst_v > v_amp * BOX_SLACK + 1e-15:
        raise CoefficientSignLoss(
            f"iterate left the working box: |u| up to {worst_u:.3e} (allowed "
            f"{u_amp:.3e}), |v| up to {worst_v:.3e} (allowed {v_amp:.3e})"
        )


def picard_two_control(
    system: DiagonalSystem,
    u0: Profile,
    v0: Profile,
    fb: PowerFeedback,
    grid: GridSpec,
    tol: float = 1e-10,
    max_iter: int = 60,
    ledger: ConstantsLedger | None = None,
    initial_guess="data",
) -> ClosedLoopSolution:
    """Closed loop with signed-power feedback on both boundary values.

    Each Picard step freezes lam/mu on the previous iterate and solves the
    two decoupled transport problems with the closed-form boundary traces.
    The iteration starts from the time-constant extension of the data, from
    zero (``initial_guess="zero"``), or from a supplied pair of field
    arrays, and stops once the sup-norm gap drops below ``tol``.
    """
    if ledger is None:
        ledger = build_ledger(system, max(u0.sup, v0.sup), max(u0.lip, v0.lip), fb)
    if not check_two_control(ledger):
        warnings.warn(
            "two-control smallness condition fails; the iteration may still "
            "converge but no contraction certificate applies",
            stacklevel=2,
        )
    left = FeedbackTrace(float(np.asarray(u0(np.array([0.0])))[0]), fb)
    right = FeedbackTrace(float(np.asarray(v0(np.array([grid.length])))[0]), fb)

    if isinstance(initial_guess, tuple):
        u_vals = np.array(initial_guess[0], float, copy=True)
        v_vals = np.array(initial_guess[1], float, copy=True)
    elif initial_guess == "zero":
        u_vals = np.zeros((grid.nt, grid.nx))
        v_vals = np.zeros((grid.nt, grid.nx))
    else:
        u_vals = np.tile(np.asarray(u0(grid.x_nodes), float), (grid.nt, 1))
        v_vals = np.tile(np.asarray(v0(grid.x_nodes), float), (grid.nt, 1))

    history: list[float] = []
    for iteration in range(1, max_iter + 1):
        _check_box(u_vals, v_vals, ledger.u_amp, ledger.amp)
        lam_c, mu_c = _tabulated_speeds(system, u_vals, v_vals, grid)
        u_field = solve_linear_transport(lam_c, u0, left.as_boundary_trace(), grid)
        v_field = solve_linear_transport(mu_c, v0, right.as_boundary_trace(), grid)
        gap = max(
            float(np.abs(u_field.values - u_vals).max()),
            float(np.abs(v_field.values - v_vals).max()),
        )
        history.append(gap)
        u_vals, v_vals = u_field.values, v_field.values
        if gap < tol:
            return ClosedLoopSolution(
                u=u_field,
                v=v_field,
                iterations=iteration,
                residual_history=history,
                ledger=ledger,
                left_trace=np.asarray(left(grid.t_nodes), float),
                right_trace=np.asarray(right(grid.t_nodes), float),
            )
    raise NoConvergence(max_iter, history[-1])


def picard_one_control(
    system: DiagonalSystem,
    u0: Profile,
    v0: Profile,
    bmap: BoundaryMap,
    fb: PowerFeedback,
    grid: GridSpec,
    tol: float = 1e-10,
    max_iter: int = 60,
    ledger: ConstantsLedger | None = None,
    tol_compat: float = 1e-9,
) -> ClosedLoopSolution:
    """Closed loop with v-feedback at x = L and u(t, 0) = h(v(t, 0), t).

    Within each step v is transported first and the left boundary trace for
    u is rebuilt from the fresh v, so the returned pair satisfies the map
    relation at the boundary to root-finding accuracy.  Condition failures
    warn; compatibility failures raise.
    """
    mismatch = abs(
        float(np.asarray(u0(np.array([0.0])))[0])
        - float(np.asarray(bmap(np.asarray(v0(np.array([0.0])))[0], 0.0)))
    )
    if mismatch > tol_compat:
        raise CompatibilityViolation(
            f"u0(0) and h(v0(0), 0) differ by {mismatch:g}; the closed loop "
            "cannot start from these data"
        )
    if ledger is None:
        ledger = build_ledger(system, max(u0.sup, v0.sup), max(u0.lip, v0.lip), fb, bmap=bmap)
    if not check_one_control(ledger):
        warnings.warn(
            "one-control smallness conditions fail; the iteration may still "
            "converge but no contraction certificate applies",
            stacklevel=2,
        )
    right = FeedbackTrace(float(np.asarray(v0(np.array([grid.length])))[0]), fb)

    u_vals = np.tile(np.asarray(u0(grid.x_nodes), float), (grid.nt, 1))
    v_vals = np.tile(np.asarray(v0(grid.x_nodes), float), (grid.nt, 1))

    history: list[float] = []
    for iteration in range(1, max_iter + 1):
        _check_box(u_vals, v_vals, ledger.u_amp, ledger.amp)
        lam_c, mu_c = _tabulated_speeds(system, u_vals, v_vals, grid)
        v_field = solve_linear_transport(mu_c, v0, right.as_boundary_trace(), grid)
        left_samples = _eval_map(bmap, v_field.values[:, 0], grid.t_nodes)
        left_trace = BoundaryTrace.from_samples(grid.t_nodes, left_samples)
        u_field = solve_linear_transport(lam_c, u0, left_trace, grid, tol_compat=max(tol_compat, 1e-9))
        gap = max(
            float(np.abs(u_field.values - u_vals).max()),
            float(np.abs(v_field.values - v_vals).max()),
        )
        history.append(gap)
        u_vals, v_vals = u_field.values, v_field.values
        if gap < tol:
            return ClosedLoopSolution(
                u=u_field,
                v=v_field,
                iterations=iteration,
                residual_history=history,
                ledger=ledger,
                left_trace=left_samples,
                right_trace=np.asarray(right(grid.t_nodes), float),
            )
    raise NoConvergence(max_iter, history[-1])


# ---------------------------------------------------------------------------
# Extinction verification
# ---------------------------------------------------------------------------

def settle_time(t_nodes: np.ndarray, values: np.ndarray, tol: float) -> float:
    """First time after which |values| stays within tol; inf if it never does."""
    ok = np.abs(values) <= tol
    if not ok[-1]:
        return math.inf
    idx = np.nonzero(~ok)[0]
    if idx.size == 0:
        return float(t_nodes[0])
    return float(t_nodes[idx[-1] + 1])


@dataclass
class ExtinctionReport:
    sup_u: float
    sup_v: float
    boundary_settle_u: float
    boundary_settle_v: float
    interior_settle: float


def verify_extinction(sol: ClosedLoopSolution, t_check: float, tol: float = 1e-12) -> ExtinctionReport:
    """Sup norms at t_check and permanent settle times of traces and fields."""
    su, sv = sol.sup_at(t_check)
    t_nodes = sol.u.t_nodes
    row_sup = np.maximum(
        np.abs(sol.u.values).max(axis=1), np.abs(sol.v.values).max(axis=1)
    )
    return ExtinctionReport(
        sup_u=su,
        sup_v=sv,
        boundary_settle_u=settle_time(t_nodes, sol.u.values[:, 0], tol),
        boundary_settle_v=settle_time(t_nodes, sol.v.values[:, -1], tol),
        interior_settle=settle_time(t_nodes, row_sup, tol),
    )
