"""First-order upwind finite-volume schemes used purely for cross-validation.

A deliberately different discretization family from the characteristics
pipeline: explicit time marching with one-sided differences oriented by the
sign of the local speed, inflow values injected from the same boundary
closures.  Agreement between the two solvers is therefore evidence, not a
tautology.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .quasilinear import BoundaryMap, DiagonalSystem
from .transport import BoundaryTrace, Coefficient, Field, Profile

__all__ = [
    "OracleError",
    "CFLViolation",
    "BoxExit",
    "UpwindGrid",
    "upwind_linear",
    "upwind_closed_loop",
    "field_distance",
]

CFL_LIMIT = 0.9


class OracleError(Exception):
    pass


class CFLViolation(OracleError):
    pass


class BoxExit(OracleError):
    """The explicit scheme produced values outside the declared box."""


@dataclass(frozen=True)
class UpwindGrid:
    """Spatial resolution and time step of the explicit scheme."""

    n_cells: int
    dt: float
    length: float = 1.0

    @property
    def dx(self) -> float:
        return self.length / self.n_cells

    @property
    def x_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.n_cells + 1)

    def cfl(self, max_speed: float) -> float:
        return max_speed * self.dt / self.dx

    @staticmethod
    def from_cfl(n_cells: int, max_speed: float, length: float = 1.0, cfl: float = 0.45) -> "UpwindGrid":
        dx = length / n_cells
        return UpwindGrid(n_cells=n_cells, dt=cfl * dx / max_speed, length=length)


def _check_cfl(grid: UpwindGrid, max_speed: float):
    number = grid.cfl(max_speed)
    if number > CFL_LIMIT:
        raise CFLViolation(
            f"CFL number {number:.3f} exceeds the stability limit {CFL_LIMIT}"
        )


def upwind_linear(
    a: Coefficient,
    y0: Profile | Callable,
    y_bnd: BoundaryTrace | Callable,
    grid: UpwindGrid,
    sample_times: np.ndarray,
) -> Field:
    """Explicit upwind solution of y_t + a y_x = 0, sampled at given times.

    The inflow node takes the boundary trace directly (the ghost-cell value
    for a first-order scheme); the outflow side needs no condition.
    """
    y0f = y0.func if isinstance(y0, Profile) else y0
    ybf = y_bnd.func if isinstance(y_bnd, BoundaryTrace) else y_bnd
    sample_times = np.asarray(sample_times, float)
    _check_cfl(grid, a.sup_norm)
    xs = grid.x_nodes
    dx = grid.dx
    positive = a.direction > 0
    rows = [np.asarray(y0f(xs), float).copy()]
    y = rows[0].copy()
    t = float(sample_times[0])
    for k in range(sample_times.size - 1):
        span = float(sample_times[k + 1] - sample_times[k])
        n_sub = max(int(math.ceil(span / grid.dt - 1e-12)), 1)
        h = span / n_sub
        for _ in range(n_sub):
            speeds = np.asarray(a.func(t, xs), float)
            if positive:
                y[1:] = y[1:] - h / dx * speeds[1:] * (y[1:] - y[:-1])
                y[0] = ybf(t + h)
            else:
                y[:-1] = y[:-1] - h / dx * speeds[:-1] * (y[1:] - y[:-1])
                y[-1] = ybf(t + h)
            t += h
        t = float(sample_times[k + 1])
        rows.append(y.copy())
    return Field(values=np.array(rows), t_nodes=sample_times, x_nodes=xs)


def upwind_closed_loop(
    system: DiagonalSystem,
    u0: Profile | Callable,
    v0: Profile | Callable,
    fb_left,
    fb_right,
    grid: UpwindGrid,
    sample_times: np.ndarray,
    left_map: BoundaryMap | None = None,
    box: float | None = None,
) -> tuple[Field, Field]:
    """Coupled explicit upwind march of the closed-loop diagonal system.

    Speeds are frozen at the current time level.  ``fb_left``/``fb_right``
    are the same closed-form feedback traces used by the characteristics
    solver; passing ``left_map`` switches the left boundary to
    u = h(v(t, 0), t) with v taken from the freshly updated level.
    """
    u0f = u0.func if isinstance(u0, Profile) else u0
    v0f = v0.func if isinstance(v0, Profile) else v0
    sample_times = np.asarray(sample_times, float)
    xs = grid.x_nodes
    dx = grid.dx
    u = np.asarray(u0f(xs), float).copy()
    v = np.asarray(v0f(xs), float).copy()
    rows_u = [u.copy()]
    rows_v = [v.copy()]
    t = float(sample_times[0])
    for k in range(sample_times.size - 1):
        span = float(sample_times[k + 1] - sample_times[k])
        n_sub = max(int(math.ceil(span / grid.dt - 1e-12)), 1)
        h = span / n_sub
        for _ in range(n_sub):
            lam = np.asarray(system.lam(u, v), float)
            mu = np.asarray(system.mu(u, v), float)
            worst = max(float(np.abs(lam).max()), float(np.abs(mu).max()))
            if worst * h / dx > CFL_LIMIT:
                raise CFLViolation(
                    f"measured CFL {worst * h / dx:.3f} exceeds {CFL_LIMIT}"
                )
            un = u.copy()
            vn = v.copy()
            un[1:] = u[1:] - h / dx * lam[1:] * (u[1:] - u[:-1])
            vn[:-1] = v[:-1] - h / dx * mu[:-1] * (v[1:] - v[:-1])
            t += h
            vn[-1] = fb_right(t)
            if left_map is not None:
                un[0] = float(np.asarray(left_map(vn[0], t)))
            else:
                un[0] = fb_left(t)
            u, v = un, vn
            if box is not None and max(np.abs(u).max(), np.abs(v).max()) > box:
                raise BoxExit(f"iterate left the declared box of radius {box}")
        t = float(sample_times[k + 1])
        rows_u.append(u.copy())
        rows_v.append(v.copy())
    return (
        Field(values=np.array(rows_u), t_nodes=sample_times, x_nodes=xs),
        Field(values=np.array(rows_v), t_nodes=sample_times, x_nodes=xs),
    )


def field_distance(f1: Field, f2: Field) -> tuple[float, float]:
    """(L1-in-x maximized over time, sup) distance between matching grids."""
    if f1.values.shape != f2.values.shape:
        raise ValueError("fields must share their grid")
    diff = np.abs(f1.values - f2.values)
    dx = f1.x_nodes[1] - f1.x_nodes[0]
    l1 = float((diff.sum(axis=1) * dx).max())
    return l1, float(diff.max())
