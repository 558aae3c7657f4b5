"""Tree-shaped canal networks: topology, node coupling and orchestration.

A network is a tree with N nodes and I = N-1 oriented edges; edge i starts
at node i and ends at the next node toward the root, which is node N.  A
node is simple when exactly one edge touches it and multiple otherwise; at
a multiple node the outgoing flow rate is prescribed by conservation (the
sum of the incoming flow rates), which in diagonal variables becomes an
implicit boundary map for the outgoing edge.

Edges are solved from the leaves toward the root: every edge carries the
v-feedback at its final point; at its initial point it carries either the
u-feedback (controlled simple node), the constant-flow-rate map
(uncontrolled simple node), or the conservation map built from the already
solved upstream traces (multiple node).  Each subtree is therefore fully
decoupled from everything downstream of it.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import saintvenant as sv
from .feedback import PowerFeedback
from .quasilinear import (
    BoundaryMap,
    ClosedLoopSolution,
    ConditionReport,
    ConstantsLedger,
    build_ledger,
    check_one_control,
    check_two_control,
    picard_one_control,
    picard_two_control,
    settle_time,
)
from .transport import Field, GridSpec, Profile

__all__ = [
    "NetworkError",
    "MissingTrace",
    "CouplingResidualExceeded",
    "CanalTree",
    "TreeReport",
    "NetworkScenario",
    "EdgeSolution",
    "NetworkSolution",
    "validate_tree",
    "tree_depth",
    "multiple_node_map",
    "riemann_profiles",
    "simulate_network",
]


class NetworkError(Exception):
    """Base class for network orchestration failures."""


class MissingTrace(NetworkError):
    """A node map was requested before its upstream traces were solved."""


class CouplingResidualExceeded(NetworkError):
    """Flow conservation at a multiple node violated beyond tolerance."""


class EdgeSolverError(NetworkError):
    """A per-edge solve failed; carries the edge index."""

    def __init__(self, edge: int, cause: Exception):
        self.edge = edge
        self.cause = cause
        super().__init__(f"edge {edge}: {cause}")


@dataclass
class CanalTree:
    """Oriented tree with the edge-i-starts-at-node-i numbering convention.

    ``final_node[i]`` is the node at the far end of edge i; the root is the
    node with the largest index and has no outgoing edge.  ``node_kind``
    optionally marks simple initial nodes as "controlled" (active feedback)
    or "flow_rate" (uncontrolled device holding the equilibrium flow rate).
    """

    node_count: int
    final_node: dict[int, int]
    lengths: dict[int, float] = field(default_factory=dict)
    node_kind: dict[int, str] = field(default_factory=dict)

    @property
    def edges(self) -> list[int]:
        return sorted(self.final_node)

    def incidence(self, i: int, n: int) -> int | None:
        """0 if node n is the initial point of edge i, 1 if the final point."""
        if n == i:
            return 0
        if self.final_node.get(i) == n:
            return 1
        return None

    def incident_edges(self, n: int) -> list[int]:
        out = []
        for i in self.edges:
            if i == n or self.final_node[i] == n:
                out.append(i)
        return out

    def children(self, n: int) -> list[int]:
        """Edges whose final point is node n (the incoming edges)."""
        return [i for i in self.edges if self.final_node[i] == n]

    def simple_nodes(self) -> set[int]:
        return {n for n in range(1, self.node_count + 1) if len(self.incident_edges(n)) == 1}

    def multiple_nodes(self) -> set[int]:
        return {n for n in range(1, self.node_count + 1) if len(self.incident_edges(n)) >= 2}

    def kind(self, n: int) -> str:
        return self.node_kind.get(n, "controlled")

    def hops_to_root(self, n: int) -> int:
        root = self.node_count
        hops = 0
        while n != root:
            if n not in self.final_node:
                raise NetworkError(f"node {n} has no path to the root")
            n = self.final_node[n]
            hops += 1
            if hops > self.node_count:
                raise NetworkError("cycle detected while walking to the root")
        return hops


@dataclass
class TreeReport:
    violations: list[str]
    simple_nodes: set[int]
    multiple_nodes: set[int]
    depth: int

    @property
    def valid(self) -> bool:
        return not self.violations


def validate_tree(tree: CanalTree) -> TreeReport:
    """Check every structural invariant and classify the nodes.

    Violations are collected, not raised, so a scenario loader can report
    all problems at once.
    """
    violations: list[str] = []
    n_nodes = tree.node_count
    expected_edges = list(range(1, n_nodes))
    if tree.edges != expected_edges:
        violations.append(
            f"edges must be numbered 1..{n_nodes - 1}, got {tree.edges}"
        )
    for i in tree.edges:
        fn = tree.final_node[i]
        if fn == i:
            violations.append(f"edge {i} loops onto its own initial node")
        if not 1 <= fn <= n_nodes:
            violations.append(f"edge {i} ends at unknown node {fn}")
        if i in tree.lengths and tree.lengths[i] <= 0:
            violations.append(f"edge {i} has nonpositive length")
    if n_nodes - 1 in tree.final_node and tree.final_node[n_nodes - 1] != n_nodes:
        violations.append(f"edge {n_nodes - 1} must end at the root node {n_nodes}")

    # connectivity and acyclicity: N-1 edges + all nodes reachable from the root
    if not violations:
        adj: dict[int, list[int]] = {n: [] for n in range(1, n_nodes + 1)}
        for i in tree.edges:
            adj[i].append(tree.final_node[i])
            adj[tree.final_node[i]].append(i)
        seen = {n_nodes}
        stack = [n_nodes]
        while stack:
            for m in adj[stack.pop()]:
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        if len(seen) != n_nodes:
            violations.append("graph is not connected")

    simple = tree.simple_nodes() if not violations else set()
    multiple = tree.multiple_nodes() if not violations else set()
    if not violations and n_nodes in multiple:
        violations.append("the root must be a simple node")
    for n in multiple:
        if n not in tree.final_node:
            violations.append(f"multiple node {n} has no outgoing edge")
    depth = 0
    if not violations:
        depth = max(tree.hops_to_root(n) for n in simple)
    return TreeReport(violations=violations, simple_nodes=simple, multiple_nodes=multiple, depth=depth)


def tree_depth(tree: CanalTree) -> int:
    """Longest simple-node-to-root path, counted in edges."""
    report = validate_tree(tree)
    if not report.valid:
        raise NetworkError("; ".join(report.violations))
    return report.depth


# ---------------------------------------------------------------------------
# Conservation map at a multiple node
# ---------------------------------------------------------------------------

def multiple_node_map(
    node_params: sv.CanalParams,
    upstream: list[tuple[sv.CanalParams, np.ndarray, np.ndarray, np.ndarray]],
    settle: float | None = None,
    floor: float | None = None,
) -> BoundaryMap:
    """Boundary map of the outgoing edge at a multiple node.

    ``upstream`` lists, per incoming edge, its canal parameters together
    with time samples of (u, v) at the edge's final point.  The map solves
    flow conservation for the outgoing u given the outgoing v and the
    summed upstream flow rates; it vanishes whenever the upstream traces
    and v do.  Slope and time-derivative bounds are sampled numerically;
    the settle time is the latest upstream settle certificate unless given.
    """
    if not upstream:
        raise MissingTrace("a multiple node needs at least one upstream edge")
    t_ref = upstream[0][1]
    for _, t_samples, u_samples, v_samples in upstream:
        if t_samples.shape != u_samples.shape or t_samples.shape != v_samples.shape:
            raise MissingTrace("upstream trace arrays are inconsistent")

    equilibrium_sum = sum(p.flow_rate for p, _, _, _ in upstream)

    def upstream_flow(t):
        total = np.zeros_like(np.asarray(t, float))
        for p, ts, us, vs in upstream:
            ui = np.interp(t, ts, us)
            vi = np.interp(t, ts, vs)
            total = total + sv.node_flux(ui, vi, p)
        return total

    balance_defect = node_params.flow_rate - equilibrium_sum

    def h(v, t):
        target = upstream_flow(t) + balance_defect
        return sv.solve_node_flux(v, target, node_params)

    if settle is None:
        settles = []
        for _, ts, us, vs in upstream:
            settles.append(settle_time(ts, np.abs(us) + np.abs(vs), 1e-12))
        settle = max(settles)
    if not np.isfinite(settle):
        # an upstream edge never certified extinction within its window; the
        # map keeps the measured tail and its time-variation bound degrades
        settle = float(t_ref[-1])

    if floor is None:
        floor = sv.pick_c(node_params)
    radius = 0.5 * min(floor, 2.0 * node_params.celerity)
    vs_box = np.linspace(-radius, radius, 65)
    ts_box = np.linspace(float(t_ref[0]), float(t_ref[-1]), 65)
    sup = 0.0
    d1 = 0.0
    d2 = 0.0
    prev = None
    for t in ts_box:
        hv = np.asarray(h(vs_box, t), float)
        sup = max(sup, float(np.abs(hv).max()))
        d1 = max(d1, float(np.abs(np.diff(hv) / np.diff(vs_box)).max()))
        if prev is not None:
            d2 = max(d2, float(np.abs(hv - prev).max() / (ts_box[1] - ts_box[0])))
        prev = hv
    return BoundaryMap(func=h, dv_sup=d1, dt_sup=d2, settle_time=float(settle), sup=sup)


# ---------------------------------------------------------------------------
# Scenario and solution containers
# ---------------------------------------------------------------------------

@dataclass
class NetworkScenario:
    """Everything needed to simulate one tree of canals."""

    tree: CanalTree
    params: dict[int, sv.CanalParams]
    initial_depth: dict[int, Callable]
    initial_velocity: dict[int, Callable]
    feedback: PowerFeedback
    nx: int = 201
    nt: int = 201
    horizon: float | None = None
    headroom: float = 1.2

    def edge_grid(self, i: int, horizon: float) -> GridSpec:
        return GridSpec(nt=self.nt, nx=self.nx, horizon=horizon, length=self.params[i].length)

    def check_balances(self, tol: float = 1e-9) -> list[str]:
        """Equilibrium flow balance and initial flow balance at multiple nodes."""
        problems = []
        for n in sorted(self.tree.multiple_nodes()):
            children = self.tree.children(n)
            q_out = self.params[n].flow_rate
            q_in = sum(self.params[i].flow_rate for i in children)
            if abs(q_out - q_in) > tol * max(1.0, abs(q_out)):
                problems.append(
                    f"node {n}: equilibrium flow rates unbalanced ({q_out} vs {q_in})"
                )
            q0_out = float(self.initial_depth[n](np.zeros(1))[0]) * float(
                self.initial_velocity[n](np.zeros(1))[0]
            )
            q0_in = 0.0
            for i in children:
                li = self.params[i].length
                q0_in += float(self.initial_depth[i](np.array([li]))[0]) * float(
                    self.initial_velocity[i](np.array([li]))[0]
                )
            if abs(q0_out - q0_in) > tol * max(1.0, abs(q0_out)):
                problems.append(
                    f"node {n}: initial flow rates unbalanced ({q0_out} vs {q0_in})"
                )
        return problems


@dataclass
class EdgeSolution:
    edge: int
    riemann: ClosedLoopSolution
    depth_field: Field
    velocity_field: Field
    ledger: ConstantsLedger
    condition: ConditionReport
    settle: float  # first time |u| + |v| stays below the settle tolerance


@dataclass
class NetworkSolution:
    edges: dict[int, EdgeSolution]
    node_residuals: dict[int, np.ndarray]
    floor: float
    trace_extinction: float  # worst feedback-trace extinction time
    extinction_bound: float  # depth * max length / floor + trace extinction
    measured_extinction: float
    horizon: float

    @property
    def within_bound(self) -> bool:
        return self.measured_extinction <= self.extinction_bound + 1e-12

    def max_node_residual(self) -> float:
        if not self.node_residuals:
            return 0.0
        return max(float(np.abs(r).max()) for r in self.node_residuals.values())


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------

def _edge_order(tree: CanalTree) -> list[list[int]]:
    """Edges grouped into strata solvable in parallel, leaves first.

    An edge may be solved once all edges ending at its initial node are
    done; the stratum index is the height of the edge's subtree.
    """
    height: dict[int, int] = {}

    def edge_height(i: int) -> int:
        if i in height:
            return height[i]
        children = tree.children(i)
        h = 0 if not children else 1 + max(edge_height(j) for j in children)
        height[i] = h
        return h

    for i in tree.edges:
        edge_height(i)
    strata: dict[int, list[int]] = {}
    for i, h in height.items():
        strata.setdefault(h, []).append(i)
    return [sorted(strata[h]) for h in sorted(strata)]


def riemann_profiles(scenario: NetworkScenario, i: int, samples: int = 4001):
    p = scenario.params[i]
    xs = np.linspace(0.0, p.length, samples)
    u_vals, v_vals = sv.riemann_fields(
        np.asarray(scenario.initial_depth[i](xs), float),
        np.asarray(scenario.initial_velocity[i](xs), float),
        p,
    )
    lip_u = float(np.abs(np.diff(u_vals) / np.diff(xs)).max())
    lip_v = float(np.abs(np.diff(v_vals) / np.diff(xs)).max())
    u0 = Profile(func=lambda x, xx=xs, vv=u_vals: np.interp(x, xx, vv), sup=float(np.abs(u_vals).max()), lip=lip_u)
    v0 = Profile(func=lambda x, xx=xs, vv=v_vals: np.interp(x, xx, vv), sup=float(np.abs(v_vals).max()), lip=lip_v)
    return u0, v0


def simulate_network(
    scenario: NetworkScenario,
    tol: float = 1e-10,
    max_iter: int = 60,
    coupling_tol: float = 1e-9,
    settle_tol: float = 1e-9,
) -> NetworkSolution:
    """Solve every edge of the tree, leaves to root, and audit the coupling.

    All edges share one global time horizon (the depth-based extinction
    bound plus headroom unless the scenario pins one).  Within a stratum
    edges are independent; set HYPSTAB_THREADS > 1 to solve them in worker
    threads.  Raises CouplingResidualExceeded if flow conservation at any
    multiple node drifts beyond ``coupling_tol``, and re-raises per-edge
    solver failures tagged with the edge index.
    """
    report = validate_tree(scenario.tree)
    if not report.valid:
        raise NetworkError("; ".join(report.violations))
    problems = scenario.check_balances()
    if problems:
        raise NetworkError("; ".join(problems))

    tree = scenario.tree
    all_params = [scenario.params[i] for i in tree.edges]
    floor = sv.pick_c(all_params)
    g = scenario.feedback.exponent
    k = scenario.feedback.gain

    riemann_data = {i: riemann_profiles(scenario, i) for i in tree.edges}
    amp = max(max(u0.sup, v0.sup) for u0, v0 in riemann_data.values())
    t_star = amp ** (1.0 - g) / ((1.0 - g) * k) if amp > 0 else 0.0
    max_len = max(p.length for p in all_params)
    bound = report.depth * max_len / floor + t_star
    horizon = scenario.horizon if scenario.horizon is not None else bound * scenario.headroom
    if horizon < bound:
        horizon = bound  # never report extinction on a grid that cannot see it

    solutions: dict[int, EdgeSolution] = {}
    traces: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def solve_edge(i: int) -> EdgeSolution:
        p = scenario.params[i]
        u0, v0 = riemann_data[i]
        system = sv.diagonal_system(p, floor)
        grid = scenario.edge_grid(i, horizon)
        edge_amp = max(u0.sup, v0.sup)
        edge_slope = max(u0.lip, v0.lip)
        children = tree.children(i)
        try:
            if not children and tree.kind(i) == "controlled":
                ledger = build_ledger(system, edge_amp, edge_slope, scenario.feedback)
                condition = check_two_control(ledger)
                sol = picard_two_control(
                    system, u0, v0, scenario.feedback, grid, tol=tol, max_iter=max_iter, ledger=ledger
                )
            else:
                if children:
                    upstream = []
                    for jj in children:
                        if jj not in traces:
                            raise MissingTrace(f"edge {jj} not solved before edge {i}")
                        upstream.append((scenario.params[jj],) + traces[jj])
                    bmap = multiple_node_map(p, upstream, floor=floor)
                else:
                    bmap = sv.simple_node_map(p, floor)
                ledger = build_ledger(system, edge_amp, edge_slope, scenario.feedback, bmap=bmap)
                condition = check_one_control(ledger)
                sol = picard_one_control(
                    system, u0, v0, bmap, scenario.feedback, grid, tol=tol, max_iter=max_iter, ledger=ledger
                )
        except MissingTrace:
            raise
        except Exception as exc:
            raise EdgeSolverError(i, exc) from exc
        depth_vals, vel_vals = sv.physical_fields(sol.u.values, sol.v.values, p)
        dfield = Field(values=depth_vals, t_nodes=sol.u.t_nodes, x_nodes=sol.u.x_nodes)
        vfield = Field(values=vel_vals, t_nodes=sol.u.t_nodes, x_nodes=sol.u.x_nodes)
        row_sup = np.abs(sol.u.values).max(axis=1) + np.abs(sol.v.values).max(axis=1)
        edge_settle = settle_time(sol.u.t_nodes, row_sup, settle_tol)
        return EdgeSolution(
            edge=i,
            riemann=sol,
            depth_field=dfield,
            velocity_field=vfield,
            ledger=ledger,
            condition=condition,
            settle=edge_settle,
        )

    workers = max(int(os.environ.get("HYPSTAB_THREADS", "1")), 1)
    for stratum in _edge_order(tree):
        if workers > 1 and len(stratum) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(solve_edge, stratum))
        else:
            results = [solve_edge(i) for i in stratum]
        for edge_sol in results:
            i = edge_sol.edge
            solutions[i] = edge_sol
            sol = edge_sol.riemann
            traces[i] = (
                sol.u.t_nodes,
                sol.u.values[:, -1].copy(),
                sol.v.values[:, -1].copy(),
            )

    node_residuals: dict[int, np.ndarray] = {}
    for n in sorted(tree.multiple_nodes()):
        out_edge = n
        q_out = solutions[out_edge].depth_field.values[:, 0] * solutions[out_edge].velocity_field.values[:, 0]
        q_in = np.zeros_like(q_out)
        for i in tree.children(n):
            q_in = q_in + solutions[i].depth_field.values[:, -1] * solutions[i].velocity_field.values[:, -1]
        node_residuals[n] = q_out - q_in
        worst = float(np.abs(node_residuals[n]).max())
        if worst > coupling_tol:
            raise CouplingResidualExceeded(
                f"node {n}: flow conservation residual {worst:.3e} exceeds {coupling_tol:.1e}"
            )

    measured = max(sol.settle for sol in solutions.values())
    return NetworkSolution(
        edges=solutions,
        node_residuals=node_residuals,
        floor=floor,
        trace_extinction=t_star,
        extinction_bound=bound,
        measured_extinction=measured,
        horizon=horizon,
    )
