"""Batch front-end: scenario ingestion, condition checks, runs, artifacts.

Scenario files are JSON documents with sections ``system`` (Saint-Venant
gravity, or an affine/tabulated diagonal speed pair), ``tree`` (edge list
with lengths, equilibria and node kinds), ``initial`` (per-edge profile
specs), ``feedback`` (gain/exponent), ``grid`` and ``run``.  Three verbs:

    hypstab verify   SCENARIO            condition ledger and margins
    hypstab simulate SCENARIO --out DIR  fields, traces and report.json
    hypstab compare  SCENARIO --out DIR  characteristics vs upwind table

Exit codes: 0 success, 2 smallness-condition failure, 3 solver
non-convergence, 4 I/O or scenario errors.  HYPSTAB_THREADS caps worker
threads used for independent edges.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import network as nw
from . import oracle as orc
from . import profiles
from . import saintvenant as sv
from .feedback import FeedbackTrace, PowerFeedback
from .quasilinear import (
    BoundaryMap,
    DiagonalSystem,
    NoConvergence,
    build_ledger,
    check_one_control,
    check_two_control,
    picard_one_control,
    picard_two_control,
    settle_time,
)
from .transport import GridSpec, Profile

EXIT_OK = 0
EXIT_CONDITION = 2
EXIT_NO_CONVERGENCE = 3
EXIT_IO = 4


class ScenarioError(Exception):
    """Scenario file cannot be parsed or is structurally invalid."""


# ---------------------------------------------------------------------------
# Scenario loading
# ---------------------------------------------------------------------------

@dataclass
class Scenario:
    raw: dict
    kind: str  # "saint_venant" | "diagonal"
    tree: nw.CanalTree
    feedback: PowerFeedback
    nx: int
    nt: int
    tol: float
    max_iter: int
    horizon: float | None
    coupling_tol: float
    cfl: float = 0.45  # CFL target for the comparison oracle
    # saint-venant lane
    params: dict[int, sv.CanalParams] | None = None
    initial_depth: dict | None = None
    initial_velocity: dict | None = None
    # diagonal lane (single edge)
    system: DiagonalSystem | None = None
    initial_u: Profile | None = None
    initial_v: Profile | None = None
    left_boundary: str = "feedback"  # or "reflection"


def _require(cond: bool, message: str):
    if not cond:
        raise ScenarioError(message)


def _build_diagonal_system(spec: dict) -> DiagonalSystem:
    floor = float(spec.get("c", 1.0))
    if spec["kind"] == "affine_diagonal":
        lam = spec["lambda"]
        mu = spec["mu"]
        l0, lu, lv = float(lam.get("const", 0)), float(lam.get("u", 0)), float(lam.get("v", 0))
        m0, mu_u, mu_v = float(mu.get("const", 0)), float(mu.get("u", 0)), float(mu.get("v", 0))
        return DiagonalSystem(
            lam=lambda u, v: l0 + lu * u + lv * v,
            mu=lambda u, v: m0 + mu_u * u + mu_v * v,
            floor=floor,
            dlam_du=lambda u, v: np.full_like(np.asarray(u, float), lu),
            dlam_dv=lambda u, v: np.full_like(np.asarray(u, float), lv),
            dmu_du=lambda u, v: np.full_like(np.asarray(u, float), mu_u),
            dmu_dv=lambda u, v: np.full_like(np.asarray(u, float), mu_v),
        )
    if spec["kind"] == "tabulated_diagonal":
        u_nodes = np.asarray(spec["u_nodes"], float)
        v_nodes = np.asarray(spec["v_nodes"], float)
        lam_tab = np.asarray(spec["lambda"], float)
        mu_tab = np.asarray(spec["mu"], float)
        _require(lam_tab.shape == (u_nodes.size, v_nodes.size), "lambda table shape mismatch")
        _require(mu_tab.shape == (u_nodes.size, v_nodes.size), "mu table shape mismatch")

        def interp(table):
            def f(u, v):
                u = np.clip(np.asarray(u, float), u_nodes[0], u_nodes[-1])
                v = np.clip(np.asarray(v, float), v_nodes[0], v_nodes[-1])
                iu = np.minimum(np.searchsorted(u_nodes, u, "right") - 1, u_nodes.size - 2)
                iv = np.minimum(np.searchsorted(v_nodes, v, "right") - 1, v_nodes.size - 2)
                iu = np.maximum(iu, 0)
                iv = np.maximum(iv, 0)
                fu = (u - u_nodes[iu]) / (u_nodes[iu + 1] - u_nodes[iu])
                fv = (v - v_nodes[iv]) / (v_nodes[iv + 1] - v_nodes[iv])
                return (
                    table[iu, iv] * (1 - fu) * (1 - fv)
                    + table[iu + 1, iv] * fu * (1 - fv)
                    + table[iu, iv + 1] * (1 - fu) * fv
                    + table[iu + 1, iv + 1] * fu * fv
                )

            return f

        return DiagonalSystem(lam=interp(lam_tab), mu=interp(mu_tab), floor=floor)
    raise ScenarioError(f"unknown system kind {spec['kind']!r}")


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc

    for section in ("system", "tree", "initial", "feedback", "grid"):
        _require(section in raw, f"missing scenario section {section!r}")
    sys_spec = raw["system"]
    _require("kind" in sys_spec, "system.kind is required")

    tree_spec = raw["tree"]
    edges = tree_spec.get("edges", [])
    _require(bool(edges), "tree.edges must be a nonempty list")
    final = {}
    lengths = {}
    kinds = {}
    for e in edges:
        _require("id" in e and "final_node" in e, "each edge needs id and final_node")
        i = int(e["id"])
        final[i] = int(e["final_node"])
        lengths[i] = float(e.get("length", 1.0))
        if "initial_kind" in e:
            kinds[i] = str(e["initial_kind"])
    n_nodes = int(tree_spec.get("nodes", max(max(final), max(final.values()))))
    tree = nw.CanalTree(node_count=n_nodes, final_node=final, lengths=lengths, node_kind=kinds)
    report = nw.validate_tree(tree)
    _require(report.valid, "invalid tree: " + "; ".join(report.violations))

    fb_spec = raw["feedback"]
    feedback = PowerFeedback(gain=float(fb_spec["gain"]), exponent=float(fb_spec["exponent"]))
    grid_spec = raw["grid"]
    nx = int(grid_spec.get("nx", 201))
    nt = int(grid_spec.get("nt", 201))
    cfl = float(grid_spec.get("cfl", 0.45))
    run = raw.get("run", {})
    tol = float(run.get("tol", 1e-10))
    max_iter = int(run.get("max_iter", 60))
    horizon = run.get("horizon")
    horizon = float(horizon) if horizon is not None else None
    coupling_tol = float(run.get("coupling_tol", 1e-9))

    initial = {str(k): v for k, v in raw["initial"].items()}

    if sys_spec["kind"] == "saint_venant":
        g = float(sys_spec.get("g", 9.81))
        params = {}
        depth0 = {}
        vel0 = {}
        for e in edges:
            i = int(e["id"])
            _require("H_star" in e and "V_star" in e, f"edge {i} needs H_star and V_star")
            params[i] = sv.CanalParams(
                depth=float(e["H_star"]),
                velocity=float(e["V_star"]),
                gravity=g,
                length=lengths[i],
            )
            spec_i = initial.get(str(i))
            _require(spec_i is not None, f"edge {i} has no initial section")
            _require("H" in spec_i and "V" in spec_i, f"edge {i} initial needs H and V specs")
            h_pert = profiles.build(spec_i["H"], lengths[i])
            v_pert = profiles.build(spec_i["V"], lengths[i])
            depth0[i] = _offset_profile(h_pert, params[i].depth)
            vel0[i] = _offset_profile(v_pert, params[i].velocity)
        return Scenario(
            raw=raw,
            kind="saint_venant",
            tree=tree,
            feedback=feedback,
            nx=nx,
            nt=nt,
            tol=tol,
            max_iter=max_iter,
            horizon=horizon,
            coupling_tol=coupling_tol,
            cfl=cfl,
            params=params,
            initial_depth=depth0,
            initial_velocity=vel0,
        )

    _require(len(edges) == 1, "diagonal systems support single-edge scenarios only")
    system = _build_diagonal_system(sys_spec)
    spec_1 = initial.get("1")
    _require(spec_1 is not None and "u" in spec_1 and "v" in spec_1, "edge 1 needs u and v profiles")
    length = lengths[1]
    u0 = profiles.build(spec_1["u"], length)
    v0 = profiles.build(spec_1["v"], length)
    left = str(raw.get("boundary", {}).get("left", "feedback"))
    _require(left in ("feedback", "reflection"), "boundary.left must be feedback or reflection")
    return Scenario(
        raw=raw,
        kind="diagonal",
        tree=tree,
        feedback=feedback,
        nx=nx,
        nt=nt,
        tol=tol,
        max_iter=max_iter,
        horizon=horizon,
        coupling_tol=coupling_tol,
        cfl=cfl,
        system=system,
        initial_u=u0,
        initial_v=v0,
        left_boundary=left,
    )


def _offset_profile(pert: Profile, base: float):
    return lambda x, p=pert, b=base: b + p(np.asarray(x, float))


# ---------------------------------------------------------------------------
# Ledger assembly shared by verify/simulate
# ---------------------------------------------------------------------------

def _edge_conditions(scn: Scenario):
    """Per-edge (ledger, condition report, mode) in a deterministic order."""
    out = {}
    if scn.kind == "saint_venant":
        floor = sv.pick_c([scn.params[i] for i in scn.tree.edges])
        net_scn = nw.NetworkScenario(
            tree=scn.tree,
            params=scn.params,
            initial_depth=scn.initial_depth,
            initial_velocity=scn.initial_velocity,
            feedback=scn.feedback,
            nx=scn.nx,
            nt=scn.nt,
            horizon=scn.horizon,
        )
        for i in scn.tree.edges:
            u0, v0 = nw.riemann_profiles(net_scn, i)
            system = sv.diagonal_system(scn.params[i], floor)
            amp = max(u0.sup, v0.sup)
            slope = max(u0.lip, v0.lip)
            children = scn.tree.children(i)
            if not children and scn.tree.kind(i) == "controlled":
                ledger = build_ledger(system, amp, slope, scn.feedback)
                out[i] = (ledger, check_two_control(ledger), "two-control")
            else:
                # upstream traces are unknown before the run; the
                # time-independent constant-flow map stands in for the
                # conservation map when bounding the constants
                bmap = sv.simple_node_map(scn.params[i], floor)
                ledger = build_ledger(system, amp, slope, scn.feedback, bmap=bmap)
                out[i] = (ledger, check_one_control(ledger), "one-control")
        return out
    amp = max(scn.initial_u.sup, scn.initial_v.sup)
    slope = max(scn.initial_u.lip, scn.initial_v.lip)
    if scn.left_boundary == "feedback":
        ledger = build_ledger(scn.system, amp, slope, scn.feedback)
        out[1] = (ledger, check_two_control(ledger), "two-control")
    else:
        ledger = build_ledger(scn.system, amp, slope, scn.feedback, bmap=BoundaryMap.reflection())
        out[1] = (ledger, check_one_control(ledger), "one-control")
    return out


def _ledger_dict(ledger) -> dict:
    return {
        "amp": ledger.amp,
        "slope": ledger.slope,
        "u_amp": ledger.u_amp,
        "horizon": ledger.horizon,
        "speed_sup": ledger.speed_sup,
        "speed_grad_sup": ledger.speed_grad_sup,
        "lip_budget": ledger.lip_budget if math.isfinite(ledger.lip_budget) else "inf",
        "lip_transported": ledger.lip_transported,
        "lip_transported_map": ledger.lip_transported_map,
        "gain": ledger.gain,
        "exponent": ledger.exponent,
        "floor": ledger.floor,
        "map_dv": ledger.map_dv,
        "map_dt": ledger.map_dt,
        "settle_time": ledger.settle_time,
    }


# ---------------------------------------------------------------------------
# Verbs
# ---------------------------------------------------------------------------

def cmd_verify(scn: Scenario, out_stream=None) -> int:
    out_stream = out_stream or sys.stdout
    all_hold = True
    for i, (ledger, report, mode) in sorted(_edge_conditions(scn).items()):
        status = "PASS" if report.holds else "FAIL"
        margins = ", ".join(f"{m:.6g}" for m in report.margins)
        all_hold = all_hold and report.holds
        print(f"edge {i} [{mode}] {status}  margins: {margins}", file=out_stream)
        for key, val in _ledger_dict(ledger).items():
            print(f"    {key:>20s} = {val}", file=out_stream)
    return EXIT_OK if all_hold else EXIT_CONDITION


def _write_field_csv(path: Path, field):
    header = np.concatenate([[np.nan], field.x_nodes])
    body = np.column_stack([field.t_nodes, field.values])
    table = np.vstack([header, body])
    np.savetxt(path, table, delimiter=",", fmt="%.17g")


def read_field_csv(path: str | Path):
    """Inverse of the CSV writer: (t_nodes, x_nodes, values)."""
    table = np.loadtxt(path, delimiter=",")
    return table[1:, 0], table[0, 1:], table[1:, 1:]


def _simulate_diagonal(scn: Scenario):
    amp = max(scn.initial_u.sup, scn.initial_v.sup)
    g = scn.feedback.exponent
    t_star = amp ** (1 - g) / ((1 - g) * scn.feedback.gain) if amp > 0 else 0.0
    c = scn.system.floor
    length = scn.tree.lengths.get(1, 1.0)
    crossings = 1.0 if scn.left_boundary == "feedback" else 2.0
    bound = crossings * length / c + t_star
    horizon = scn.horizon if scn.horizon is not None else bound * 1.2
    grid = GridSpec(nt=scn.nt, nx=scn.nx, horizon=horizon, length=length)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if scn.left_boundary == "feedback":
            sol = picard_two_control(
                scn.system, scn.initial_u, scn.initial_v, scn.feedback, grid,
                tol=scn.tol, max_iter=scn.max_iter,
            )
        else:
            sol = picard_one_control(
                scn.system, scn.initial_u, scn.initial_v, BoundaryMap.reflection(),
                scn.feedback, grid, tol=scn.tol, max_iter=scn.max_iter,
            )
    return sol, bound, horizon


def cmd_simulate(scn: Scenario, out_dir: str | Path, force: bool = False, out_stream=None) -> int:
    out_stream = out_stream or sys.stdout
    conditions = _edge_conditions(scn)
    failed = [i for i, (_, rep, _) in conditions.items() if not rep.holds]
    if failed and not force:
        print(
            f"smallness conditions fail on edges {failed}; rerun with --force to simulate anyway",
            file=out_stream,
        )
        return EXIT_CONDITION

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def fail_cleanup():
        for p in written:
            if p.exists():
                p.unlink()

    report: dict = {"edges": {}, "nodes": {}}
    try:
        if scn.kind == "saint_venant":
            net_scn = nw.NetworkScenario(
                tree=scn.tree,
                params=scn.params,
                initial_depth=scn.initial_depth,
                initial_velocity=scn.initial_velocity,
                feedback=scn.feedback,
                nx=scn.nx,
                nt=scn.nt,
                horizon=scn.horizon,
            )
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                net = nw.simulate_network(
                    net_scn, tol=scn.tol, max_iter=scn.max_iter, coupling_tol=scn.coupling_tol
                )
            trace_cols = {}
            for i, es in sorted(net.edges.items()):
                for name, fld in (
                    ("H", es.depth_field),
                    ("V", es.velocity_field),
                    ("u", es.riemann.u),
                    ("v", es.riemann.v),
                ):
                    p = out_dir / f"edge_{i}_{name}.csv"
                    _write_field_csv(p, fld)
                    written.append(p)
                trace_cols[f"edge_{i}_u_left"] = es.riemann.u.values[:, 0]
                trace_cols[f"edge_{i}_v_right"] = es.riemann.v.values[:, -1]
                report["edges"][str(i)] = {
                    "iterations": es.riemann.iterations,
                    "picard_residuals": es.riemann.residual_history,
                    "settle_time": es.settle if math.isfinite(es.settle) else "inf",
                    "condition_holds": es.condition.holds,
                    "condition_margins": list(es.condition.margins),
                    "ledger": _ledger_dict(es.ledger),
                }
            for n, res in sorted(net.node_residuals.items()):
                report["nodes"][str(n)] = {"max_flow_residual": float(np.abs(res).max())}
            report["floor"] = net.floor
            report["trace_extinction"] = net.trace_extinction
            report["extinction_bound"] = net.extinction_bound
            report["measured_extinction"] = (
                net.measured_extinction if math.isfinite(net.measured_extinction) else "inf"
            )
            report["within_bound"] = bool(net.within_bound)
            report["horizon"] = net.horizon
            t_nodes = next(iter(net.edges.values())).riemann.u.t_nodes
        else:
            sol, bound, horizon = _simulate_diagonal(scn)
            for name, fld in (("u", sol.u), ("v", sol.v)):
                p = out_dir / f"edge_1_{name}.csv"
                _write_field_csv(p, fld)
                written.append(p)
            trace_cols = {
                "edge_1_u_left": sol.u.values[:, 0],
                "edge_1_v_right": sol.v.values[:, -1],
            }
            row_sup = np.abs(sol.u.values).max(axis=1) + np.abs(sol.v.values).max(axis=1)
            measured = settle_time(sol.u.t_nodes, row_sup, 1e-9)
            report["edges"]["1"] = {
                "iterations": sol.iterations,
                "picard_residuals": sol.residual_history,
                "settle_time": measured if math.isfinite(measured) else "inf",
                "condition_holds": conditions[1][1].holds,
                "condition_margins": list(conditions[1][1].margins),
                "ledger": _ledger_dict(sol.ledger),
            }
            report["floor"] = scn.system.floor
            report["extinction_bound"] = bound
            report["measured_extinction"] = measured if math.isfinite(measured) else "inf"
            report["within_bound"] = bool(measured <= bound + 1e-12)
            report["horizon"] = horizon
            t_nodes = sol.u.t_nodes

        trace_path = out_dir / "boundary_traces.csv"
        names = sorted(trace_cols)
        table = np.column_stack([t_nodes] + [trace_cols[k] for k in names])
        np.savetxt(
            trace_path, table, delimiter=",", fmt="%.17g", header=",".join(["t"] + names), comments=""
        )
        written.append(trace_path)

        echo_path = out_dir / "scenario_echo.json"
        echo_path.write_text(json.dumps(scn.raw, indent=2, sort_keys=True) + "\n")
        written.append(echo_path)

        report_path = out_dir / "report.json"
        report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        written.append(report_path)
    except NoConvergence as exc:
        fail_cleanup()
        print(f"solver did not converge: {exc}", file=out_stream)
        return EXIT_NO_CONVERGENCE
    except nw.EdgeSolverError as exc:
        fail_cleanup()
        if isinstance(exc.cause, NoConvergence):
            print(f"solver did not converge on edge {exc.edge}: {exc.cause}", file=out_stream)
            return EXIT_NO_CONVERGENCE
        raise
    print(f"wrote {len(written)} artifacts to {out_dir}", file=out_stream)
    return EXIT_OK


def cmd_compare(scn: Scenario, out_dir: str | Path, out_stream=None) -> int:
    out_stream = out_stream or sys.stdout
    if len(scn.tree.edges) != 1:
        print("compare supports single-edge scenarios only", file=out_stream)
        return EXIT_IO
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if scn.kind == "saint_venant":
        p = scn.params[1]
        floor = sv.pick_c(p)
        system = sv.diagonal_system(p, floor)
        net_scn = nw.NetworkScenario(
            tree=scn.tree, params=scn.params, initial_depth=scn.initial_depth,
            initial_velocity=scn.initial_velocity, feedback=scn.feedback, nx=scn.nx, nt=scn.nt,
        )
        u0, v0 = nw.riemann_profiles(net_scn, 1)
        length = p.length
    else:
        system = scn.system
        u0, v0 = scn.initial_u, scn.initial_v
        length = scn.tree.lengths.get(1, 1.0)
        floor = system.floor

    amp = max(u0.sup, v0.sup)
    g = scn.feedback.exponent
    t_star = amp ** (1 - g) / ((1 - g) * scn.feedback.gain) if amp > 0 else 0.0
    horizon = scn.horizon if scn.horizon is not None else length / floor + t_star
    left = FeedbackTrace(float(np.asarray(u0(np.array([0.0])))[0]), scn.feedback)
    right = FeedbackTrace(float(np.asarray(v0(np.array([length])))[0]), scn.feedback)
    m1, _ = system.speed_bounds(max(amp, 1e-12), max(amp, 1e-12))

    rows = []
    for nx in (scn.nx, 2 * scn.nx):
        grid = GridSpec(nt=scn.nt, nx=nx + 1, horizon=horizon, length=length)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sol = picard_two_control(
                system, u0, v0, scn.feedback, grid, tol=scn.tol, max_iter=scn.max_iter
            )
        ogrid = orc.UpwindGrid.from_cfl(nx, m1, length, cfl=scn.cfl)
        uo, vo = orc.upwind_closed_loop(
            system, u0, v0, left, right, ogrid, grid.t_nodes
        )
        l1u, supu = orc.field_distance(sol.u, uo)
        l1v, supv = orc.field_distance(sol.v, vo)
        rows.append({
            "nx": nx,
            "dx": length / nx,
            "l1_u": l1u,
            "l1_v": l1v,
            "sup_u": supu,
            "sup_v": supv,
        })
        print(
            f"nx={nx:5d}  dx={length / nx:.5f}  L1(u)={l1u:.3e}  L1(v)={l1v:.3e}  "
            f"sup(u)={supu:.3e}  sup(v)={supv:.3e}",
            file=out_stream,
        )
    (out_dir / "compare.json").write_text(json.dumps({"rows": rows}, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypstab",
        description="finite-time boundary stabilization runs for canal networks",
    )
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in ("verify", "simulate", "compare"):
        p = sub.add_parser(verb)
        p.add_argument("scenario", help="path to a scenario JSON file")
        p.add_argument("--out", default="out", help="output directory for artifacts")
        p.add_argument("--force", action="store_true", help="simulate even if conditions fail")
        p.add_argument("--grid-nx", type=int, default=None, help="override grid.nx")
        p.add_argument("--tol", type=float, default=None, help="override run.tol")
        p.add_argument("--horizon", type=float, default=None, help="override run.horizon")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scn = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.grid_nx is not None:
        scn.nx = args.grid_nx
    if args.tol is not None:
        scn.tol = args.tol
    if args.horizon is not None:
        scn.horizon = args.horizon
    try:
        if args.verb == "verify":
            return cmd_verify(scn)
        if args.verb == "simulate":
            return cmd_simulate(scn, args.out, force=args.force)
        return cmd_compare(scn, args.out)
    except (OSError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
