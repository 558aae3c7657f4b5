"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (add ``-s`` to see the
criterion lines inline).  Every tolerance is pinned here; nothing is left
to later calibration.
"""

import math
import time
import warnings

import numpy as np
from scipy.integrate import solve_ivp

from hypstab import network as nw
from hypstab import oracle as orc
from hypstab import profiles
from hypstab import quasilinear as ql
from hypstab import saintvenant as sv
from hypstab import transport as tr
from hypstab.feedback import FeedbackTrace, PowerFeedback, eval_trace

FB = PowerFeedback(1.0, 0.5)


def note(index: int, ok: bool, detail: str, started: float):
    status = "PASS" if ok else "FAIL"
    line = f"ACCEPTANCE {index:2d}: {status}  ({time.perf_counter() - started:5.1f}s)  {detail}"
    print(line)
    print(line, file=__import__("sys").__stdout__)


def affine_system():
    full = lambda u, c: np.full_like(np.asarray(u, float), c)
    return ql.DiagonalSystem(
        lam=lambda u, v: 1.0 + (3.0 * u + v) / 4.0,
        mu=lambda u, v: -1.0 + (u + 3.0 * v) / 4.0,
        floor=1.0,
        dlam_du=lambda u, v: full(u, 0.75),
        dlam_dv=lambda u, v: full(u, 0.25),
        dmu_du=lambda u, v: full(u, 0.25),
        dmu_dv=lambda u, v: full(u, 0.75),
    )


def test_01_linear_transport_exactness():
    started = time.perf_counter()
    grid = tr.GridSpec(nt=201, nx=201, horizon=1.0)
    fld = tr.solve_linear_transport(
        tr.Coefficient.constant(1.0),
        tr.Profile(lambda x: np.asarray(x, float), sup=1.0, lip=1.0),
        tr.BoundaryTrace(lambda t: -np.asarray(t, float), lip=1.0),
        grid,
    )
    T, X = np.meshgrid(grid.t_nodes, grid.x_nodes, indexing="ij")
    err = float(np.abs(fld.values - (X - T)).max())
    ok = err <= 1e-10
    note(1, ok, f"constant-speed field matches x - t, sup error {err:.2e} <= 1e-10", started)
    assert ok


def test_02_flow_lipschitz_bound():
    started = time.perf_counter()
    a = tr.Coefficient(
        func=lambda t, x: 1.0 + 0.1 * np.sin(2 * np.pi * np.asarray(x, float)),
        sup_norm=1.1,
        lip_x=0.2 * np.pi,
    )
    dom = tr.Domain(horizon=1.0, length=1.0, floor=0.9)
    k_const = max(1.0, a.sup_norm) * math.exp(a.lip_x * dom.horizon)
    rng = np.random.default_rng(42)
    triples = []
    for t in rng.uniform(0.15, 1.0, size=30):
        xs = rng.uniform(0.0, 1.0, size=80)
        s_nodes, paths = tr.characteristic_paths(a, float(t), xs, dom, step=0.01)
        for i in range(xs.size):
            ks = np.nonzero(np.isfinite(paths[:, i]))[0]
            for k in rng.choice(ks, size=min(6, ks.size), replace=False):
                triples.append((float(s_nodes[k]), float(t), float(xs[i]), float(paths[k, i])))
    triples = triples[:10000]
    assert len(triples) == 10000
    idx = rng.permutation(len(triples))
    worst = 0.0
    for i, j in zip(idx[::2], idx[1::2]):
        s1, t1, x1, p1 = triples[i]
        s2, t2, x2, p2 = triples[j]
        move = abs(s1 - s2) + abs(t1 - t2) + abs(x1 - x2)
        if move == 0.0:
            continue
        worst = max(worst, abs(p1 - p2) / move)
    ok = worst <= k_const * (1 + 1e-6)
    note(2, ok, f"10^4 sampled triples: worst quotient {worst:.4f} <= K = {k_const:.4f}", started)
    assert ok


def test_03_entrance_and_solution_lipschitz():
    started = time.perf_counter()
    a = tr.Coefficient(
        func=lambda t, x: 1.0 + 0.1 * np.sin(2 * np.pi * np.asarray(x, float)),
        sup_norm=1.1,
        lip_x=0.2 * np.pi,
    )
    dom = tr.Domain(horizon=1.0, length=1.0, floor=0.9)
    y0 = tr.Profile(lambda x: np.cos(np.pi * np.asarray(x, float)), sup=1.0, lip=np.pi)
    trace = tr.BoundaryTrace(lambda t: np.exp(-np.asarray(t, float)), lip=1.0)
    grid = tr.GridSpec(nt=101, nx=801, horizon=1.0)
    fld = tr.solve_linear_transport(a, y0, trace, grid)
    kbar = (1.0 / dom.floor) * max(1.0, a.sup_norm) * math.exp(a.lip_x * dom.horizon)
    m_bound = tr.lipschitz_bound(a, trace.lip, y0.lip, dom)
    e_field = tr.Field(values=fld.entrance, t_nodes=grid.t_nodes, x_nodes=grid.x_nodes)
    e_lip = e_field.discrete_lipschitz()
    y_lip = fld.discrete_lipschitz()
    ok = e_lip <= kbar * 1.02 and y_lip <= m_bound * 1.02
    note(
        3,
        ok,
        f"entrance Lipschitz {e_lip:.3f} <= {kbar:.3f}, field Lipschitz {y_lip:.3f} <= {m_bound:.3f} (2%)",
        started,
    )
    assert ok


def test_04_feedback_closed_form_vs_ode():
    started = time.perf_counter()
    worst = 0.0
    for gain in (1.0, 2.0):
        for exponent in (0.3, 0.5, 0.7):
            for w0 in (1.0, -1.0, 0.1, -0.1):
                trace = FeedbackTrace(w0, PowerFeedback(gain, exponent))
                te = trace.extinction

                def rhs(t, w):
                    return -gain * np.sign(w) * np.abs(w) ** exponent

                sol = solve_ivp(rhs, (0.0, 0.99 * te), [w0], rtol=1e-10, atol=1e-13, dense_output=True)
                for t in np.linspace(0.0, 0.99 * te, 40):
                    worst = max(worst, abs(eval_trace(trace, t) - float(sol.sol(t)[0])))
    ok = worst <= 1e-6
    note(4, ok, f"closed form vs adaptive integration, worst gap {worst:.2e} <= 1e-6", started)
    assert ok


def test_05_two_control_extinction():
    started = time.perf_counter()
    amp = 0.02
    u0 = profiles.flattened_sine(amp)
    v0 = profiles.flattened_sine(amp)
    t_star = amp**0.5 / 0.5
    deadline = 1.0 + t_star
    sups = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for label, (nt, nx) in {"coarse": (201, 801), "fine": (402, 1602)}.items():
            grid = tr.GridSpec(nt=nt, nx=nx, horizon=deadline)
            sol = ql.picard_two_control(affine_system(), u0, v0, FB, grid, tol=1e-8, max_iter=60)
            su, sv_ = sol.sup_at(deadline)
            sups[label] = su + sv_
    ok = (
        sups["coarse"] <= 5e-3
        and sups["fine"] <= 2.5e-3
        and sups["fine"] <= max(0.5 * 1.3 * sups["coarse"], 1e-6)
    )
    note(
        5,
        ok,
        f"sup|u|+|v| at T: coarse {sups['coarse']:.2e} <= 5e-3, fine {sups['fine']:.2e} <= 2.5e-3",
        started,
    )
    assert ok


def test_06_one_control_extinction():
    started = time.perf_counter()
    amp = 0.02
    u0 = profiles.flattened_sine(amp)
    v0 = profiles.flattened_sine(amp)
    t_star = amp**0.5 / 0.5
    grid = tr.GridSpec(nt=201, nx=801, horizon=2.0 + t_star)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sol = ql.picard_one_control(
            affine_system(), u0, v0, ql.BoundaryMap.reflection(), FB, grid, tol=1e-10
        )
    sup_v = float(np.abs(sol.v.row_at(1.0 + t_star)).max())
    sup_u = float(np.abs(sol.u.row_at(2.0 + t_star)).max())
    ok = sup_v <= 5e-3 and sup_u <= 5e-3
    note(
        6,
        ok,
        f"reflection map: sup|v| at 1/c+t* = {sup_v:.2e}, sup|u| at 2/c+t* = {sup_u:.2e} (<= 5e-3)",
        started,
    )
    assert ok


def test_07_riemann_transforms():
    started = time.perf_counter()
    p = sv.CanalParams(depth=1.0, velocity=0.5)
    rng = np.random.default_rng(123)
    depths = rng.uniform(0.2, 3.0, size=1000)
    vels = rng.uniform(-1.5, 1.5, size=1000)
    u, v = sv.riemann_fields(depths, vels, p)
    hh, vv = sv.physical_fields(u, v, p)
    round_trip = max(float(np.abs(hh - depths).max()), float(np.abs(vv - vels).max()))
    speed_gap = 0.0
    for ui, vi in zip(u[:200], v[:200]):
        lam, mu = sv.char_speeds(sv.RiemannPair(float(ui), float(vi)), p)
        state = sv.from_riemann(sv.RiemannPair(float(ui), float(vi)), p)
        cel = math.sqrt(p.gravity * state.depth)
        speed_gap = max(speed_gap, abs(lam - (state.velocity + cel)), abs(mu - (state.velocity - cel)))
    ok = round_trip <= 1e-12 and speed_gap <= 1e-12
    note(
        7,
        ok,
        f"1000-state round trip {round_trip:.2e}, speed identity {speed_gap:.2e} (<= 1e-12)",
        started,
    )
    assert ok


def test_08_single_canal_regulation():
    started = time.perf_counter()
    p = sv.CanalParams(depth=1.0, velocity=0.5, length=1.0)
    c = sv.pick_c(p)
    system = sv.diagonal_system(p, c)
    pert = profiles.cosine_bump(1e-3)
    xs = np.linspace(0.0, 1.0, 4001)
    u_vals, v_vals = sv.riemann_fields(1.0 + pert(xs), 0.5 + 0.0 * xs, p)
    u0 = profiles.from_samples(xs, u_vals)
    v0 = profiles.from_samples(xs, v_vals)
    amp = max(u0.sup, v0.sup)
    t_star = amp**0.5 / 0.5
    deadline = p.length / c + t_star
    grid = tr.GridSpec(nt=201, nx=401, horizon=deadline)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sol = ql.picard_two_control(system, u0, v0, FB, grid, tol=1e-11)
    depth_fld, vel_fld = sv.physical_fields(sol.u.values, sol.v.values, p)
    gap = max(float(np.abs(depth_fld[-1] - 1.0).max()), float(np.abs(vel_fld[-1] - 0.5).max()))
    ok = gap <= 5e-3
    note(
        8,
        ok,
        f"(H, V) back at equilibrium by l/c + t* = {deadline:.3f}: residual {gap:.2e} <= 5e-3",
        started,
    )
    assert ok


def test_09_network_extinction():
    started = time.perf_counter()
    tree = nw.CanalTree(
        node_count=4, final_node={1: 3, 2: 3, 3: 4}, lengths={1: 1.0, 2: 1.0, 3: 1.0}
    )
    params = {
        1: sv.CanalParams(depth=1.0, velocity=0.25, length=1.0),
        2: sv.CanalParams(depth=1.0, velocity=0.25, length=1.0),
        3: sv.CanalParams(depth=1.0, velocity=0.5, length=1.0),
    }

    def depth_profile(amp, freq):
        pert = profiles.flattened_sine(amp, 1.0, freq)
        return lambda x, q=pert: 1.0 + q(np.asarray(x, float))

    const = lambda cval: (lambda x: cval + 0.0 * np.asarray(x, float))
    scenario = nw.NetworkScenario(
        tree=tree,
        params=params,
        initial_depth={1: depth_profile(1e-3, 1), 2: depth_profile(1e-3, 2), 3: depth_profile(1e-3, 1)},
        initial_velocity={1: const(0.25), 2: const(0.25), 3: const(0.5)},
        feedback=FB,
        nx=301,
        nt=241,
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        net = nw.simulate_network(scenario, tol=1e-11, coupling_tol=1e-9)
    residual = net.max_node_residual()
    worst_state = 0.0
    for i, es in net.edges.items():
        h_row = es.depth_field.row_at(net.extinction_bound)
        v_row = es.velocity_field.row_at(net.extinction_bound)
        worst_state = max(
            worst_state,
            float(np.abs(h_row - params[i].depth).max()),
            float(np.abs(v_row - params[i].velocity).max()),
        )
    ok = net.within_bound and worst_state <= 5e-3 and residual <= 1e-9
    note(
        9,
        ok,
        f"depth-2 tree: states {worst_state:.2e} <= 5e-3 at 2*max(l)/c + t* = "
        f"{net.extinction_bound:.3f}, node residual {residual:.2e} <= 1e-9",
        started,
    )
    assert ok


def test_10_oracle_equivalence():
    started = time.perf_counter()
    results = []

    def run_config(system, u0, v0, horizon, label):
        left = FeedbackTrace(float(np.asarray(u0(np.array([0.0])))[0]), FB)
        right = FeedbackTrace(float(np.asarray(v0(np.array([1.0])))[0]), FB)
        m1, _ = system.speed_bounds(max(u0.sup, v0.sup, 1e-12), max(u0.sup, v0.sup, 1e-12))
        l1 = {}
        for n_cells in (200, 400):
            grid = tr.GridSpec(nt=161, nx=n_cells + 1, horizon=horizon)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                sol = ql.picard_two_control(system, u0, v0, FB, grid, tol=1e-10)
            ogrid = orc.UpwindGrid.from_cfl(n_cells, m1)
            uo, vo = orc.upwind_closed_loop(system, u0, v0, left, right, ogrid, grid.t_nodes)
            du, _ = orc.field_distance(sol.u, uo)
            dv, _ = orc.field_distance(sol.v, vo)
            l1[n_cells] = max(du, dv)
            assert l1[n_cells] <= 5.0 / n_cells, f"{label}: L1 {l1[n_cells]:.2e} > 5 dx"
        ratio = l1[200] / l1[400]
        assert 1.4 <= ratio <= 2.9, f"{label}: refinement ratio {ratio:.2f} not first order"
        results.append(f"{label}: L1 {l1[400]:.1e} <= 5dx, ratio {ratio:.2f}")

    amp = 0.02
    t_star = amp**0.5 / 0.5
    run_config(
        affine_system(), profiles.flattened_sine(amp), profiles.flattened_sine(amp),
        1.0 + t_star, "two-control",
    )

    p = sv.CanalParams(depth=1.0, velocity=0.5, length=1.0)
    c = sv.pick_c(p)
    xs = np.linspace(0.0, 1.0, 4001)
    pert = profiles.cosine_bump(1e-3)
    u_vals, v_vals = sv.riemann_fields(1.0 + pert(xs), 0.5 + 0.0 * xs, p)
    u0 = profiles.from_samples(xs, u_vals)
    v0 = profiles.from_samples(xs, v_vals)
    amp_sv = max(u0.sup, v0.sup)
    run_config(
        sv.diagonal_system(p, c), u0, v0, 1.0 / c + amp_sv**0.5 / 0.5, "canal",
    )
    note(10, True, "; ".join(results), started)


def test_11_condition_ledger_arithmetic():
    started = time.perf_counter()
    ledger = ql.build_ledger(affine_system(), amp=0.04, slope=0.05, fb=FB)
    report = ql.check_two_control(ledger)
    hand = 1.4 * 0.75 * 1.04 * max(0.04**0.5, 0.05) * 2.0 * math.e
    gap1 = abs(report.margins[0] - hand)
    ok = (not report.holds) and gap1 <= 1e-12

    ledger_small = ql.build_ledger(affine_system(), amp=0.002, slope=0.01, fb=FB)
    report_small = ql.check_two_control(ledger_small)
    t_hand = 1.0 + 0.002**0.5 / 0.5
    hand_small = t_hand * 0.75 * (1.0 + 0.002) * max(0.002**0.5, 0.01) * 2.0 * math.e
    gap2 = abs(report_small.margins[0] - hand_small)
    ok = ok and report_small.holds and gap2 <= 1e-12

    bmap = ql.BoundaryMap.reflection()
    ledger_map = ql.build_ledger(affine_system(), amp=0.04, slope=0.05, fb=FB, bmap=bmap)
    rep_map = ql.check_one_control(ledger_map)
    t_map = 1.0 + 1.0 + 0.4
    budget = max(1.0 / (2 * t_map * 0.75), 0.05)
    growth = 1.04 * math.exp(2 * t_map * 0.75 * budget)
    c3p = max(0.04**0.5, 0.05) * growth
    c3pp = max(c3p, 0.05) * growth
    gap3 = max(abs(rep_map.margins[0] - c3p / budget), abs(rep_map.margins[1] - c3pp / budget))
    ok = ok and gap3 <= 1e-12
    note(
        11,
        ok,
        f"margins match hand arithmetic to {max(gap1, gap2, gap3):.1e} (<= 1e-12)",
        started,
    )
    assert ok
