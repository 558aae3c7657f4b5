"""Shallow-water transforms, speed floors and boundary device formulas."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypstab import saintvenant as sv

P = sv.CanalParams(depth=1.0, velocity=0.5)
G = 9.81


class TestCanalParams:
    def test_rejects_critical_equilibrium(self):
        with pytest.raises(sv.NotSubcritical):
            sv.CanalParams(depth=1.0, velocity=math.sqrt(G))

    def test_rejects_still_water(self):
        with pytest.raises(sv.NotSubcritical):
            sv.CanalParams(depth=1.0, velocity=0.0)

    def test_flow_rate(self):
        assert P.flow_rate == 0.5


class TestRiemannTransforms:
    def test_equilibrium_maps_to_origin(self):
        r = sv.to_riemann(sv.PhysicalState(1.0, 0.5), P)
        assert r.u == 0.0 and r.v == 0.0

    def test_depth_bump_substitution(self):
        r = sv.to_riemann(sv.PhysicalState(1.1, 0.5), P)
        expected = 2.0 * (math.sqrt(G * 1.1) - math.sqrt(G))
        assert r.u == pytest.approx(expected, rel=1e-14)
        assert r.v == pytest.approx(-expected, rel=1e-14)

    def test_inverse_substitution(self):
        s = sv.from_riemann(sv.RiemannPair(0.1, -0.1), P)
        assert s.depth == pytest.approx((1.0 + 0.2 / (4.0 * math.sqrt(G))) ** 2, rel=1e-14)
        assert s.velocity == pytest.approx(0.5)

    def test_origin_maps_to_equilibrium(self):
        s = sv.from_riemann(sv.RiemannPair(0.0, 0.0), P)
        assert (s.depth, s.velocity) == (1.0, 0.5)

    def test_rejects_nonpositive_depth(self):
        with pytest.raises(sv.NonpositiveDepth):
            sv.to_riemann(sv.PhysicalState(0.0, 0.5), P)

    def test_depth_collapse(self):
        with pytest.raises(sv.DepthCollapse):
            sv.from_riemann(sv.RiemannPair(-8.0, 8.0), P)

    @given(
        st.floats(min_value=0.2, max_value=3.0),
        st.floats(min_value=-1.0, max_value=1.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_round_trip(self, depth, velocity):
        state = sv.PhysicalState(depth, velocity)
        back = sv.from_riemann(sv.to_riemann(state, P), P)
        assert back.depth == pytest.approx(depth, abs=1e-12)
        assert back.velocity == pytest.approx(velocity, abs=1e-12)

    def test_round_trip_bulk(self):
        rng = np.random.default_rng(11)
        depths = rng.uniform(0.3, 2.5, size=1000)
        vels = rng.uniform(-1.0, 1.0, size=1000)
        u, v = sv.riemann_fields(depths, vels, P)
        hh, vv = sv.physical_fields(u, v, P)
        assert np.abs(hh - depths).max() <= 1e-12
        assert np.abs(vv - vels).max() <= 1e-12


class TestCharSpeeds:
    def test_equilibrium_values(self):
        lam, mu = sv.char_speeds(sv.RiemannPair(0.0, 0.0), P)
        assert lam == pytest.approx(0.5 + math.sqrt(G), rel=1e-12)
        assert mu == pytest.approx(0.5 - math.sqrt(G), rel=1e-12)

    def test_agrees_with_physical_velocities(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            r = sv.RiemannPair(float(rng.uniform(-0.5, 0.5)), float(rng.uniform(-0.5, 0.5)))
            lam, mu = sv.char_speeds(r, P)
            state = sv.from_riemann(r, P)
            cel = math.sqrt(G * state.depth)
            assert lam == pytest.approx(state.velocity + cel, abs=1e-12)
            assert mu == pytest.approx(state.velocity - cel, abs=1e-12)

    def test_floor_separates_speeds_inside_box(self):
        c = sv.pick_c(P)
        rng = np.random.default_rng(9)
        us = rng.uniform(-c, c, size=500)
        vs = rng.uniform(-c, c, size=500)
        for u, v in zip(us, vs):
            lam, mu = sv.char_speeds(sv.RiemannPair(u, v), P)
            assert mu < -c < c < lam


class TestPickC:
    def test_single_canal_value(self):
        assert sv.pick_c(P) == pytest.approx(0.5 * (math.sqrt(G) - 0.5) * (1 - 1e-9), rel=1e-12)

    def test_two_canals_take_the_minimum(self):
        q = sv.CanalParams(depth=1.0, velocity=1.5)
        assert sv.pick_c([P, q]) == pytest.approx(sv.pick_c(q))
        assert sv.pick_c(q) < sv.pick_c(P)

    def test_margin_shrinks_to_zero_near_critical(self):
        q = sv.CanalParams(depth=1.0, velocity=math.sqrt(G) * (1 - 1e-9))
        assert sv.pick_c(q) < 1e-8


class TestControlledFlowRate:
    def test_equilibrium_device(self):
        assert sv.controlled_flow_rate("right", 1.0, 0.0, P) == pytest.approx(0.5, abs=1e-12)
        assert sv.controlled_flow_rate("left", 1.0, 0.0, P) == pytest.approx(0.5, abs=1e-12)

    def test_right_trace_substitution(self):
        assert sv.controlled_flow_rate("right", 1.0, -0.1, P) == pytest.approx(0.4, abs=1e-12)

    def test_left_trace_substitution(self):
        assert sv.controlled_flow_rate("left", 1.0, 0.1, P) == pytest.approx(0.6, abs=1e-12)

    def test_recovers_product_of_state(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            r = sv.RiemannPair(float(rng.uniform(-0.4, 0.4)), float(rng.uniform(-0.4, 0.4)))
            state = sv.from_riemann(r, P)
            q_right = sv.controlled_flow_rate("right", state.depth, r.v, P)
            q_left = sv.controlled_flow_rate("left", state.depth, r.u, P)
            assert q_right == pytest.approx(state.depth * state.velocity, abs=1e-12)
            assert q_left == pytest.approx(state.depth * state.velocity, abs=1e-12)

    def test_rejects_nonpositive_depth(self):
        with pytest.raises(sv.NonpositiveDepth):
            sv.controlled_flow_rate("right", 0.0, 0.0, P)


class TestSimpleNodeMap:
    def test_zero_stays_zero(self):
        bmap = sv.simple_node_map(P)
        assert bmap(0.0, 0.0) == 0.0

    def test_flux_derivative_at_origin(self):
        expected = 0.5 * math.sqrt(1.0) * (math.sqrt(1.0) + 0.5 / math.sqrt(G))
        assert sv.node_flux_du(0.0, 0.0, P) == pytest.approx(expected, rel=1e-14)
        h = 1e-7
        fd = (sv.node_flux(h, 0.0, P) - sv.node_flux(-h, 0.0, P)) / (2 * h)
        assert fd == pytest.approx(expected, rel=1e-6)
        assert expected > 0.0  # local solvability of the implicit relation

    def test_residual_on_sampled_box(self):
        bmap = sv.simple_node_map(P)
        c = sv.pick_c(P)
        vs = np.linspace(-0.5 * c, 0.5 * c, 41)
        us = np.array([float(np.asarray(bmap(v, 0.0))) for v in vs])
        res = np.abs(sv.node_flux(us, vs, P) - P.flow_rate)
        assert res.max() <= 1e-12

    def test_flow_held_at_equilibrium_rate(self):
        bmap = sv.simple_node_map(P)
        v = 0.05
        u = float(np.asarray(bmap(v, 0.0)))
        state = sv.from_riemann(sv.RiemannPair(u, v), P)
        assert state.depth * state.velocity == pytest.approx(P.flow_rate, abs=1e-12)

    def test_slope_bound_is_positive_and_modest(self):
        bmap = sv.simple_node_map(P)
        assert 0.0 < bmap.dv_sup < 2.0
        assert bmap.dt_sup == 0.0 and bmap.settle_time == 0.0
