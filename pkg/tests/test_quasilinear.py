"""Constants ledger, smallness conditions and the closed-loop Picard solver."""

import math
import warnings

import numpy as np
import pytest

from hypstab import profiles
from hypstab import quasilinear as ql
from hypstab import transport as tr
from hypstab.feedback import PowerFeedback


def affine_system(floor=1.0):
    """lam = 1 + (3u + v)/4, mu = -1 + (u + 3v)/4 with analytic gradients."""
    full = lambda u, c: np.full_like(np.asarray(u, float), c)
    return ql.DiagonalSystem(
        lam=lambda u, v: 1.0 + (3.0 * u + v) / 4.0,
        mu=lambda u, v: -1.0 + (u + 3.0 * v) / 4.0,
        floor=floor,
        dlam_du=lambda u, v: full(u, 0.75),
        dlam_dv=lambda u, v: full(u, 0.25),
        dmu_du=lambda u, v: full(u, 0.25),
        dmu_dv=lambda u, v: full(u, 0.75),
    )


def constant_system():
    full = lambda u, c: np.full_like(np.asarray(u, float), c)
    return ql.DiagonalSystem(
        lam=lambda u, v: full(u, 1.0),
        mu=lambda u, v: full(u, -1.0),
        floor=1.0,
        dlam_du=lambda u, v: full(u, 0.0),
        dlam_dv=lambda u, v: full(u, 0.0),
        dmu_du=lambda u, v: full(u, 0.0),
        dmu_dv=lambda u, v: full(u, 0.0),
    )


FB = PowerFeedback(1.0, 0.5)


class TestBuildLedger:
    def test_affine_box_extrema(self):
        ledger = ql.build_ledger(affine_system(), amp=0.04, slope=0.05, fb=FB)
        assert ledger.speed_sup == pytest.approx(1.04, abs=1e-12)
        assert ledger.speed_grad_sup == pytest.approx(0.75, abs=1e-12)
        assert ledger.horizon == pytest.approx(1.4, abs=1e-12)
        assert ledger.u_amp == 0.04

    def test_degenerate_gradients(self):
        ledger = ql.build_ledger(constant_system(), amp=0.04, slope=0.05, fb=FB)
        assert math.isinf(ledger.lip_budget)
        report = ql.check_two_control(ledger)
        assert report.holds and report.margins[0] == 0.0

    def test_transported_lipschitz_formula(self):
        ledger = ql.build_ledger(affine_system(), amp=0.04, slope=0.05, fb=FB)
        # the exponential factor is exactly e at the optimal budget
        expected = max(1.0 * 0.04**0.5 / 1.0, 0.05) * max(1.0, 1.04) * math.e
        assert ledger.lip_transported == pytest.approx(expected, rel=1e-12)

    def test_nonfinite_speeds_rejected(self):
        def lam(u, v):
            with np.errstate(invalid="ignore"):
                return 1.0 + np.sqrt(u - 0.01)  # NaN on most of the box

        bad = ql.DiagonalSystem(lam=lam, mu=lambda u, v: -1.0 + 0 * u, floor=1.0)
        with pytest.raises(ql.BoxEvaluationFailure):
            ql.build_ledger(bad, amp=0.04, slope=0.05, fb=FB)

    def test_boundary_map_widens_u_range(self):
        bmap = ql.BoundaryMap(func=lambda v, t: 2.0 * v, dv_sup=2.0, dt_sup=0.0, settle_time=0.0)
        ledger = ql.build_ledger(affine_system(), amp=0.04, slope=0.05, fb=FB, bmap=bmap)
        assert ledger.u_amp == pytest.approx(0.08, rel=1e-6)
        assert not ledger.two_control
        # deadline doubles (two sweeps) plus the trace extinction
        assert ledger.horizon == pytest.approx(2.0 + 0.4, abs=1e-12)


class TestCheckTwoControl:
    def test_failing_margin_hand_arithmetic(self):
        ledger = ql.build_ledger(affine_system(), amp=0.04, slope=0.05, fb=FB)
        report = ql.check_two_control(ledger)
        hand = 1.4 * 0.75 * 1.04 * max(1.0 * 0.04**0.5 / 1.0, 0.05) * 2.0 * math.e
        assert not report.holds
        assert report.margins[0] == pytest.approx(hand, abs=1e-12)

    def test_passing_after_shrinking_data(self):
        ledger = ql.build_ledger(affine_system(), amp=0.002, slope=0.01, fb=FB)
        report = ql.check_two_control(ledger)
        t_hand = 1.0 + 0.002**0.5 / 0.5
        m1_hand = 1.0 + 4.0 * 0.002 / 4.0
        hand = t_hand * 0.75 * m1_hand * max(0.002**0.5, 0.01) * 2.0 * math.e
        assert report.holds
        assert hand < 1.0
        assert report.margins[0] == pytest.approx(hand, rel=1e-12)


class TestCheckOneControl:
    def test_degenerate_holds(self):
        bmap = ql.BoundaryMap(func=lambda v, t: 0.0 * v, dv_sup=0.0, dt_sup=0.0)
        ledger = ql.build_ledger(constant_system(), amp=0.04, slope=0.05, fb=FB, bmap=bmap)
        report = ql.check_one_control(ledger)
        assert report.holds and report.margins == (0.0, 0.0)

    def test_margins_by_substitution(self):
        bmap = ql.BoundaryMap.reflection()  # dv_sup = 1, dt_sup = 0
        ledger = ql.build_ledger(affine_system(), amp=0.04, slope=0.05, fb=FB, bmap=bmap)
        report = ql.check_one_control(ledger)
        t_hand = 1.0 / 1.0 + max(0.0, 1.0 + 0.4)
        budget = max(1.0 / (2 * t_hand * 0.75), 0.05)
        growth = max(1.0, 1.04) * math.exp(2 * t_hand * 0.75 * budget)
        c3p = max(0.04**0.5, 0.05) * growth
        c3pp = max((1.0 * c3p + 0.0) / 1.0, 0.05) * growth
        assert ledger.horizon == pytest.approx(t_hand, abs=1e-12)
        assert report.margins[0] == pytest.approx(c3p / budget, rel=1e-12)
        assert report.margins[1] == pytest.approx(c3pp / budget, rel=1e-12)

    def test_large_time_derivative_breaks_the_map_condition(self):
        ledger = ql.build_ledger(affine_system(), amp=0.002, slope=0.01, fb=FB)
        # holds without a map; now inject a strongly time-varying map
        bmap = ql.BoundaryMap(func=lambda v, t: v, dv_sup=1.0, dt_sup=10.0, settle_time=0.0)
        ledger2 = ql.build_ledger(affine_system(), amp=0.002, slope=0.01, fb=FB, bmap=bmap)
        report = ql.check_one_control(ledger2)
        assert not report.holds
        assert report.margins[1] > 1.0
        assert ql.check_two_control(ledger).holds


class TestPicardTwoControl:
    def test_zero_data_fixed_point(self):
        grid = tr.GridSpec(nt=41, nx=61, horizon=1.2)
        sol = ql.picard_two_control(
            constant_system(), profiles.constant(0.0), profiles.constant(0.0), FB, grid
        )
        assert sol.iterations == 1
        assert sol.u.sup() == 0.0 and sol.v.sup() == 0.0

    def test_decoupled_constant_speeds_match_closed_form(self):
        amp = 0.02
        u0 = profiles.cosine_bump(amp)
        v0 = profiles.cosine_bump(amp)
        t_star = amp**0.5 / 0.5
        grid = tr.GridSpec(nt=101, nx=201, horizon=1.0 + t_star)
        sol = ql.picard_two_control(constant_system(), u0, v0, FB, grid, tol=1e-12)
        assert sol.iterations <= 2
        from hypstab.feedback import FeedbackTrace, eval_trace

        left = FeedbackTrace(amp, FB)
        T, X = np.meshgrid(grid.t_nodes, grid.x_nodes, indexing="ij")
        exact_u = np.where(X >= T, u0.func(X - T), eval_trace(left, np.maximum(T - X, 0.0)))
        assert np.abs(sol.u.values - exact_u).max() < 1e-10

    def test_boundary_traces_imposed_exactly(self):
        amp = 0.02
        u0 = profiles.flattened_sine(amp)
        v0 = profiles.flattened_sine(amp)
        grid = tr.GridSpec(nt=81, nx=161, horizon=1.3)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sol = ql.picard_two_control(affine_system(), u0, v0, FB, grid, tol=1e-9)
        assert np.array_equal(sol.u.values[:, 0], sol.left_trace)
        assert np.array_equal(sol.v.values[:, -1], sol.right_trace)

    def test_iterates_respect_domain_bounds(self):
        amp = 0.02
        u0 = profiles.flattened_sine(amp)
        v0 = profiles.flattened_sine(amp)
        grid = tr.GridSpec(nt=101, nx=401, horizon=1.3)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sol = ql.picard_two_control(affine_system(), u0, v0, FB, grid, tol=1e-10)
        ledger = sol.ledger
        assert sol.u.sup() <= ledger.amp * 1.01
        assert sol.v.sup() <= ledger.amp * 1.01
        assert sol.u.discrete_lipschitz() <= ledger.lip_transported * 1.02
        assert sol.v.discrete_lipschitz() <= ledger.lip_transported * 1.02

    def test_fixed_point_residual_after_convergence(self):
        amp = 0.02
        u0 = profiles.flattened_sine(amp)
        v0 = profiles.flattened_sine(amp)
        grid = tr.GridSpec(nt=81, nx=161, horizon=1.3)
        tol = 1e-9
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sol = ql.picard_two_control(affine_system(), u0, v0, FB, grid, tol=tol)
            again = ql.picard_two_control(
                affine_system(), u0, v0, FB, grid, tol=1.0, max_iter=1,
                initial_guess=(sol.u.values, sol.v.values),
            )
        assert again.residual_history[0] <= 2 * tol

    def test_uniqueness_probe_different_guesses(self):
        amp = 0.02
        u0 = profiles.flattened_sine(amp)
        v0 = profiles.flattened_sine(amp)
        grid = tr.GridSpec(nt=81, nx=161, horizon=1.3)
        tol = 1e-10
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            a = ql.picard_two_control(affine_system(), u0, v0, FB, grid, tol=tol)
            b = ql.picard_two_control(
                affine_system(), u0, v0, FB, grid, tol=tol, initial_guess="zero"
            )
        assert np.abs(a.u.values - b.u.values).max() <= 10 * tol
        assert np.abs(a.v.values - b.v.values).max() <= 10 * tol

    def test_residual_history_decreases(self):
        amp = 0.02
        u0 = profiles.flattened_sine(amp)
        v0 = profiles.flattened_sine(amp)
        grid = tr.GridSpec(nt=81, nx=161, horizon=1.3)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sol = ql.picard_two_control(affine_system(), u0, v0, FB, grid, tol=1e-10)
        hist = sol.residual_history
        assert all(b < a for a, b in zip(hist[1:], hist[2:]))

    def test_no_convergence_is_reported(self):
        grid = tr.GridSpec(nt=41, nx=61, horizon=1.3)
        amp = 0.02
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with pytest.raises(ql.NoConvergence) as err:
                ql.picard_two_control(
                    affine_system(), profiles.flattened_sine(amp), profiles.flattened_sine(amp),
                    FB, grid, tol=1e-16, max_iter=2,
                )
        assert err.value.iterations == 2
        assert err.value.last_residual > 0

    def test_working_box_exit_fails_loudly(self):
        grid = tr.GridSpec(nt=41, nx=61, horizon=1.3)
        tiny = ql.build_ledger(affine_system(), amp=1e-4, slope=1e-4, fb=FB)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with pytest.raises(ql.CoefficientSignLoss):
                ql.picard_two_control(
                    affine_system(), profiles.flattened_sine(0.02), profiles.flattened_sine(0.02),
                    FB, grid, ledger=tiny,
                )

    def test_sign_degenerate_speeds_fail_loudly(self):
        full = lambda u, c: np.full_like(np.asarray(u, float), c)
        bad = ql.DiagonalSystem(
            lam=lambda u, v: 1.0 + 80.0 * u,
            mu=lambda u, v: full(u, -1.0),
            floor=1.0,
        )
        grid = tr.GridSpec(nt=41, nx=61, horizon=1.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with pytest.raises(ql.CoefficientSignLoss):
                ql.picard_two_control(
                    bad, profiles.cosine_bump(0.05), profiles.cosine_bump(0.05), FB, grid
                )


class TestPicardOneControl:
    def test_zero_data(self):
        grid = tr.GridSpec(nt=41, nx=61, horizon=2.3)
        sol = ql.picard_one_control(
            constant_system(), profiles.constant(0.0), profiles.constant(0.0),
            ql.BoundaryMap.reflection(), FB, grid,
        )
        assert sol.u.sup() == 0.0 and sol.v.sup() == 0.0

    def test_compatibility_gate(self):
        grid = tr.GridSpec(nt=41, nx=61, horizon=2.0)
        with pytest.raises(tr.CompatibilityViolation):
            ql.picard_one_control(
                constant_system(), profiles.cosine_bump(0.02), profiles.constant(0.0),
                ql.BoundaryMap.reflection(), FB, grid,
            )

    def test_reflection_extinction_schedule(self):
        amp = 0.02
        u0 = profiles.flattened_sine(amp)
        v0 = profiles.flattened_sine(amp)
        t_star = amp**0.5 / 0.5
        grid = tr.GridSpec(nt=121, nx=241, horizon=2.0 + t_star)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sol = ql.picard_one_control(
                affine_system(), u0, v0, ql.BoundaryMap.reflection(), FB, grid, tol=1e-10
            )
        assert np.abs(sol.v.row_at(1.0 + t_star)).max() <= 5e-3
        assert np.abs(sol.u.row_at(2.0 + t_star)).max() <= 5e-3
        # the map relation is imposed on the returned pair
        assert np.abs(sol.u.values[:, 0] - sol.v.values[:, 0]).max() < 1e-14


class TestVerifyExtinction:
    def test_zero_solution(self):
        grid = tr.GridSpec(nt=41, nx=61, horizon=1.2)
        sol = ql.picard_two_control(
            constant_system(), profiles.constant(0.0), profiles.constant(0.0), FB, grid
        )
        rep = ql.verify_extinction(sol, 1.0)
        assert rep.sup_u == 0.0 and rep.sup_v == 0.0
        assert rep.boundary_settle_u == 0.0 and rep.interior_settle == 0.0

    def test_constant_speed_schedule(self):
        amp = 0.02
        u0 = profiles.cosine_bump(amp)
        v0 = profiles.cosine_bump(amp)
        t_star = amp**0.5 / 0.5
        grid = tr.GridSpec(nt=161, nx=161, horizon=1.0 + t_star)
        sol = ql.picard_two_control(constant_system(), u0, v0, FB, grid, tol=1e-12)
        rep = ql.verify_extinction(sol, 1.0 + t_star, tol=1e-9)
        assert rep.sup_u <= 1e-9 and rep.sup_v <= 1e-9
        assert rep.boundary_settle_u == pytest.approx(t_star, abs=2 * grid.dt)
        assert rep.interior_settle <= 1.0 + t_star + 1e-12

    def test_extinction_is_permanent(self):
        amp = 0.02
        u0 = profiles.flattened_sine(amp)
        v0 = profiles.flattened_sine(amp)
        t_star = amp**0.5 / 0.5
        deadline = 1.0 + t_star
        grid = tr.GridSpec(nt=161, nx=321, horizon=deadline * 1.3)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sol = ql.picard_two_control(affine_system(), u0, v0, FB, grid, tol=1e-11)
        sups = np.abs(sol.u.values).max(axis=1) + np.abs(sol.v.values).max(axis=1)
        after = sups[grid.t_nodes >= deadline]
        assert after.max() <= 5e-3
        assert after[-1] <= after[0] + 1e-12
