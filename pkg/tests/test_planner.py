import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import quintic_exact
from timing_rl.geometry import ReferenceLine
from timing_rl.planner import (CandidatePair, FsmMode, PlannerConfig, PlannerView, Predictions, drive_candidates,
                               fsm_transition, jerk_cost, kinematically_feasible, plan_base_action,
                               select_candidate, solve_quintic, stop_candidates, sweep_collides, trajectory_cost)
from timing_rl.world import IdmParams, idm_accel

CFG = PlannerConfig()
IDM = IdmParams(2.0, -3.0, 2.0, 8.0, 1.5)
REF = ReferenceLine([[0.0, 0.0], [300.0, 0.0]], resample=0.5)
TIMES = np.arange(1, 81) * 0.1


def obstacles(xs, speeds=None, ys=None):
    """Forecasts of boxes driving along +x from the given positions."""
    xs = np.asarray(xs, dtype=float)
    speeds = np.zeros_like(xs) if speeds is None else np.asarray(speeds, dtype=float)
    ys = np.zeros_like(xs) if ys is None else np.asarray(ys, dtype=float)
    x = xs[None, :] + speeds[None, :] * TIMES[:, None]
    y = np.broadcast_to(ys, x.shape).copy()
    return Predictions(TIMES, x, y, np.zeros_like(x), np.full(len(xs), 5.0), np.full(len(xs), 2.0))


def view(l0=10.0, v0=5.0, a0=0.0, pred=None, lead_gap=None, lead_speed=0.0):
    return PlannerView(l0, v0, a0, REF, 5.0, 2.0, pred if pred is not None else Predictions.empty(TIMES),
                       lead_gap, lead_speed)


class TestQuintic:
    def test_zero_boundary(self):
        for t_e in (0.5, 1.0, 3.7):
            assert solve_quintic((0, 0, 0), (0, 0, 0), t_e).coeffs == (0.0,) * 6

    def test_minimum_jerk(self):
        c = solve_quintic((0, 0, 0), (1, 0, 0), 1.0).coeffs
        assert c == pytest.approx((6, -15, 10, 0, 0, 0), abs=1e-9)

    def test_uniform_motion(self):
        c = solve_quintic((0, 5, 0), (10, 5, 0), 2.0).coeffs
        assert c == pytest.approx((0, 0, 0, 0, 5, 0), abs=1e-12)

    def test_bad_duration(self):
        with pytest.raises(ValueError):
            solve_quintic((0, 0, 0), (1, 0, 0), 0.0)
        with pytest.raises(ValueError):
            solve_quintic((0, 0, 0), (1, 0, 0), -1.0)

    def test_random_residuals(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            start = rng.uniform(-50, 50, 3)
            end = rng.uniform(-50, 50, 3)
            t_e = rng.uniform(0.2, 8.0)
            tr = solve_quintic(start, end, t_e)
            assert tr.boundary_residuals(start, end).max() < 1e-9

    def test_matches_exact_solution(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            start, end = rng.integers(-20, 20, 3), rng.integers(-20, 20, 3)
            t_e = int(rng.integers(1, 6))
            got = solve_quintic(start, end, t_e).coeffs
            assert got == pytest.approx(quintic_exact(start, end, t_e), rel=1e-10, abs=1e-10)

    def test_derivatives_consistent(self):
        tr = solve_quintic((1, 2, 0.5), (20, 4, -1), 3.0)
        t, h = 1.3, 1e-5
        assert tr.velocity(t) == pytest.approx((tr.position(t + h) - tr.position(t - h)) / (2 * h), rel=1e-8)
        assert tr.jerk(t) == pytest.approx((tr.acceleration(t + h) - tr.acceleration(t - h)) / (2 * h), rel=1e-6)


class TestJerk:
    def test_minimum_jerk_quadrature(self):
        tr = solve_quintic((0, 0, 0), (1, 0, 0), 1.0)
        t = np.linspace(0.0, 1.0, 2_000_001)
        f = np.abs(360 * t**2 - 360 * t + 60)
        quad = float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(t)))
        assert jerk_cost(tr) == pytest.approx(quad, rel=1e-8)

    @settings(max_examples=50)
    @given(st.floats(-5, 5), st.floats(0, 10), st.floats(-2, 2), st.floats(0, 30), st.floats(0, 10),
           st.floats(0.5, 6))
    def test_matches_quadrature(self, l0, v0, a0, dl, ve, t_e):
        tr = solve_quintic((l0, v0, a0), (l0 + dl, ve, 0.0), t_e)
        t = np.linspace(0.0, t_e, 200_001)
        f = np.abs(tr.jerk(t))
        quad = float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(t)))
        assert jerk_cost(tr) == pytest.approx(quad, rel=1e-5, abs=1e-7)


class TestFsm:
    def test_order(self):
        assert fsm_transition(True, True) == FsmMode.DRIVE
        assert fsm_transition(False, True) == FsmMode.SLOW_TO_STOP
        assert fsm_transition(False, False) == FsmMode.EMERGENCY_BRAKE
        assert fsm_transition(True, True, lead_gap=0.1) == FsmMode.EMERGENCY_BRAKE

    def test_open_road_drives(self):
        _, chosen, mode = plan_base_action(view(), CFG, IDM)
        assert mode == FsmMode.DRIVE and chosen.feasible

    def test_blocked_road_stops(self):
        # cruise-only drive grid: cruising 1 s puts the front bumper (plus
        # margin) at 14.5 m, stopping within 1 s at 13.75 m; the car ahead
        # starts at 14.0 m
        cfg = replace(CFG, t_grid=(1.0,), v_fracs=(1.0,))
        v = view(l0=10.0, v0=1.5, pred=obstacles([16.5]))
        assert all(sweep_collides(c.lon, v, cfg) for c in drive_candidates(v, cfg))
        _, chosen, mode = plan_base_action(v, cfg, IDM)
        assert mode == FsmMode.SLOW_TO_STOP
        assert chosen.lon.velocity(chosen.lon.t_e) == pytest.approx(0.0, abs=1e-9)

    def test_nothing_feasible_brakes(self):
        pred = obstacles([10.0 + 5.5])
        a, chosen, mode = plan_base_action(view(v0=8.0, pred=pred), CFG, IDM)
        assert mode == FsmMode.EMERGENCY_BRAKE and chosen is None and a == CFG.b_min


class TestCost:
    def test_zeroed_terms(self):
        tr = solve_quintic((0, 8, 0), (16, 8, 0), 2.0)
        c = trajectory_cost(CandidatePair(tr), False, CFG, FsmMode.DRIVE)
        assert c == pytest.approx(CFG.k[2] * 2.0 + CFG.k[4] * jerk_cost(tr), abs=1e-12)

    def test_collision_term(self):
        tr = solve_quintic((0, 5, 0), (10, 5, 0), 2.0)
        p = CandidatePair(tr)
        assert trajectory_cost(p, True, CFG, FsmMode.DRIVE) - trajectory_cost(p, False, CFG, FsmMode.DRIVE) \
            == pytest.approx(CFG.k[0])

    def test_collision_from_predictions(self):
        v = view(l0=10.0, v0=5.0)
        tr = solve_quintic((10, 5, 0), (20, 5, 0), 2.0)
        blocked = trajectory_cost(CandidatePair(tr), obstacles([18.0]), CFG, FsmMode.DRIVE, v)
        clear = trajectory_cost(CandidatePair(tr), obstacles([100.0]), CFG, FsmMode.DRIVE, v)
        assert blocked - clear == pytest.approx(CFG.k[0])

    def test_stop_mode_targets_zero(self):
        tr = solve_quintic((0, 4, 0), (4, 0, 0), 2.0)
        c_stop = trajectory_cost(CandidatePair(tr), False, CFG, FsmMode.SLOW_TO_STOP)
        c_drive = trajectory_cost(CandidatePair(tr), False, CFG, FsmMode.DRIVE)
        assert c_drive - c_stop == pytest.approx(CFG.k[1] * CFG.target_speed)

    @given(st.floats(0, 5), st.floats(0, 5))
    def test_monotone_in_lateral_term(self, d1, extra):
        tr = solve_quintic((0, 5, 0), (10, 5, 0), 2.0)
        lo = trajectory_cost(CandidatePair(tr, d_e=d1), False, CFG, FsmMode.DRIVE)
        hi = trajectory_cost(CandidatePair(tr, d_e=d1 + extra), False, CFG, FsmMode.DRIVE)
        assert hi >= lo

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PlannerConfig(k=(1, -1, 1, 1, 1))
        with pytest.raises(ValueError):
            PlannerConfig(t_grid=())


class TestPlan:
    def test_empty_road_accelerates(self):
        a, _, _ = plan_base_action(view(v0=3.0), CFG, IDM)
        assert a > 0

    def test_stopped_leader_close(self):
        a, _, _ = plan_base_action(view(v0=3.0, lead_gap=3.0, lead_speed=0.0), CFG, IDM)
        assert a <= 0.0
        assert a == pytest.approx(max(idm_accel(3.0, 3.0, 0.0, IDM, 8.0), CFG.b_min))

    def test_argmin_matches_enumeration(self):
        pred = obstacles([40.0], speeds=[2.0])
        v = view(l0=10.0, v0=6.0, pred=pred)
        cands = drive_candidates(v, CFG)
        best, best_cost = None, math.inf
        for c in cands:
            if not kinematically_feasible(c.lon, CFG) or sweep_collides(c.lon, v, CFG):
                continue
            cost = trajectory_cost(c, False, CFG, FsmMode.DRIVE)
            if cost < best_cost:
                best, best_cost = c, cost
        chosen = select_candidate(drive_candidates(v, CFG), v, CFG, FsmMode.DRIVE)
        assert chosen.lon == best.lon and chosen.cost == pytest.approx(best_cost)

    def test_three_candidates(self):
        # hand-built costs: durations 1, 2, 3 s at constant speed 8 -> cost K3*t_e
        v = view(l0=0.0, v0=8.0)
        cands = [CandidatePair(solve_quintic((0, 8, 0), (8 * t, 8, 0), t)) for t in (3.0, 1.0, 2.0)]
        chosen = select_candidate(cands, v, CFG, FsmMode.DRIVE)
        assert chosen.lon.t_e == 1.0 and chosen.cost == pytest.approx(1.0)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0, 12), st.floats(-3, 2), st.lists(st.floats(12, 80), max_size=3),
           st.lists(st.floats(0, 10), min_size=3, max_size=3), st.one_of(st.none(), st.floats(0.0, 40.0)),
           st.floats(0, 10))
    def test_bounds_and_idm_cap(self, v0, a0, xs, sp, gap, lead_v):
        pred = obstacles(xs, sp[: len(xs)]) if xs else None
        vw = view(l0=10.0, v0=v0, a0=a0, pred=pred, lead_gap=gap, lead_speed=lead_v)
        a, chosen, mode = plan_base_action(vw, CFG, IDM)
        assert CFG.b_min <= a <= CFG.a_max
        a_idm = idm_accel(v0, gap, lead_v, IDM, CFG.target_speed)
        assert a <= a_idm + 1e-12
        if chosen is not None:
            assert chosen.lon.boundary_residuals((10.0, v0, a0), (chosen.lon.position(chosen.lon.t_e),
                                                 chosen.lon.velocity(chosen.lon.t_e), 0.0)).max() < 1e-9
        if all(sweep_collides(c.lon, vw, CFG) for c in drive_candidates(vw, CFG)):
            assert mode != FsmMode.DRIVE

    def test_stop_grid_ends_at_rest(self):
        for c in stop_candidates(view(v0=6.0), CFG):
            assert c.lon.velocity(c.lon.t_e) == pytest.approx(0.0, abs=1e-9)

    def test_margin_matters(self):
        pred = obstacles([10.0 + 5.3])  # 0.3 m bumper gap, inside the 0.5 m margin
        v = view(v0=0.0, pred=pred)
        tr = solve_quintic((10, 0, 0), (10, 0, 0), 1.0)
        assert sweep_collides(tr, v, CFG)
        assert not sweep_collides(tr, v, replace(CFG, margin=0.0))
