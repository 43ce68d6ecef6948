"""Conservative baseline controller: FSM + quintic lattice + IDM cap.

Candidates are quintic polynomials in time along the ego's reference line.
The lateral offset stays on the route (d = 0), so the lateral polynomial is
identically zero and only the longitudinal grid is sampled.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .geometry import obb_overlap_arrays


class FsmMode(str, Enum):
    DRIVE = "drive"
    SLOW_TO_STOP = "slow_to_stop"
    EMERGENCY_BRAKE = "emergency_brake"


@dataclass(frozen=True)
class QuinticTrajectory:
    """l(t) = c1 t^5 + c2 t^4 + c3 t^3 + c4 t^2 + c5 t + c6 on [0, t_e]."""

    coeffs: tuple
    t_e: float

    def position(self, t):
        c1, c2, c3, c4, c5, c6 = self.coeffs
        return ((((c1 * t + c2) * t + c3) * t + c4) * t + c5) * t + c6

    def velocity(self, t):
        c1, c2, c3, c4, c5, _ = self.coeffs
        return (((5 * c1 * t + 4 * c2) * t + 3 * c3) * t + 2 * c4) * t + c5

    def acceleration(self, t):
        c1, c2, c3, c4, _, _ = self.coeffs
        return ((20 * c1 * t + 12 * c2) * t + 6 * c3) * t + 2 * c4

    def jerk(self, t):
        c1, c2, c3, _, _, _ = self.coeffs
        return (60 * c1 * t + 24 * c2) * t + 6 * c3

    def boundary_residuals(self, start, end) -> np.ndarray:
        """Relative residuals of the six boundary conditions."""
        got = [self.position(0.0), self.velocity(0.0), self.acceleration(0.0),
               self.position(self.t_e), self.velocity(self.t_e), self.acceleration(self.t_e)]
        want = list(start) + list(end)
        scale = max(1.0, max(abs(w) for w in want))
        return np.abs(np.array(got, dtype=float) - np.array(want, dtype=float)) / scale


ZERO_TRAJECTORY = QuinticTrajectory((0.0,) * 6, 1.0)


def _coefficients(l0, v0, a0, le, ve, ae, T):
    """Closed-form solution of the boundary system; works on arrays."""
    c6, c5, c4 = l0, v0, 0.5 * a0
    h0 = le - (c4 * T * T + c5 * T + c6)
    h1 = ve - (2 * c4 * T + c5)
    h2 = ae - 2 * c4
    T2 = T * T
    T3 = T2 * T
    c3 = (10 * h0 - 4 * h1 * T + 0.5 * h2 * T2) / T3
    c2 = (-15 * h0 + 7 * h1 * T - h2 * T2) / (T3 * T)
    c1 = (6 * h0 - 3 * h1 * T + 0.5 * h2 * T2) / (T3 * T2)
    return c1, c2, c3, c4, c5, c6


def solve_quintic(start, end, t_e: float) -> QuinticTrajectory:
    """Quintic meeting position, velocity and acceleration at t=0 and t=t_e."""
    if not t_e > 0:
        raise ValueError(f"trajectory duration must be positive, got {t_e}")
    l0, v0, a0 = (float(x) for x in start)
    le, ve, ae = (float(x) for x in end)
    return QuinticTrajectory(tuple(float(c) for c in _coefficients(l0, v0, a0, le, ve, ae, float(t_e))),
                             float(t_e))


def jerk_cost(traj: QuinticTrajectory) -> float:
    """Integral of |l'''(t)| over [0, t_e], exact since the jerk is quadratic."""
    c1, c2, c3 = traj.coeffs[:3]
    qa, qb, qc = 60.0 * c1, 24.0 * c2, 6.0 * c3
    cuts = [0.0, traj.t_e]
    if qa != 0.0:
        disc = qb * qb - 4 * qa * qc
        if disc > 0:
            r = math.sqrt(disc)
            cuts += [(-qb - r) / (2 * qa), (-qb + r) / (2 * qa)]
    elif qb != 0.0:
        cuts.append(-qc / qb)
    cuts = sorted(t for t in cuts if 0.0 <= t <= traj.t_e)
    return float(sum(abs(traj.acceleration(b) - traj.acceleration(a)) for a, b in zip(cuts[:-1], cuts[1:])))


@dataclass(frozen=True)
class PlannerConfig:
    k: tuple = (1000.0, 10.0, 1.0, 5.0, 0.1)
    t_grid: tuple = (1.0, 2.0, 3.0, 4.0)
    v_fracs: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    stop_t_grid: tuple = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0)
    target_speed: float = 8.0
    a_max: float = 2.0
    b_min: float = -3.0
    check_dt: float = 0.1
    margin: float = 0.5
    d_ref: float = 0.0
    emergency_gap: float = 0.5

    def __post_init__(self):
        if not self.t_grid or not self.v_fracs or not self.stop_t_grid:
            raise ValueError("sampling grids must be non-empty")
        if any(w < 0 for w in self.k):
            raise ValueError("cost weights must be non-negative")


@dataclass
class CandidatePair:
    lon: QuinticTrajectory
    lat: QuinticTrajectory = ZERO_TRAJECTORY
    cost: float = math.inf
    feasible: bool = False
    collides: bool = False
    d_e: float = 0.0
    d_0: float = 0.0


@dataclass
class Predictions:
    """Constant-speed forecasts of surrounding vehicles on a time grid.

    Arrays are (n_times, n_vehicles); absent vehicles sit far away.
    """

    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    length: np.ndarray
    width: np.ndarray

    @classmethod
    def empty(cls, times):
        z = np.zeros((len(times), 0))
        return cls(np.asarray(times, dtype=float), z, z, z, np.zeros(0), np.zeros(0))


@dataclass
class PlannerView:
    """Everything the planner sees about the ego and its surroundings."""

    l0: float
    v0: float
    a0: float
    ref: object  # ReferenceLine of the ego route
    length: float
    width: float
    predictions: Predictions
    lead_gap: float | None = None
    lead_speed: float = 0.0
    d0: float = 0.0


FAR = 1e9


def predict_constant_speed(vehicles, routes, horizon: float, dt: float) -> Predictions:
    times = np.arange(1, int(round(horizon / dt)) + 1) * dt
    if not vehicles:
        return Predictions.empty(times)
    n = len(vehicles)
    x = np.full((len(times), n), FAR)
    y = np.full((len(times), n), FAR)
    h = np.zeros((len(times), n))
    for j, v in enumerate(vehicles):
        ref = routes[v.route].ref
        s = v.s + v.speed * times
        alive = s <= ref.length
        if alive.all():
            x[:, j], y[:, j], h[:, j] = ref.interpolate(s)
        elif alive.any():
            px, py, ph = ref.interpolate(s[alive])
            x[alive, j], y[alive, j], h[alive, j] = px, py, ph
    return Predictions(times, x, y, h,
                       np.array([v.length for v in vehicles]),
                       np.array([v.width for v in vehicles]))


def sweep_collides(lon: QuinticTrajectory, view: PlannerView, cfg: PlannerConfig) -> bool:
    """Swept box check of the candidate against the forecasts over its horizon."""
    pred = view.predictions
    if pred.x.shape[1] == 0:
        return False
    n = min(int(round(lon.t_e / cfg.check_dt)), len(pred.times))
    t = pred.times[:n]
    l = np.minimum(np.maximum(lon.position(t), 0.0), view.ref.length)
    ex, ey, eh = view.ref.interpolate(l)
    px, py = pred.x[:n], pred.y[:n]
    reach = 0.5 * (math.hypot(view.length, view.width) + 2 * cfg.margin + np.hypot(pred.length, pred.width))
    close = (px - ex[:, None]) ** 2 + (py - ey[:, None]) ** 2 <= reach[None, :] ** 2
    if not close.any():
        return False
    ti, vj = np.nonzero(close)
    hit = obb_overlap_arrays(ex[ti], ey[ti], eh[ti], view.length + 2 * cfg.margin, view.width + 2 * cfg.margin,
                             px[ti, vj], py[ti, vj], pred.heading[ti, vj], pred.length[vj], pred.width[vj])
    return bool(hit.any())


@functools.lru_cache(maxsize=64)
def _grid(t_e: float, dt: float) -> np.ndarray:
    return np.linspace(0.0, t_e, max(int(round(t_e / dt)), 1) + 1)


def kinematically_feasible(lon: QuinticTrajectory, cfg: PlannerConfig) -> bool:
    t = _grid(lon.t_e, cfg.check_dt)
    acc = lon.acceleration(t)
    vel = lon.velocity(t)
    tol = 1e-6
    return bool(acc.max() <= cfg.a_max + tol and acc.min() >= cfg.b_min - tol and vel.min() >= -0.05)


def trajectory_cost(pair: CandidatePair, predictions, cfg: PlannerConfig, mode: FsmMode,
                    view: PlannerView | None = None) -> float:
    """Weighted sum of collision, speed, duration, lateral and jerk terms.

    ``predictions`` is either a collision flag already evaluated for the
    pair or a :class:`Predictions` set, in which case ``view`` supplies the
    ego geometry.
    """
    if isinstance(predictions, (bool, np.bool_)):
        coll = float(predictions)
    else:
        coll = float(sweep_collides(pair.lon, replace(view, predictions=predictions), cfg))
    v_hat = 0.0 if mode == FsmMode.SLOW_TO_STOP else cfg.target_speed
    t_e = pair.lon.t_e
    v_le = float(pair.lon.velocity(t_e))
    v_de = float(pair.lat.velocity(pair.lat.t_e))
    phi_v = abs(math.hypot(v_le, v_de) - v_hat)
    phi_d = abs(pair.d_e - pair.d_0) + abs(pair.d_e - cfg.d_ref)
    phi_jerk = jerk_cost(pair.lon) + jerk_cost(pair.lat)
    k1, k2, k3, k4, k5 = cfg.k
    return k1 * coll + k2 * phi_v + k3 * t_e + k4 * phi_d + k5 * phi_jerk


def fsm_transition(drive_available: bool, stop_available: bool, lead_gap: float | None = None,
                   cfg: PlannerConfig | None = None) -> FsmMode:
    emergency_gap = (cfg or PlannerConfig()).emergency_gap
    if lead_gap is not None and lead_gap < emergency_gap:
        return FsmMode.EMERGENCY_BRAKE
    if drive_available:
        return FsmMode.DRIVE
    if stop_available:
        return FsmMode.SLOW_TO_STOP
    return FsmMode.EMERGENCY_BRAKE


def drive_candidates(view: PlannerView, cfg: PlannerConfig) -> list:
    out = []
    for t_e in cfg.t_grid:
        for f in cfg.v_fracs:
            v_le = f * cfg.target_speed
            l_e = view.l0 + 0.5 * (view.v0 + v_le) * t_e
            lon = solve_quintic((view.l0, view.v0, view.a0), (l_e, v_le, 0.0), t_e)
            out.append(CandidatePair(lon, d_e=cfg.d_ref, d_0=view.d0))
    return out


def stop_candidates(view: PlannerView, cfg: PlannerConfig) -> list:
    out = []
    for t_e in cfg.stop_t_grid:
        l_e = view.l0 + 0.5 * view.v0 * t_e
        lon = solve_quintic((view.l0, view.v0, view.a0), (l_e, 0.0, 0.0), t_e)
        out.append(CandidatePair(lon, d_e=cfg.d_ref, d_0=view.d0))
    return out


def select_candidate(cands: list, view: PlannerView, cfg: PlannerConfig, mode: FsmMode):
    """Cheapest kinematically feasible, collision-free candidate, or None.

    Candidates are checked in order of their collision-free cost, so the
    first clear one is the minimum-cost feasible candidate.
    """
    scored = []
    for i, c in enumerate(cands):
        if not kinematically_feasible(c.lon, cfg):
            continue
        scored.append((trajectory_cost(c, False, cfg, mode), i, c))
    scored.sort(key=lambda t: (t[0], t[1]))
    for cost, _, c in scored:
        if sweep_collides(c.lon, view, cfg):
            c.collides = True
            continue
        c.cost, c.feasible = cost, True
        return c
    return None


def plan_base_action(view: PlannerView, cfg: PlannerConfig, idm) -> tuple:
    """(a_base, chosen candidate or None, mode)."""
    from .world import idm_accel

    a_idm = idm_accel(view.v0, view.lead_gap, view.lead_speed, idm, cfg.target_speed)
    chosen = None
    if view.lead_gap is not None and view.lead_gap < cfg.emergency_gap:
        mode = FsmMode.EMERGENCY_BRAKE
    else:
        chosen = select_candidate(drive_candidates(view, cfg), view, cfg, FsmMode.DRIVE)
        stop = None
        if chosen is None:
            stop = select_candidate(stop_candidates(view, cfg), view, cfg, FsmMode.SLOW_TO_STOP)
        mode = fsm_transition(chosen is not None, stop is not None, view.lead_gap, cfg)
        chosen = chosen or stop
    if mode == FsmMode.EMERGENCY_BRAKE:
        a_t1 = cfg.b_min
    else:
        t1 = cfg.check_dt
        l_acc = float(chosen.lon.acceleration(t1))
        d_acc = float(chosen.lat.acceleration(t1))
        a_t1 = math.copysign(math.hypot(l_acc, d_acc), l_acc)
    a_base = min(a_t1, a_idm)
    return min(max(a_base, cfg.b_min), cfg.a_max), chosen, mode


def ego_idm(spec):
    from .world import IdmParams

    return IdmParams(spec.ego_a_max, spec.ego_b_min, 2.0, spec.ego_target_speed, 1.5)


def planner_config(spec, **overrides) -> PlannerConfig:
    base = dict(target_speed=spec.ego_target_speed, a_max=spec.ego_a_max, b_min=spec.ego_b_min, check_dt=spec.dt)
    base.update(overrides)
    return PlannerConfig(**base)


def view_from_world(world, cfg: PlannerConfig, radius: float = 80.0) -> PlannerView:
    """Planner input for the world's ego: its route state plus forecasts."""
    ego = world.ego
    if ego is None:
        raise ValueError("planning needs an ego vehicle")
    others = [v for v in world.vehicles.values()
              if not v.is_ego and (v.x - ego.x) ** 2 + (v.y - ego.y) ** 2 < radius * radius]
    horizon = max(max(cfg.t_grid), max(cfg.stop_t_grid))
    pred = predict_constant_speed(others, world.net.routes, horizon, cfg.check_dt)
    lead = world.leader_on(ego.route, ego.s, exclude=ego.id)
    gap, speed = None, 0.0
    if lead is not None:
        gap = lead[1] - ego.s - 0.5 * (ego.length + lead[0].length)
        speed = lead[0].speed
    return PlannerView(ego.s, ego.speed, ego.accel, world.net.routes[ego.route].ref, ego.length, ego.width,
                       pred, gap, speed)
