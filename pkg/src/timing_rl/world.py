"""Deterministic traffic microsimulation around a single ego vehicle.

Human-driven vehicles follow their leaders with IDM.  Near a crossing or
merge point shared with another vehicle they decide whether to cross or
yield: against the ego through the level-k game, against each other by
arrival-time priority.  A yielding vehicle runs IDM against a virtual
stopped leader placed before the conflict point.
"""
from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import game
from .geometry import advance, obb_overlap_arrays, polyline_intersections
from .scenario import Network, ScenarioSpec, build_network

EMERGENCY_DECEL = -9.0
WAIT_SPEED = 0.5
LOOKAHEAD = 100.0
STOP_MARGIN = 1.0
INSIDE_GAP = 2.0


@dataclass(frozen=True)
class IdmParams:
    a_max: float = 2.0
    b_min: float = -3.0
    d_min: float = 2.0
    v_cf: float = 10.0
    headway: float = 1.5

    def __post_init__(self):
        if self.a_max <= 0 or self.b_min >= 0 or self.v_cf <= 0:
            raise ValueError("IDM needs a_max > 0, b_min < 0 and v_cf > 0")


def idm_accel(speed, gap, leader_speed, p: IdmParams, v_desired: float | None = None) -> float:
    """Clamped IDM acceleration; ``gap=None`` means free road.

    ``speed`` may also be a state object with a ``speed`` attribute.
    """
    v = float(getattr(speed, "speed", speed))
    v0 = p.v_cf if v_desired is None else v_desired
    a = p.a_max * (1.0 - (v / v0) ** 4) if v0 > 0 else p.b_min
    if gap is not None:
        dv = v - leader_speed
        s_star = p.d_min + max(0.0, v * p.headway + v * dv / (2.0 * math.sqrt(p.a_max * abs(p.b_min))))
        a -= p.a_max * (s_star / max(gap, 1e-6)) ** 2
    return min(max(a, p.b_min), p.a_max)


def conflict_points(path_a, path_b):
    """Transversal crossings of two reference lines as (l_a, l_b, (x, y))."""
    out = []
    for i, ta, j, tb, x, y in polyline_intersections(path_a.xy, path_b.xy):
        la = float(path_a.s[i] + ta * path_a.seg_len[i])
        lb = float(path_b.s[j] + tb * path_b.seg_len[j])
        out.append((la, lb, (x, y)))
    return out


@dataclass
class Vehicle:
    id: int
    route: int
    s: float
    speed: float
    length: float
    width: float
    idm: IdmParams
    params: game.GameParams | None
    v_cr: float
    spawn_time: float
    accel: float = 0.0
    wait: float = 0.0
    is_ego: bool = False
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    decisions: dict = field(default_factory=dict)  # (other id, conflict idx) -> (decision, expiry)

    def copy(self) -> "Vehicle":
        v = Vehicle(**{k: getattr(self, k) for k in self.__dataclass_fields__})
        v.decisions = dict(self.decisions)
        return v

    def to_json(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k not in ("idm", "params", "decisions")}
        d["idm"] = [self.idm.a_max, self.idm.b_min, self.idm.d_min, self.idm.v_cf, self.idm.headway]
        if self.params is not None:
            p = self.params
            d["params"] = [p.alpha1, p.alpha2, p.alpha3, p.alpha4, p.svo]
        d["decisions"] = sorted([list(k) + list(v) for k, v in self.decisions.items()])
        return d


@dataclass
class StepEvents:
    collided: bool = False
    reached: bool = False
    collided_with: int | None = None
    spawned: list = field(default_factory=list)
    despawned: list = field(default_factory=list)


@functools.lru_cache(maxsize=8)
def cached_network(spec: ScenarioSpec) -> Network:
    return build_network(spec)


class TrafficWorld:
    """All vehicles, the spawn process and its random stream."""

    def __init__(self, spec: ScenarioSpec, seed: int, network: Network | None = None):
        self.spec = spec
        self.net = network if network is not None else cached_network(spec)
        self.rng = np.random.Generator(np.random.PCG64(seed))
        self.clock = 0.0
        self.last_reset = 0.0
        self.vehicles: dict[int, Vehicle] = {}
        self.ego_id: int | None = None
        self.next_id = 0
        self.pending: dict[int, list] = {lane: [] for lane in range(len(self.net.lanes))}
        self.next_spawn = self._headway()
        self.spawn_log: list[float] = []

    # -- bookkeeping -------------------------------------------------------

    @property
    def ego(self) -> Vehicle | None:
        return self.vehicles.get(self.ego_id) if self.ego_id is not None else None

    def clone(self, seed: int | None = None) -> "TrafficWorld":
        """Independent copy.  ``seed`` forks a fresh random stream."""
        w = TrafficWorld.__new__(TrafficWorld)
        w.spec = self.spec
        w.net = self.net
        if seed is None:
            w.rng = np.random.Generator(np.random.PCG64())
            w.rng.bit_generator.state = self.rng.bit_generator.state
        else:
            w.rng = np.random.Generator(np.random.PCG64(seed))
        w.clock = self.clock
        w.last_reset = self.last_reset
        w.vehicles = {k: v.copy() for k, v in self.vehicles.items()}
        w.ego_id = self.ego_id
        w.next_id = self.next_id
        w.pending = {k: list(v) for k, v in self.pending.items()}
        w.next_spawn = self.next_spawn
        w.spawn_log = list(self.spawn_log)
        return w

    def serialize(self) -> bytes:
        state = {
            "clock": self.clock,
            "last_reset": self.last_reset,
            "ego": self.ego_id,
            "next_id": self.next_id,
            "next_spawn": self.next_spawn,
            "pending": {str(k): v for k, v in self.pending.items()},
            "vehicles": [self.vehicles[k].to_json() for k in sorted(self.vehicles)],
            "rng": self.rng.bit_generator.state,
        }
        return json.dumps(state, sort_keys=True, default=_json_default).encode()

    def _headway(self) -> float:
        extra = self.spec.t_spawn - self.spec.min_headway
        return self.spec.min_headway + float(self.rng.exponential(extra))

    def _draw_vehicle_params(self, lane: int) -> list:
        sp, u = self.spec, self.rng.uniform
        routes = self.net.lane_routes[lane]
        route = int(routes[self.rng.integers(len(routes))])
        return [route, u(*sp.a_max), u(*sp.b_min), u(*sp.d_min), u(*sp.v_cf), u(*sp.headway),
                u(*sp.alpha1), u(*sp.alpha2), u(*sp.alpha3), u(*sp.alpha4), u(*sp.svo), u(*sp.v_cr)]

    def update_pose(self, v: Vehicle):
        v.x, v.y, v.heading = self.net.routes[v.route].ref.interpolate_scalar(v.s)

    def lane_blocked(self, lane: int) -> bool:
        routes = set(self.net.lane_routes[lane])
        for v in self.vehicles.values():
            if v.route in routes and v.s - 0.5 * v.length < self.spec.spawn_clear:
                return True
        return False

    def leader_on(self, route: int, s: float, exclude: int | None = None):
        """Nearest vehicle ahead along ``route`` from arc ``s``: (vehicle, l_ahead) or None."""
        best = None
        for v in self.vehicles.values():
            if v.id == exclude:
                continue
            la = self.project_onto(route, v)
            if la is None or la <= s or la - s > LOOKAHEAD:
                continue
            if best is None or la < best[1]:
                best = (v, la)
        return best

    def project_onto(self, route: int, v: Vehicle):
        """Arc position of ``v`` on ``route`` when it drives on a shared stretch."""
        if v.route == route:
            return v.s
        for a0, a1, off in self.net.shared.get((route, v.route), ()):
            la = v.s + off
            if a0 - 1e-6 <= la <= a1 + 1e-6:
                return la
        return None

    def _add(self, params: list, is_ego=False, speed=None) -> Vehicle:
        sp = self.spec
        route = params[0]
        idm = IdmParams(params[1], params[2], params[3], params[4], params[5])
        gp = game.GameParams(*params[6:11]) if not is_ego else None
        veh = Vehicle(self.next_id, route, 0.5 * sp.length, 0.0, sp.length, sp.width, idm, gp,
                      params[11], self.clock, is_ego=is_ego)
        if speed is None:
            lead = self.leader_on(route, veh.s)
            speed = idm.v_cf
            if lead is not None:
                gap = lead[1] - veh.s - 0.5 * (veh.length + lead[0].length)
                speed = min(speed, max((gap - idm.d_min) / idm.headway, lead[0].speed, 0.0))
        veh.speed = float(speed)
        self.next_id += 1
        self.vehicles[veh.id] = veh
        self.update_pose(veh)
        return veh

    def spawn_ego(self, lane: int | None = None, route: int | None = None) -> Vehicle | None:
        """Place the ego at rest at the start of a free entry lane."""
        sp = self.spec
        if lane is None:
            free = [k for k in range(len(self.net.lanes)) if not self.lane_blocked(k)]
            if not free:
                return None
            lane = free[int(self.rng.integers(len(free)))]
        if route is None:
            routes = self.net.lane_routes[lane]
            route = int(routes[self.rng.integers(len(routes))])
        params = [route, sp.ego_a_max, sp.ego_b_min, 2.0, sp.ego_target_speed, 1.5, 0, 0, 0, 0, 0, sp.ego_target_speed]
        ego = self._add(params, is_ego=True, speed=0.0)
        self.ego_id = ego.id
        return ego

    def remove_ego(self):
        if self.ego_id is not None:
            self.vehicles.pop(self.ego_id, None)
        self.ego_id = None

    def reset_traffic(self):
        """Clear all traffic (the periodic full simulation reset)."""
        self.vehicles = {k: v for k, v in self.vehicles.items() if v.is_ego}
        self.pending = {lane: [] for lane in self.pending}
        self.last_reset = self.clock
        self.next_spawn = self.clock + self._headway()


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(type(o))


def build_scenario(spec: ScenarioSpec, seed: int) -> TrafficWorld:
    return TrafficWorld(spec, seed)


def spawn_step(world: TrafficWorld) -> list:
    """Release due departures.  Returns the ids of spawned vehicles."""
    sp = world.spec
    while world.clock + 1e-9 >= world.next_spawn:
        lane = int(world.rng.integers(len(world.net.lanes)))
        params = world._draw_vehicle_params(lane)
        if len(world.pending[lane]) < sp.max_pending:
            world.pending[lane].append(params)
        world.spawn_log.append(world.next_spawn)
        world.next_spawn += world._headway()
    spawned = []
    for lane, queue in world.pending.items():
        if queue and not world.lane_blocked(lane):
            veh = world._add(queue.pop(0))
            spawned.append(veh.id)
    return spawned


# -- driver behaviour -------------------------------------------------------


def _desired_speed(world: TrafficWorld, v: Vehicle) -> float:
    r = world.net.routes[v.route]
    if v.s >= r.weave_out:
        return v.idm.v_cf
    if v.s >= r.weave_in:
        return v.v_cr
    return min(v.idm.v_cf, math.sqrt(v.v_cr**2 + 2.0 * 1.5 * (r.weave_in - v.s)))


def _conflict_view(v: Vehicle, dist: float, v_target: float) -> game.ConflictView:
    return game.ConflictView(max(dist, 0.0), v.speed, v.wait, v.idm.a_max, v.idm.b_min, v_target, v.accel)


def _contentions(world: TrafficWorld, v: Vehicle, near):
    """Active (other, conflict index, own distance, other distance) tuples."""
    radius = world.spec.game_radius
    out = []
    for o in near:
        pts = world.net.conflicts.get((v.route, o.route))
        if not pts:
            continue
        for k, (la, lb) in enumerate(pts):
            di = la - v.s
            dj = lb - o.s
            ci = 0.5 * (v.length + o.width) + 0.5
            cj = 0.5 * (o.length + v.width) + 0.5
            if -ci < di <= radius and -cj < dj <= radius:
                out.append((o, k, di, dj, ci, cj))
    return out


def _stop_line_gap(world: TrafficWorld, v: Vehicle) -> float:
    return world.net.routes[v.route].weave_in - v.s - 0.5 * v.length


def _inside(world: TrafficWorld, v: Vehicle) -> bool:
    r = world.net.routes[v.route]
    return r.weave_in <= v.s < r.weave_out


def _cannot_stop(v: Vehicle, gap: float) -> bool:
    return v.speed**2 / (2.0 * abs(v.idm.b_min)) > gap


def _entry_key(world: TrafficWorld, v: Vehicle):
    """Priority among vehicles still outside the weaving area.

    Earlier stop-line arrival first, credited with time already waited; a
    single scalar per vehicle so priorities can never form a cycle.
    """
    view = _conflict_view(v, max(_stop_line_gap(world, v), 0.0), v.v_cr)
    return (game.arrival(view, game.CROSS) - v.wait, v.id)


def _hv_decision(world: TrafficWorld, v: Vehicle, o: Vehicle, k: int, di, dj, ci, cj, keys=None) -> str:
    if di <= ci:
        return game.CROSS  # already occupying the conflict zone
    if o.is_ego:
        if abs(dj) <= cj:
            return game.YIELD
        if _cannot_stop(v, di - ci):
            return game.CROSS
        key = (o.id, k)
        cached = v.decisions.get(key)
        if cached is not None and cached[1] > world.clock + 1e-9:
            return cached[0]
        hv_view = _conflict_view(v, di, v.v_cr)
        ego_view = _conflict_view(o, dj, o.v_cr)
        d = game.level_k_decide(hv_view, ego_view, v.params)
        v.decisions[key] = (d, world.clock + world.spec.game_period)
        return d
    # human vs human: vehicles inside the weaving area are committed, the
    # others yield to them and among themselves by stop-line arrival order
    if _inside(world, v):
        return game.CROSS
    if _cannot_stop(v, _stop_line_gap(world, v)):
        return game.CROSS
    if _inside(world, o):
        if abs(dj) <= cj:
            return game.YIELD
        t_o = game.arrival(_conflict_view(o, dj, o.v_cr), game.CROSS)
        t_v = game.arrival(_conflict_view(v, di, v.v_cr), game.CROSS)
        return game.YIELD if t_o < t_v + INSIDE_GAP else game.CROSS
    if _cannot_stop(o, _stop_line_gap(world, o)):
        return game.YIELD
    if keys is None:
        return game.CROSS if _entry_key(world, v) < _entry_key(world, o) else game.YIELD
    # entry keys only change between steps
    for u in (v, o):
        if u.id not in keys:
            keys[u.id] = _entry_key(world, u)
    return game.CROSS if keys[v.id] < keys[o.id] else game.YIELD


def _hv_accel(world: TrafficWorld, v: Vehicle, near, keys=None) -> float:
    p = v.idm
    v0 = _desired_speed(world, v)
    gap = None
    lead = None
    best = None
    shared = world.net.shared
    for o in near:
        if o.route != v.route and not shared.get((v.route, o.route)):
            continue
        la = world.project_onto(v.route, o)
        if la is None or la < v.s or (la == v.s and o.id > v.id):
            continue
        if best is None or la < best[1]:
            best = (o, la)
    if best is not None:
        lead = best[0]
        gap = best[1] - v.s - 0.5 * (v.length + lead.length)
    a = idm_accel(v.speed, gap, lead.speed if lead else 0.0, p, v0)
    for o, k, di, dj, ci, cj in _contentions(world, v, near):
        if _hv_decision(world, v, o, k, di, dj, ci, cj, keys) == game.YIELD:
            stop_gap = di - 0.5 * o.width - STOP_MARGIN - 0.5 * v.length
            if not o.is_ego and not _inside(world, v):
                stop_gap = min(stop_gap, _stop_line_gap(world, v))
            a_yield = idm_accel(v.speed, max(stop_gap, 0.1), 0.0, p, v0)
            # yielding never speeds up, except creeping below the creep speed
            a = min(a, a_yield if v.speed < game.CREEP_SPEED else min(a_yield, 0.0))
    if lead is not None:
        # emergency braking beyond the IDM clamp to avoid rear-end contact
        dt = world.spec.dt
        nxt = gap + (lead.speed - v.speed) * dt - 0.5 * a * dt * dt
        if nxt < 0.2:
            need = 2.0 * (gap + (lead.speed - v.speed) * dt - 0.2) / (dt * dt)
            a = max(min(a, need), EMERGENCY_DECEL)
    return a


def world_step(world: TrafficWorld, ego_accel: float, dt: float | None = None):
    """Advance every vehicle by one step.  Mutates and returns ``world``."""
    sp = world.spec
    dt = sp.dt if dt is None else dt
    if dt <= 0:
        raise ValueError("dt must be positive")
    events = StepEvents()
    vehs = list(world.vehicles.values())
    if vehs:
        xy = np.array([[v.x, v.y] for v in vehs])
        d2 = ((xy[:, None, :] - xy[None, :, :]) ** 2).sum(-1)
        reach = (LOOKAHEAD + 10.0) ** 2
    accels = {}
    keys = {}
    for i, v in enumerate(vehs):
        if v.is_ego:
            continue
        near = [vehs[j] for j in np.nonzero(d2[i] < reach)[0] if j != i]
        accels[v.id] = _hv_accel(world, v, near, keys)
    for v in vehs:
        if v.is_ego:
            a = min(max(float(ego_accel), sp.ego_b_min), sp.ego_a_max)
        else:
            a = accels[v.id]
        ds, v.speed = advance(v.speed, a, dt)
        v.accel = a
        v.s = min(v.s + ds, world.net.routes[v.route].length)
        r = world.net.routes[v.route]
        if v.speed < WAIT_SPEED and v.s < r.weave_out:
            v.wait += dt
        world.update_pose(v)
    world.clock += dt
    ego = world.ego
    if ego is not None:
        others = [v for v in world.vehicles.values() if not v.is_ego]
        if others:
            ox = np.array([o.x for o in others])
            oy = np.array([o.y for o in others])
            oh = np.array([o.heading for o in others])
            ol = np.array([o.length for o in others])
            ow = np.array([o.width for o in others])
            hit = obb_overlap_arrays(ego.x, ego.y, ego.heading, ego.length, ego.width, ox, oy, oh, ol, ow)
            if hit.any():
                events.collided = True
                events.collided_with = others[int(np.argmax(hit))].id
        if not events.collided and ego.s >= world.net.routes[ego.route].length - 1e-6:
            events.reached = True
    for v in list(world.vehicles.values()):
        if not v.is_ego and v.s >= world.net.routes[v.route].length - 1e-6:
            del world.vehicles[v.id]
            events.despawned.append(v.id)
    events.spawned = spawn_step(world)
    return world, events
