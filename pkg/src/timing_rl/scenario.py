"""Scenario description, config files and road-network construction."""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .geometry import RESOLUTION, ReferenceLine, polyline_intersections, wrap_angles

TASKS = ("straight", "left", "right")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str = "intersection"
    lane_width: float = 3.2
    approach_length: float = 60.0
    box_half: float = 16.0
    ring_inner: float = 14.4
    ring_outer: float = 17.6
    t_sim: float = 5000.0
    t_spawn: float = 1.8
    min_headway: float = 0.5
    spawn_clear: float = 10.0
    max_pending: int = 10
    dt: float = 0.1
    warmup: float = 60.0
    episode_timeout: float = 60.0
    game_radius: float = 30.0
    game_period: float = 0.5
    # vehicle population ranges
    length: float = 5.0
    width: float = 2.0
    a_max: tuple = (1.5, 3.0)
    b_min: tuple = (-4.5, -2.0)
    d_min: tuple = (2.0, 4.0)
    v_cf: tuple = (8.0, 12.0)
    v_cr: tuple = (4.5, 6.0)
    headway: tuple = (1.0, 2.0)
    alpha1: tuple = (0.5, 0.8)
    alpha2: tuple = (0.05, 0.2)
    alpha3: tuple = (0.05, 0.2)
    alpha4: tuple = (0.05, 0.2)
    svo: tuple = (0.0, 0.5)
    k: int = 2
    # ego
    ego_a_max: float = 2.0
    ego_b_min: float = -3.0
    ego_target_speed: float = 8.0
    obs_range: float = 60.0
    obs_v_max: float = 15.0
    reward_v_min: float = 0.0

    def __post_init__(self):
        if self.kind not in ("intersection", "roundabout"):
            raise ScenarioError(f"kind: unknown scenario kind {self.kind!r}")
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                if len(v) != 2 or not v[0] <= v[1]:
                    raise ScenarioError(f"{f.name}: range must be 'lo, hi' with lo <= hi, got {v}")
        positive = ("lane_width", "approach_length", "t_sim", "t_spawn", "dt", "length", "width",
                    "episode_timeout", "ego_target_speed", "obs_range", "obs_v_max")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ScenarioError(f"{name}: must be positive")
        if self.min_headway >= self.t_spawn:
            raise ScenarioError("min_headway: must be smaller than t_spawn")
        if self.k != 2:
            raise ScenarioError("k: only level-2 reasoning is supported")

    @property
    def reward_v_max(self) -> float:
        return self.ego_target_speed


_SECTIONS = {
    "scenario": ("kind", "lane_width", "approach_length", "box_half", "ring_inner", "ring_outer",
                 "t_sim", "t_spawn", "min_headway", "spawn_clear", "max_pending", "dt", "warmup",
                 "episode_timeout"),
    "vehicles": ("length", "width", "a_max", "b_min", "d_min", "v_cf", "v_cr", "headway"),
    "game": ("alpha1", "alpha2", "alpha3", "alpha4", "svo", "k", "game_radius", "game_period"),
    "ego": ("ego_a_max", "ego_b_min", "ego_target_speed", "obs_range", "obs_v_max", "reward_v_min"),
}


def _parse_value(proto, raw: str, name: str):
    raw = raw.strip()
    try:
        if isinstance(proto, tuple):
            lo, hi = (float(x) for x in raw.split(","))
            return (lo, hi)
        if isinstance(proto, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(proto, int):
            return int(raw)
        if isinstance(proto, float):
            return float(raw)
    except ValueError as exc:
        raise ScenarioError(f"{name}: cannot parse {raw!r}") from exc
    return raw


def spec_from_parser(cp: configparser.ConfigParser, **overrides) -> ScenarioSpec:
    base = ScenarioSpec()
    kw = {}
    for section, names in _SECTIONS.items():
        if not cp.has_section(section):
            continue
        for key, raw in cp.items(section):
            if key not in names:
                raise ScenarioError(f"{key}: unknown key in [{section}]")
            kw[key] = _parse_value(getattr(base, key), raw, key)
    kw.update(overrides)
    return ScenarioSpec(**kw)


def load_scenario(path, **overrides) -> ScenarioSpec:
    """Read a scenario file, or one of the shipped presets by name."""
    cp = configparser.ConfigParser()
    p = Path(path)
    if not p.exists() and str(path) in ("intersection", "roundabout"):
        text = resources.files("timing_rl").joinpath(f"presets/{path}.cfg").read_text()
        cp.read_string(text)
    else:
        if not p.exists():
            raise FileNotFoundError(f"scenario file not found: {path}")
        cp.read(p)
    return spec_from_parser(cp, **overrides)


def dump_scenario(spec: ScenarioSpec) -> str:
    lines = []
    for section, names in _SECTIONS.items():
        lines.append(f"[{section}]")
        for n in names:
            v = getattr(spec, n)
            if isinstance(v, tuple):
                v = f"{v[0]!r}, {v[1]!r}"
            lines.append(f"{n} = {v}")
        lines.append("")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# road network


@dataclass
class Route:
    name: str
    ref: ReferenceLine
    lane: int
    task: str
    weave_in: float
    weave_out: float

    @property
    def length(self) -> float:
        return self.ref.length


@dataclass
class Network:
    kind: str
    routes: list
    lanes: list  # entry-lane names
    lane_routes: dict  # lane index -> route indices
    conflicts: dict = field(default_factory=dict)  # (a, b) -> [(l_a, l_b), ...]
    shared: dict = field(default_factory=dict)  # (a, b) -> [(a0, a1, offset)], l_b = l_a - offset


def _line(p0, p1):
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    n = max(int(math.ceil(np.hypot(*(p1 - p0)) / 0.1)), 1)
    t = np.linspace(0.0, 1.0, n + 1)[:, None]
    return p0 + (p1 - p0) * t


def _arc(center, radius, a0, a1):
    n = max(int(math.ceil(abs(a1 - a0) * radius / 0.1)), 2)
    a = np.linspace(a0, a1, n + 1)
    return np.stack([center[0] + radius * np.cos(a), center[1] + radius * np.sin(a)], axis=1)


def _hermite(p0, h0, p1, h1):
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    chord = float(np.hypot(*(p1 - p0)))
    m0 = chord * np.array([math.cos(h0), math.sin(h0)])
    m1 = chord * np.array([math.cos(h1), math.sin(h1)])
    n = max(int(math.ceil(chord * 1.5 / 0.1)), 4)
    t = np.linspace(0.0, 1.0, n + 1)[:, None]
    h00 = 2 * t**3 - 3 * t**2 + 1
    h10 = t**3 - 2 * t**2 + t
    h01 = -2 * t**3 + 3 * t**2
    h11 = t**3 - t**2
    return h00 * p0 + h10 * m0 + h01 * p1 + h11 * m1


def _chain(*parts):
    pts = [parts[0]]
    for p in parts[1:]:
        pts.append(p[1:])
    return np.concatenate(pts)


def _rot(pts, ang):
    c, s = math.cos(ang), math.sin(ang)
    return pts @ np.array([[c, s], [-s, c]])


def _make_route(name, pts, lane, task, w_in_pts, w_out_pts):
    """Build a route; the weaving interval spans the given point counts."""
    ref = ReferenceLine(pts, resample=RESOLUTION)
    raw = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
    scale = ref.length / raw[-1]
    return Route(name, ref, lane, task, float(raw[w_in_pts] * scale), float(raw[w_out_pts] * scale))


def _intersection_routes(spec: ScenarioSpec):
    w, H, L = spec.lane_width, spec.box_half, spec.approach_length
    left, straight, right = 0.5 * w, 1.5 * w, 2.5 * w
    canon = {}
    entry = _line((left, -L), (left, -H))
    conn = _arc((-H, -H), H + left, 0.0, math.pi / 2)
    exit_ = _line((-H, left), (-L, left))
    canon["left"] = (entry, conn, exit_)
    entry = _line((straight, -L), (straight, -H))
    conn = _line((straight, -H), (straight, H))
    exit_ = _line((straight, H), (straight, L))
    canon["straight"] = (entry, conn, exit_)
    entry = _line((right, -L), (right, -H))
    conn = _arc((H, -H), H - right, math.pi, math.pi / 2)
    exit_ = _line((H, -right), (L, -right))
    canon["right"] = (entry, conn, exit_)
    routes, lanes = [], []
    for k, road in enumerate("SENW"):
        for task in ("right", "straight", "left"):
            e, c, x = (_rot(p, k * math.pi / 2) for p in canon[task])
            pts = _chain(e, c, x)
            lane = len(lanes)
            lanes.append(f"{road}-{task}")
            routes.append(_make_route(f"{road}-{task}", pts, lane, task, len(e) - 1, len(e) + len(c) - 2))
    return routes, lanes


def _roundabout_routes(spec: ScenarioSpec):
    w, L = spec.lane_width, spec.approach_length
    r_in, r_out = spec.ring_inner, spec.ring_outer
    D = r_out + 12.0
    roads = {"S": -math.pi / 2, "E": 0.0, "N": math.pi / 2, "W": math.pi}
    two_lane = {"S", "N"}
    routes, lanes = [], []
    order = ["S", "E", "N", "W"]
    for road in order:
        psi = roads[road]
        u = np.array([math.cos(psi), math.sin(psi)])
        right_in = np.array([-u[1], u[0]])  # right-hand side when driving inward (-u)
        if road in two_lane:
            entry_lanes = [("outer", 1.5 * w, r_out, ("right", "straight")),
                           ("inner", 0.5 * w, r_in, ("straight", "left"))]
        else:
            entry_lanes = [("single", 0.5 * w, r_out, ("right", "straight", "left"))]
        for lname, off, radius, tasks in entry_lanes:
            lane = len(lanes)
            lanes.append(f"{road}-{lname}")
            start = L * u + off * right_in
            join = D * u + off * right_in
            th_in = psi + math.pi / 6
            ring_in = radius * np.array([math.cos(th_in), math.sin(th_in)])
            approach = _line(start, join)
            merge = _hermite(join, psi + math.pi, ring_in, th_in + math.pi / 2)
            for task in tasks:
                turn = {"right": 1, "straight": 2, "left": 3}[task]
                psi_e = psi + turn * math.pi / 2
                th_out = psi_e - math.pi / 6
                ring = _arc((0.0, 0.0), radius, th_in, th_out if th_out > th_in else th_out + 2 * math.pi)
                exit_road = order[(order.index(road) + turn) % 4]
                ue = np.array([math.cos(psi_e), math.sin(psi_e)])
                right_out = np.array([ue[1], -ue[0]])
                if exit_road in two_lane:
                    x_off = 1.5 * w if radius == r_out else 0.5 * w
                else:
                    x_off = 0.5 * w
                ring_out = ring[-1]
                ex_start = D * ue + x_off * right_out
                diverge = _hermite(ring_out, th_out + math.pi / 2, ex_start, psi_e)
                leave = _line(ex_start, L * ue + x_off * right_out)
                pts = _chain(approach, merge, ring, diverge, leave)
                routes.append(_make_route(f"{road}-{lname}-{task}", pts, lane, task,
                                          len(approach) - 1, len(pts) - len(leave)))
    return routes, lanes


def _nearest_on(b: Route, pts: np.ndarray):
    """Distance, arc position and heading of the closest point on ``b``."""
    a0 = b.ref.xy[:-1]
    e = b.ref.xy[1:] - a0
    q = pts[:, None, :] - a0[None, :, :]
    t = np.clip((q * e[None]).sum(-1) / (b.ref.seg_len**2)[None], 0.0, 1.0)
    r = q - t[..., None] * e[None]
    d = np.hypot(r[..., 0], r[..., 1])
    j = np.argmin(d, axis=1)
    k = np.arange(len(pts))
    return d[k, j], b.ref.s[j] + t[k, j] * b.ref.seg_len[j], b.ref.seg_heading[j]


def _shared_intervals(a: Route, b: Route, tol: float = 0.05):
    """Stretches of route ``a`` that lie on route ``b`` as (a0, a1, l_a - l_b)."""
    dist, lb, hb = _nearest_on(b, a.ref.xy)
    ha = a.ref.interpolate(a.ref.s)[2]
    close = (dist < tol) & (np.abs(wrap_angles(ha - hb)) < 0.2)
    out = []
    i = 0
    n = len(close)
    while i < n:
        if not close[i]:
            i += 1
            continue
        k = i
        while k + 1 < n and close[k + 1]:
            k += 1
        if k > i:
            offs = a.ref.s[i:k + 1] - lb[i:k + 1]
            out.append((float(a.ref.s[i]), float(a.ref.s[k]), float(np.median(offs))))
        i = k + 1
    return out


def _conflicts(a: Route, b: Route, shared_ab):
    """Crossing and merge points between two routes as (l_a, l_b)."""
    pts = []
    ha_all = a.ref.seg_heading
    hb_all = b.ref.seg_heading
    for i, ta, j, tb, _, _ in polyline_intersections(a.ref.xy, b.ref.xy):
        if abs(math.remainder(ha_all[i] - hb_all[j], 2 * math.pi)) < math.radians(15):
            continue  # tangential touch belongs to a merge/diverge
        la = float(a.ref.s[i] + ta * a.ref.seg_len[i])
        lb = float(b.ref.s[j] + tb * b.ref.seg_len[j])
        if any(a0 - 1.0 <= la <= a1 + 1.0 for a0, a1, _ in shared_ab):
            continue
        pts.append((la, lb))
    for a0, _, off in shared_ab:
        lb0 = a0 - off
        if a0 > 1.0 and lb0 > 1.0:
            pts.append((a0, lb0))  # both arrive from separate branches: merge
    pts.sort()
    merged = []
    for p in pts:
        if merged and abs(p[0] - merged[-1][0]) < 2.0:
            continue
        merged.append(p)
    return merged


def build_network(spec: ScenarioSpec) -> Network:
    if spec.kind == "intersection":
        routes, lanes = _intersection_routes(spec)
    else:
        routes, lanes = _roundabout_routes(spec)
    lane_routes = {}
    for idx, r in enumerate(routes):
        lane_routes.setdefault(r.lane, []).append(idx)
    net = Network(spec.kind, routes, lanes, lane_routes)
    n = len(routes)
    for ia in range(n):
        for ib in range(n):
            if ia == ib:
                continue
            net.shared[(ia, ib)] = _shared_intervals(routes[ia], routes[ib])
    for ia in range(n):
        for ib in range(n):
            if ia == ib:
                continue
            c = _conflicts(routes[ia], routes[ib], net.shared[(ia, ib)])
            if c:
                net.conflicts[(ia, ib)] = c
    return net
