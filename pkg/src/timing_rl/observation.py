"""Agent observation and step reward.

Layout of the 67-value observation (frozen; checkpoints depend on it):

    0:3    task one-hot        (straight, left, right)
    3:6    position one-hot    (entry road, weaving area, exit road)
    6      ego speed / v_max
    7:67   12 slots of (present, distance, speed, position angle, heading)
           slot = 7 + 5 * (2 * sector + rank), rank 0 = nearest

Sectors by position angle relative to the ego heading, in degrees, each
half-open on the left: front (-30, 30], left front (30, 90], right front
(-90, -30], left rear (90, 150], right rear (-150, -90], rear (150, 210].
"""
from __future__ import annotations

import math

import numpy as np

from .scenario import TASKS

OBS_DIM = 67
EGO_DIM = 7
SLOTS_PER_SECTOR = 2
SECTOR_NAMES = ("front", "left_front", "right_front", "left_rear", "right_rear", "rear")
SECTOR_BOUNDS = tuple(
    (math.radians(lo), math.radians(hi))
    for lo, hi in ((-30, 30), (30, 90), (-90, -30), (90, 150), (-150, -90), (150, 210))
)
POSITIONS = ("entry", "weaving", "exit")

REACHED_REWARD = 20.0
COLLISION_REWARD = -20.0
SPEED_REWARD_SCALE = 0.5


def sector_of(angle: float) -> int:
    """Sector index of a relative position angle in (-pi, pi]."""
    if angle <= SECTOR_BOUNDS[4][0]:
        angle += 2 * math.pi  # rear sector spans the wrap-around
    for i, (lo, hi) in enumerate(SECTOR_BOUNDS):
        if lo < angle <= hi:
            return i
    return 5


def position_phase(route, s: float) -> int:
    if s < route.weave_in:
        return 0
    if s < route.weave_out:
        return 1
    return 2


def encode_vehicles(ego_xy, ego_heading: float, ego_speed: float, task: int, phase: int,
                    others, d_max: float, v_max: float) -> np.ndarray:
    """Observation from raw quantities; ``others`` yields (x, y, speed, heading)."""
    obs = np.zeros(OBS_DIM)
    obs[task] = 1.0
    obs[3 + phase] = 1.0
    obs[6] = min(max(ego_speed / v_max, 0.0), 1.0)
    buckets = [[] for _ in SECTOR_BOUNDS]
    ex, ey = ego_xy
    for x, y, speed, heading in others:
        dx, dy = x - ex, y - ey
        dist = math.hypot(dx, dy)
        if dist > d_max:
            continue
        rel = math.remainder(math.atan2(dy, dx) - ego_heading, 2 * math.pi) if dist > 0 else 0.0
        if rel <= -math.pi:
            rel += 2 * math.pi
        k = sector_of(rel)
        buckets[k].append((dist, rel, speed, heading))
    for k, items in enumerate(buckets):
        lo, hi = SECTOR_BOUNDS[k]
        items.sort(key=lambda t: t[0])
        for rank, (dist, rel, speed, heading) in enumerate(items[:SLOTS_PER_SECTOR]):
            if k == 5 and rel < 0:
                rel += 2 * math.pi
            dth = math.remainder(heading - ego_heading, 2 * math.pi)
            if dth <= -math.pi:
                dth += 2 * math.pi
            base = EGO_DIM + 5 * (SLOTS_PER_SECTOR * k + rank)
            obs[base:base + 5] = (
                1.0,
                min(dist / d_max, 1.0),
                min(max(speed / v_max, 0.0), 1.0),
                min(max((rel - lo) / (hi - lo), 0.0), 1.0),
                min(max((dth + math.pi) / (2 * math.pi), 0.0), 1.0),
            )
    return obs


def encode_observation(world) -> np.ndarray:
    ego = world.ego
    if ego is None:
        raise ValueError("observation needs an ego vehicle")
    route = world.net.routes[ego.route]
    others = ((v.x, v.y, v.speed, v.heading) for v in world.vehicles.values() if not v.is_ego)
    return encode_vehicles((ego.x, ego.y), ego.heading, ego.speed, TASKS.index(route.task),
                           position_phase(route, ego.s), others,
                           world.spec.obs_range, world.spec.obs_v_max)


def step_reward(events, v_ego: float, v_min: float = 0.0, v_max: float = 8.0) -> float:
    if events.reached:
        return REACHED_REWARD
    if events.collided:
        return COLLISION_REWARD
    frac = (v_ego - v_min) / (v_max - v_min)
    return min(max(frac, 0.0), 1.0) * SPEED_REWARD_SCALE
