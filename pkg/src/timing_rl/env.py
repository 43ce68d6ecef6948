"""Episodic driving environment around a traffic world with one ego vehicle."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .observation import encode_observation, step_reward
from .planner import FsmMode, ego_idm, plan_base_action, planner_config, view_from_world
from .scenario import ScenarioSpec
from .world import TrafficWorld, build_scenario, world_step


@dataclass
class StepInfo:
    collided: bool = False
    reached: bool = False
    timeout: bool = False
    crossing_time: float | None = None
    applied_accel: float = 0.0
    despawned: list = field(default_factory=list)


class DrivingEnv:
    """reset() places a fresh ego; step(accel) advances the world by one tick.

    Episodes end on collision or arrival (terminal) or after the episode
    timeout (truncated).  Traffic keeps running between episodes and is
    fully reset every ``t_sim`` seconds.
    """

    def __init__(self, spec: ScenarioSpec, seed: int, planner=None, warmup: bool = True):
        self.spec = spec
        self.world: TrafficWorld = build_scenario(spec, seed)
        self.planner = planner or planner_config(spec)
        self.idm = ego_idm(spec)
        self.steps = 0  # real steps taken in this environment
        self.episode = 0
        self.episode_start = 0.0
        self.episode_steps = 0
        self.crossed_at: float | None = None
        self._base = None
        if warmup:
            self._warm_up()

    def _warm_up(self):
        n = int(round(self.spec.warmup / self.spec.dt))
        for _ in range(n):
            world_step(self.world, 0.0)

    # -- episode control -----------------------------------------------------

    def reset(self) -> np.ndarray:
        w = self.world
        w.remove_ego()
        if w.clock - w.last_reset >= self.spec.t_sim:
            w.reset_traffic()
            self._warm_up()
        while w.spawn_ego() is None:
            world_step(w, 0.0)
        self.episode += 1
        self.episode_start = w.clock
        self.episode_steps = 0
        self.crossed_at = None
        self._base = None
        return self.observe()

    def observe(self) -> np.ndarray:
        return encode_observation(self.world)

    def base_action(self):
        """(a_base, FSM mode) of the baseline planner for the current state; cached per step."""
        if self._base is None:
            view = view_from_world(self.world, self.planner)
            a, _, mode = plan_base_action(view, self.planner, self.idm)
            self._base = (a, mode)
        return self._base

    def step(self, accel: float):
        """Returns (obs, reward, terminated, truncated, info)."""
        w = self.world
        ego = w.ego
        if ego is None:
            raise RuntimeError("step() called without an active episode; call reset() first")
        applied = min(max(float(accel), self.spec.ego_b_min), self.spec.ego_a_max)
        _, events = world_step(w, applied)
        self.steps += 1
        self.episode_steps += 1
        self._base = None
        route = w.net.routes[ego.route]
        if self.crossed_at is None and ego.s >= route.weave_out:
            self.crossed_at = w.clock - self.episode_start
        reward = step_reward(events, ego.speed, self.spec.reward_v_min, self.spec.reward_v_max)
        terminated = events.collided or events.reached
        timeout = not terminated and w.clock - self.episode_start >= self.spec.episode_timeout - 1e-9
        info = StepInfo(events.collided, events.reached, timeout, self.crossed_at, applied, events.despawned)
        return self.observe(), reward, terminated, timeout, info

    @property
    def elapsed(self) -> float:
        return self.world.clock - self.episode_start

    # -- imagination -----------------------------------------------------------

    def clone(self, seed: int | None = None) -> "DrivingEnv":
        """Independent copy; ``seed`` gives the copy its own random stream."""
        env = DrivingEnv.__new__(DrivingEnv)
        env.spec = self.spec
        env.world = self.world.clone(seed)
        env.planner = self.planner
        env.idm = self.idm
        env.steps = self.steps
        env.episode = self.episode
        env.episode_start = self.episode_start
        env.episode_steps = self.episode_steps
        env.crossed_at = self.crossed_at
        env._base = self._base
        return env


__all__ = ["DrivingEnv", "StepInfo", "FsmMode"]
