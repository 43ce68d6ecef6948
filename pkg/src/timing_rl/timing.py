"""Timing-aware execution: the blend schedule, imagination rollouts and the timing taker.

An actor action a_t is not executed at once.  Over a horizon of T steps the
executed action moves from the baseline planner's a_base toward a_t along
beta(T, dt).  The timing taker is a second SAC agent that picks T from the
(state, action) pair; it is trained on rollouts in a cloned world.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nn import sample_head
from .sac import SacAgent, SacConfig, to_physical


@dataclass(frozen=True)
class TimingConfig:
    t_max: int = 8
    omega: float = 4.0
    gamma: float = 0.99

    def __post_init__(self):
        if self.t_max < 2:
            raise ValueError("t_max must be at least 2")
        if not self.omega > 0:
            raise ValueError("omega must be positive")


def beta(T: int, dt: int, omega: float) -> float:
    """Share of the actor's action after dt of T steps: 0 at dt=0, 1 at dt=T."""
    if T < 1:
        raise ValueError(f"horizon must be >= 1, got {T}")
    if not 0 <= dt <= T:
        raise ValueError(f"step {dt} outside [0, {T}]")
    return 0.5 * (math.tanh(omega * (dt / T - 0.5)) / math.tanh(0.5 * omega) + 1.0)


def timing_factor(T: int, omega: float) -> float:
    """Weight of the actor's action on the first executed step."""
    return beta(T, 1, omega)


def blend_action(a_actor: float, a_base: float, w: float) -> float:
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"blend weight {w} outside [0, 1]")
    return w * a_actor + (1.0 - w) * a_base


def raw_to_horizon(raw: float, t_max: int) -> int:
    """Affine map of (-1, 1) onto [1, t_max], rounded half up."""
    x = 1.0 + 0.5 * (float(raw) + 1.0) * (t_max - 1)
    return int(min(max(math.floor(x + 0.5), 1), t_max))


@dataclass
class TimingDecision:
    T: int
    raw: float


@dataclass
class RolloutResult:
    reward: float
    obs: np.ndarray
    done: bool
    truncated: bool
    steps: int
    log: list = field(default_factory=list)
    env: object = None


def imagination_rollout(env, a_t: float, T: int, cfg: TimingConfig, seed: int | None = None) -> RolloutResult:
    """Execute a_t gradually over T steps on a clone of ``env``.

    Each step re-plans a_base on the clone and executes
    blend_action(a_t, a_base, beta(T, k)).  Stops early on collision,
    arrival or timeout.  The source environment is left untouched.
    """
    if not 1 <= T <= cfg.t_max:
        raise ValueError(f"horizon {T} outside [1, {cfg.t_max}]")
    sim = env.clone(seed)
    total = 0.0
    log = []
    obs, done, truncated = None, False, False
    k = 0
    for k in range(1, T + 1):
        a_base, mode = sim.base_action()
        b = beta(T, k, cfg.omega)
        a = blend_action(a_t, a_base, b)
        obs, r, done, truncated, info = sim.step(a)
        total += cfg.gamma ** (k - 1) * r
        log.append({"k": k, "beta": b, "a_base": a_base, "a_exec": a, "reward": r,
                    "collided": info.collided, "reached": info.reached, "mode": mode.value})
        if done or truncated:
            break
    return RolloutResult(total, obs, done, truncated, k, log, sim)


def discounted_sum(rewards, gamma: float) -> float:
    return float(sum(gamma**i * r for i, r in enumerate(rewards)))


class TimingTaker:
    """SAC over the joint (observation, squashed actor action) input."""

    def __init__(self, obs_dim: int, seed: int, cfg: TimingConfig | None = None, sac_cfg: SacConfig | None = None):
        self.cfg = cfg or TimingConfig()
        sac_cfg = sac_cfg or SacConfig(gamma=self.cfg.gamma)
        self.agent = SacAgent(obs_dim + 1, 1, seed, sac_cfg)

    def decide(self, obs, a_unit, deterministic: bool = False, rng=None) -> TimingDecision:
        return timing_act(self.agent, obs, a_unit, deterministic, rng, self.cfg.t_max)


def joint_input(obs, a_unit) -> np.ndarray:
    return np.concatenate([np.atleast_1d(np.asarray(obs, dtype=float)),
                           np.atleast_1d(np.asarray(a_unit, dtype=float))], axis=-1)


def timing_act(net: SacAgent, s, a_unit, deterministic: bool = False, rng=None, t_max: int = 8) -> TimingDecision:
    raw = float(net.act(joint_input(s, a_unit), deterministic, rng)[0])
    return TimingDecision(raw_to_horizon(raw, t_max), raw)


def timing_targets(net: SacAgent, batch: dict, gamma: float, actor: SacAgent) -> np.ndarray:
    """y = r_T + gamma^T (1 - done)(min Q'(x', T') - alpha log pi(T'|x')).

    x' pairs s_{t+T} with a fresh actor action.  Consumes the random
    streams of both agents exactly as timing_update does.
    """
    return net.target_values(next_joint_batch(batch, actor), np.power(gamma, batch["T"]))


def next_joint_batch(batch: dict, actor: SacAgent) -> dict:
    s2 = batch["s2"]
    head = actor.policy_head(s2)
    a2 = sample_head(head, actor.rng.standard_normal((len(s2), actor.act_dim))).action
    out = dict(batch)
    out["s2"] = np.concatenate([s2, a2], axis=1)
    return out


def timing_update(net: SacAgent, batch: dict, gamma: float, actor: SacAgent) -> dict:
    """One SAC step for the timing taker with per-sample discount gamma^T."""
    return net.update(next_joint_batch(batch, actor), np.power(gamma, batch["T"]))


__all__ = [
    "TimingConfig", "beta", "timing_factor", "blend_action", "raw_to_horizon", "TimingDecision",
    "imagination_rollout", "RolloutResult", "discounted_sum", "TimingTaker", "timing_act",
    "timing_targets", "timing_update", "joint_input", "to_physical",
]
