"""Policy bundles: how each compared controller turns an observation into an acceleration."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .planner import PlannerConfig, ego_idm, plan_base_action, view_from_world
from .sac import SacAgent, to_physical
from .timing import TimingConfig, TimingTaker, blend_action, timing_factor

MODES = ("plain_sac", "sac_lattice", "lattice_idm", "timing_aware")


@dataclass
class PolicyBundle:
    mode: str
    actor: SacAgent | None = None
    timing: TimingTaker | None = None
    planner: PlannerConfig | None = None
    timing_cfg: TimingConfig | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown policy mode '{self.mode}'; expected one of {MODES}")
        if self.mode != "lattice_idm" and self.actor is None:
            raise ValueError(f"mode '{self.mode}' needs actor networks")
        if self.mode == "sac_lattice" and self.actor.act_dim != 2:
            raise ValueError("sac_lattice needs a two-output actor (acceleration, gate)")
        if self.mode == "timing_aware" and self.timing is None:
            raise ValueError("timing_aware needs timing-taker networks")
        if self.timing_cfg is None:
            self.timing_cfg = self.timing.cfg if self.timing is not None else TimingConfig()


@dataclass
class Decision:
    """One control step: what each component proposed and what was executed."""

    a_exec: float
    a_actor: float | None
    a_base: float | None
    beta: float
    T: int
    fsm: str | None
    a_unit: np.ndarray | None = None
    raw_T: float | None = None


def sac_lattice_select(a_sac: float, a_base: float, gate: float) -> float:
    """Hard selection: the SAC action when the gate is non-negative, else the planner's."""
    return a_sac if gate >= 0.0 else a_base


def decide(bundle: PolicyBundle, env, obs, deterministic: bool = True, rng=None) -> Decision:
    mode = bundle.mode
    if mode == "lattice_idm":
        a_base, fsm = env.base_action()
        return Decision(a_base, None, a_base, 0.0, 1, fsm.value)
    a_unit = bundle.actor.act(obs, deterministic, rng)
    if mode == "plain_sac":
        a = float(to_physical(a_unit[0]))
        return Decision(a, a, None, 1.0, 1, None, a_unit)
    a_base, fsm = env.base_action()
    if mode == "sac_lattice":
        a_sac = float(to_physical(a_unit[0]))
        gate = float(a_unit[1])
        a = sac_lattice_select(a_sac, a_base, gate)
        return Decision(a, a_sac, a_base, 1.0 if gate >= 0.0 else 0.0, 1, fsm.value, a_unit)
    td = bundle.timing.decide(obs, a_unit[0], deterministic, rng)
    w = timing_factor(td.T, bundle.timing_cfg.omega)
    a_actor = float(to_physical(a_unit[0]))
    return Decision(blend_action(a_actor, a_base, w), a_actor, a_base, w, td.T, fsm.value, a_unit, td.raw)


def act_lattice_idm(world, cfg: PlannerConfig) -> float:
    """Baseline planner acceleration for the world's ego."""
    a, _, _ = plan_base_action(view_from_world(world, cfg), cfg, ego_idm(world.spec))
    return a


def act_sac_lattice(actor: SacAgent, world, rng, cfg: PlannerConfig, deterministic: bool = False) -> float:
    from .observation import encode_observation

    u = actor.act(encode_observation(world), deterministic, rng)
    return sac_lattice_select(float(to_physical(u[0])), act_lattice_idm(world, cfg), float(u[1]))
