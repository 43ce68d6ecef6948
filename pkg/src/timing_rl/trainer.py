"""Training procedures, checkpoints and evaluation.

Timing-aware training runs in two stages.  First a plain SAC actor learns
in the real environment.  Then blocks alternate: the timing taker learns
from imagination rollouts on cloned worlds while the actor is frozen, and
the actor learns in the real environment with its actions blended toward
the planner by the (frozen) timing taker's choice.
"""
from __future__ import annotations

import configparser
import csv
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .env import DrivingEnv
from .metrics import MetricsRow, export_metrics, training_curves, write_curves
from .nn import load_arrays, save_arrays
from .observation import OBS_DIM, position_phase
from .planner import PlannerConfig, planner_config
from .sac import ReplayBuffer, SacAgent, SacConfig, to_physical
from .scenario import ScenarioSpec, _parse_value, dump_scenario, load_scenario
from .timing import (TimingConfig, TimingTaker, blend_action, imagination_rollout, joint_input,
                     raw_to_horizon, timing_factor, timing_update)
from .traces import TraceWriter
from .variants import Decision, PolicyBundle, decide, sac_lattice_select

RUNS_ENV = "TIMING_RL_RUNS"


@dataclass(frozen=True)
class TrainConfig:
    scenario: str = "intersection"
    scenario_overrides: tuple = ()
    seed: int = 0
    n_train: int = 500_000
    phase1_steps: int = 100_000
    sac_lattice_steps: int = 0  # 0 means n_train
    batch: int = 256
    buffer: int = 1_000_000
    n_start: int = 2000
    gamma: float = 0.99
    tau: float = 0.005
    lr: float = 3e-4
    hidden: tuple = (256, 256)
    n_t: int = 512
    n_a: int = 512
    t_max: int = 8
    omega: float = 4.0
    trace_training: bool = True
    trace_vehicles: bool = True
    metrics_every: int = 100
    curve_window: int = 5000

    def __post_init__(self):
        for name in ("n_train", "phase1_steps", "batch", "buffer", "n_start", "n_t", "n_a"):
            v = getattr(self, name)
            if name in ("n_t",) and v == 0:
                continue
            if v < 1:
                raise ValueError(f"{name} must be positive, got {v}")
        if self.phase1_steps > self.n_train:
            raise ValueError("phase1_steps cannot exceed n_train")
        if self.n_start < self.batch:
            raise ValueError("n_start must be at least the batch size")

    @property
    def alternating_steps(self) -> int:
        return self.n_train - self.phase1_steps

    @property
    def lattice_steps(self) -> int:
        return self.sac_lattice_steps or self.n_train

    def spec(self) -> ScenarioSpec:
        return load_scenario(self.scenario, **dict(self.scenario_overrides))

    def sac_config(self) -> SacConfig:
        return SacConfig(hidden=tuple(self.hidden), lr=self.lr, gamma=self.gamma, tau=self.tau)

    def timing_config(self) -> TimingConfig:
        return TimingConfig(self.t_max, self.omega, self.gamma)

    def to_ini(self) -> str:
        lines = ["[train]"]
        for f in fields(self):
            if f.name == "scenario_overrides":
                continue
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ", ".join(str(x) for x in v)
            lines.append(f"{f.name} = {v}")
        lines += ["", "[scenario_overrides]"]
        lines += [f"{k} = {v}" for k, v in self.scenario_overrides]
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()[:16]


def load_train_config(path, **overrides) -> TrainConfig:
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(f"config file not found: {path}")
    base = TrainConfig()
    kw = {}
    if cp.has_section("train"):
        for key, raw in cp.items("train"):
            if not hasattr(base, key) or key == "scenario_overrides":
                raise ValueError(f"{key}: unknown key in [train]")
            proto = getattr(base, key)
            if key == "hidden":
                kw[key] = tuple(int(x) for x in raw.split(","))
            else:
                kw[key] = _parse_value(proto, raw, key)
    scen = kw.get("scenario", base.scenario)
    if scen not in ("intersection", "roundabout") and not Path(scen).is_absolute():
        kw["scenario"] = str((Path(path).parent / scen).resolve())
    if cp.has_section("scenario_overrides"):
        proto = ScenarioSpec()
        kw["scenario_overrides"] = tuple(
            (k, _parse_value(getattr(proto, k), raw, k)) for k, raw in cp.items("scenario_overrides"))
    kw.update(overrides)
    return TrainConfig(**kw)


def run_root() -> Path:
    return Path(os.environ.get(RUNS_ENV, "runs"))


def derive_seeds(seed: int, n: int) -> list:
    return [int(s.generate_state(1, np.uint64)[0] >> np.uint64(1)) for s in np.random.SeedSequence(seed).spawn(n)]


# -- checkpoints ------------------------------------------------------------


def save_bundle(path, bundle: PolicyBundle, cfg: TrainConfig | None = None, extra: dict | None = None):
    arrays = {}
    meta = {"mode": bundle.mode, "obs_dim": OBS_DIM, "timing": asdict(bundle.timing_cfg)}
    if bundle.actor is not None:
        arrays.update(bundle.actor.state_arrays("actor/"))
        meta["actor"] = {"act_dim": bundle.actor.act_dim, "sac": _sac_meta(bundle.actor.cfg),
                         "updates": bundle.actor.updates}
    if bundle.timing is not None:
        arrays.update(bundle.timing.agent.state_arrays("timing/"))
        meta["timing_agent"] = {"sac": _sac_meta(bundle.timing.agent.cfg), "updates": bundle.timing.agent.updates}
    if bundle.planner is not None:
        meta["planner"] = asdict(bundle.planner)
    if cfg is not None:
        meta["config_digest"] = cfg.digest()
    meta.update(extra or {})
    save_arrays(path, arrays, meta)


def _sac_meta(c: SacConfig) -> dict:
    d = asdict(c)
    d["hidden"] = list(c.hidden)
    return d


def _sac_from_meta(d: dict) -> SacConfig:
    d = dict(d)
    d["hidden"] = tuple(d["hidden"])
    return SacConfig(**d)


def load_bundle(path) -> PolicyBundle:
    arrays, meta = load_arrays(path)
    tcfg = TimingConfig(**meta["timing"])
    actor = timing = None
    if "actor" in meta:
        actor = SacAgent(meta["obs_dim"], meta["actor"]["act_dim"], 0, _sac_from_meta(meta["actor"]["sac"]))
        actor.load_arrays(arrays, "actor/")
        actor.updates = meta["actor"].get("updates", 0)
    if "timing_agent" in meta:
        timing = TimingTaker(meta["obs_dim"], 0, tcfg, _sac_from_meta(meta["timing_agent"]["sac"]))
        timing.agent.load_arrays(arrays, "timing/")
    planner = PlannerConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in meta["planner"].items()}) \
        if "planner" in meta else None
    return PolicyBundle(meta["mode"], actor, timing, planner, tcfg)


def lattice_bundle(spec: ScenarioSpec) -> PolicyBundle:
    return PolicyBundle("lattice_idm", planner=planner_config(spec))


# -- logging ------------------------------------------------------------------


class RunLog:
    """Per-episode records, training scalars and (optionally) a step trace for one run stage."""

    def __init__(self, run_dir: Path, tag: str, cfg: TrainConfig, spec: ScenarioSpec, mode: str, trace: bool):
        self.run_dir = Path(run_dir)
        self.tag = tag
        self.episodes = []
        self.trace = None
        if trace:
            header = {"mode": mode, "seed": cfg.seed, "stage": tag, "scenario": dump_scenario(spec),
                      "config_digest": cfg.digest()}
            self.trace = TraceWriter(self.run_dir / f"trace_{tag}.jsonl", cfg.trace_vehicles, header)
        self._scalars = open(self.run_dir / f"train_metrics_{tag}.csv", "w", newline="")
        self._sw = csv.writer(self._scalars)
        self._sw.writerow(["step", "critic_loss", "actor_loss", "alpha", "entropy"])
        self.metrics_every = cfg.metrics_every
        self.curve_window = cfg.curve_window
        self._ret = 0.0

    def start(self, env: DrivingEnv):
        self._ret = 0.0
        if self.trace is not None:
            w = env.world
            route = w.net.routes[w.ego.route]
            self.trace.episode_start(env.episode, w.clock, route.name, w.net.lanes[route.lane])

    def step(self, step: int, env: DrivingEnv, d: Decision, reward: float, info):
        self._ret += reward
        if self.trace is not None:
            self.trace.step(step_record(step, env, d, reward, info), env.world)

    def end(self, step: int, env: DrivingEnv, info):
        outcome = "collision" if info.collided else "success" if info.reached else "timeout"
        rec = {"step": step, "episode": env.episode, "return": self._ret, "outcome": outcome,
               "crossing_time": env.crossed_at if outcome == "success" else None, "length": env.episode_steps}
        self.episodes.append(rec)
        if self.trace is not None:
            self.trace.episode_end(rec)

    def scalars(self, step: int, stats: dict):
        if step % self.metrics_every == 0:
            self._sw.writerow([step] + [f"{stats[k]:.9g}" for k in ("critic_loss", "actor_loss", "alpha", "entropy")])

    def close(self):
        self._scalars.close()
        if self.trace is not None:
            self.trace.close()
        with open(self.run_dir / f"episodes_{self.tag}.jsonl", "w") as fh:
            for e in self.episodes:
                fh.write(json.dumps(e, sort_keys=True) + "\n")
        write_curves(training_curves(self.episodes, self.curve_window), self.run_dir / f"curves_{self.tag}.csv")


def step_record(step: int, env: DrivingEnv, d: Decision, reward: float, info) -> dict:
    w = env.world
    ego = w.ego
    return {
        "step": step, "clock": round(w.clock, 9), "a_actor": d.a_actor, "a_base": d.a_base, "a_exec": d.a_exec,
        "beta": d.beta, "T": d.T, "fsm": d.fsm, "reward": reward,
        "phase": position_phase(w.net.routes[ego.route], ego.s),
        "collided": info.collided, "reached": info.reached, "timeout": info.timeout,
    }


# -- training stages ------------------------------------------------------------


def _check_finite(stats: dict, where: str):
    for k, v in stats.items():
        if isinstance(v, float) and not math.isfinite(v):
            raise FloatingPointError(f"{where}: {k} became non-finite")


def _train_sac(cfg: TrainConfig, run_dir: Path, tag: str, act_dim: int, steps: int, lattice: bool) -> SacAgent:
    spec = cfg.spec()
    env_seed, agent_seed, explore_seed = derive_seeds(cfg.seed, 3) if not lattice else derive_seeds(cfg.seed + 7, 3)
    env = DrivingEnv(spec, env_seed)
    agent = SacAgent(OBS_DIM, act_dim, agent_seed, cfg.sac_config())
    explore = np.random.Generator(np.random.PCG64(explore_seed))
    buf = ReplayBuffer(cfg.buffer, OBS_DIM, act_dim)
    log = RunLog(run_dir, tag, cfg, spec, "sac_lattice" if lattice else "plain_sac", cfg.trace_training)
    obs = env.reset()
    log.start(env)
    for step in range(1, steps + 1):
        a_unit = explore.uniform(-1.0, 1.0, act_dim) if step <= cfg.n_start else agent.act(obs)
        a_sac = float(to_physical(a_unit[0]))
        if lattice:
            a_base, fsm = env.base_action()
            a = sac_lattice_select(a_sac, a_base, float(a_unit[1]))
            d = Decision(a, a_sac, a_base, 1.0 if a_unit[1] >= 0 else 0.0, 1, fsm.value, a_unit)
        else:
            d = Decision(a_sac, a_sac, None, 1.0, 1, None, a_unit)
        obs2, r, term, trunc, info = env.step(d.a_exec)
        buf.add(obs, a_unit, r, obs2, term)
        log.step(step, env, d, r, info)
        if len(buf) >= cfg.n_start:
            stats = agent.update(buf.sample(cfg.batch, agent.rng))
            _check_finite(stats, tag)
            log.scalars(step, stats)
        if term or trunc:
            log.end(step, env, info)
            obs = env.reset()
            log.start(env)
        else:
            obs = obs2
    log.close()
    return agent


def train_phase1(cfg: TrainConfig, run_dir) -> Path:
    """Plain SAC in the real environment; writes phase1.ckpt."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    agent = _train_sac(cfg, run_dir, "phase1", 1, cfg.phase1_steps, lattice=False)
    path = run_dir / "phase1.ckpt"
    save_bundle(path, PolicyBundle("plain_sac", agent, timing_cfg=cfg.timing_config()), cfg)
    return path


def train_sac_lattice(cfg: TrainConfig, run_dir) -> Path:
    """SAC with an extra gate output choosing between its action and the planner's."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    spec = cfg.spec()
    agent = _train_sac(cfg, run_dir, "sac_lattice", 2, cfg.lattice_steps, lattice=True)
    path = run_dir / "sac_lattice.ckpt"
    save_bundle(path, PolicyBundle("sac_lattice", agent, planner=planner_config(spec),
                                   timing_cfg=cfg.timing_config()), cfg)
    return path


@dataclass
class AlternatingStats:
    timing_decisions: int = 0
    imagination_steps: int = 0
    actor_steps: int = 0
    blocks: int = 0
    real_env_steps_during_timing: int = 0


def train_alternating(cfg: TrainConfig, run_dir, actor_ckpt) -> tuple:
    """Alternate timing-taker blocks (imagination) and actor blocks (real env).

    The budget counts timing decisions and real actor steps together.
    Returns (checkpoint path, AlternatingStats).
    """
    run_dir = Path(run_dir)
    spec = cfg.spec()
    tcfg = cfg.timing_config()
    actor = load_bundle(actor_ckpt).actor
    env_a_seed, env_t_seed, timing_seed, fork_seed, explore_seed, actor_seed = derive_seeds(cfg.seed + 1, 6)
    actor.rng = np.random.Generator(np.random.PCG64(actor_seed))
    timing = TimingTaker(OBS_DIM, timing_seed, tcfg, cfg.sac_config())
    fork = np.random.Generator(np.random.PCG64(fork_seed))
    explore = np.random.Generator(np.random.PCG64(explore_seed))
    d_t = ReplayBuffer(cfg.buffer, OBS_DIM + 1, 1, extra=("T",), next_obs_dim=OBS_DIM)
    d_a = ReplayBuffer(cfg.buffer, OBS_DIM, 1)
    env_a = DrivingEnv(spec, env_a_seed)
    env_t = DrivingEnv(spec, env_t_seed)
    log = RunLog(run_dir, "alternating", cfg, spec, "timing_aware", cfg.trace_training)
    tlog = open(run_dir / "timing_decisions.csv", "w", newline="")
    tw = csv.writer(tlog)
    tw.writerow(["decision", "T", "raw", "r_T", "steps", "done"])
    st = AlternatingStats()
    obs_a = env_a.reset()
    log.start(env_a)
    obs_t = env_t.reset()
    used = 0
    budget = cfg.alternating_steps
    while used < budget:
        st.blocks += 1
        # (i) timing taker learns in imagination; the actor is frozen
        real_before = env_a.steps
        for _ in range(min(cfg.n_t, budget - used)):
            a_unit = actor.act(obs_t)
            if len(d_t) < cfg.n_start:
                raw = float(explore.uniform(-1.0, 1.0))
            else:
                raw = float(timing.agent.act(joint_input(obs_t, a_unit[0]))[0])
            T = raw_to_horizon(raw, tcfg.t_max)
            res = imagination_rollout(env_t, float(to_physical(a_unit[0])), T, tcfg,
                                      seed=int(fork.integers(2**63 - 1)))
            d_t.add(joint_input(obs_t, a_unit[0]), [raw], res.reward, res.obs, res.done, T=T)
            st.timing_decisions += 1
            st.imagination_steps += res.steps
            tw.writerow([st.timing_decisions, T, f"{raw:.9g}", f"{res.reward:.9g}", res.steps, int(res.done)])
            if len(d_t) >= cfg.n_start:
                stats = timing_update(timing.agent, d_t.sample(cfg.batch, timing.agent.rng), cfg.gamma, actor)
                _check_finite(stats, "timing")
            env_t = res.env
            obs_t = env_t.reset() if (res.done or res.truncated) else res.obs
            used += 1
        st.real_env_steps_during_timing += env_a.steps - real_before
        # (ii) actor learns in the real environment; the timing taker is frozen
        for _ in range(min(cfg.n_a, budget - used)):
            a_unit = actor.act(obs_a)
            td = timing.decide(obs_a, a_unit[0], deterministic=True)
            w = timing_factor(td.T, tcfg.omega)
            a_base, fsm = env_a.base_action()
            a_actor = float(to_physical(a_unit[0]))
            d = Decision(blend_action(a_actor, a_base, w), a_actor, a_base, w, td.T, fsm.value, a_unit, td.raw)
            obs2, r, term, trunc, info = env_a.step(d.a_exec)
            # the raw actor action is stored with the reward of the executed blend
            d_a.add(obs_a, a_unit, r, obs2, term)
            st.actor_steps += 1
            log.step(cfg.phase1_steps + st.actor_steps, env_a, d, r, info)
            if len(d_a) >= cfg.n_start:
                stats = actor.update(d_a.sample(cfg.batch, actor.rng))
                _check_finite(stats, "actor")
                log.scalars(cfg.phase1_steps + st.actor_steps, stats)
            if term or trunc:
                log.end(cfg.phase1_steps + st.actor_steps, env_a, info)
                obs_a = env_a.reset()
                log.start(env_a)
            else:
                obs_a = obs2
            used += 1
    log.close()
    tlog.close()
    if st.real_env_steps_during_timing:
        raise AssertionError("the real environment advanced during a timing block")
    path = run_dir / "timing_aware.ckpt"
    save_bundle(path, PolicyBundle("timing_aware", actor, timing, planner_config(spec), tcfg), cfg,
                {"alternating": asdict(st)})
    return path, st


# -- evaluation -------------------------------------------------------------------


def evaluate(bundle: PolicyBundle, spec: ScenarioSpec, n_episodes: int, rounds: int = 1, seed: int = 0,
             trace_dir=None, tag: str | None = None, vehicles: bool = True, scenario_name: str | None = None,
             round_offset: int = 0) -> list:
    """Deterministic rollouts; one MetricsRow per round."""
    tag = tag or bundle.mode
    rows = []
    for r in range(rounds):
        round_id = r + round_offset
        env_seed = int(np.random.SeedSequence([seed, round_id]).generate_state(1)[0])
        env = DrivingEnv(spec, env_seed)
        writer = None
        if trace_dir is not None:
            Path(trace_dir).mkdir(parents=True, exist_ok=True)
            suffix = ".jsonl.gz" if not vehicles else ".jsonl"
            writer = TraceWriter(Path(trace_dir) / f"eval_{tag}_round{round_id}{suffix}", vehicles,
                                 {"mode": bundle.mode, "seed": env_seed, "round": round_id,
                                  "scenario": dump_scenario(spec)})
        outcomes, times, betas = [], [], []
        step = 0
        for _ in range(n_episodes):
            obs = env.reset()
            w = env.world
            route = w.net.routes[w.ego.route]
            if writer:
                writer.episode_start(env.episode, w.clock, route.name, w.net.lanes[route.lane])
            ret = 0.0
            while True:
                d = decide(bundle, env, obs, deterministic=True)
                obs, rew, term, trunc, info = env.step(d.a_exec)
                step += 1
                ret += rew
                betas.append(d.beta)
                if writer:
                    writer.step(step_record(step, env, d, rew, info), w)
                if term or trunc:
                    break
            outcome = "collision" if info.collided else "success" if info.reached else "timeout"
            outcomes.append(outcome)
            if outcome == "success" and env.crossed_at is not None:
                times.append(env.crossed_at)
            if writer:
                writer.episode_end({"episode": env.episode, "outcome": outcome, "return": ret,
                                    "crossing_time": env.crossed_at if outcome == "success" else None,
                                    "length": env.episode_steps})
        if writer:
            writer.close()
        n = len(outcomes)
        rows.append(MetricsRow(tag, scenario_name or spec.kind, round_id, n, outcomes.count("success") / n,
                               float(np.mean(times)) if times else math.nan,
                               outcomes.count("collision") / n, outcomes.count("timeout") / n,
                               1.0 - float(np.mean(betas))))
    return rows


# -- full pipelines ---------------------------------------------------------------


def write_manifest(run_dir: Path, cfg: TrainConfig, extra: dict | None = None):
    files = {}
    for p in sorted(run_dir.glob("*.ckpt")):
        files[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()
    manifest = {"config_digest": cfg.digest(), "seed": cfg.seed, "seeds": {
        "phase1": derive_seeds(cfg.seed, 3), "alternating": derive_seeds(cfg.seed + 1, 6),
        "sac_lattice": derive_seeds(cfg.seed + 7, 3)}, "checkpoints": files}
    manifest.update(extra or {})
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def train_all(cfg: TrainConfig, run_dir, resume: bool = False, lattice: bool = True) -> dict:
    """Phase 1, alternating training and (optionally) SAC-Lattice into ``run_dir``."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.ini").write_text(cfg.to_ini())
    (run_dir / "scenario.cfg").write_text(dump_scenario(cfg.spec()))
    out = {}
    p1 = run_dir / "phase1.ckpt"
    if not (resume and p1.exists()):
        train_phase1(cfg, run_dir)
    out["phase1"] = p1
    ta = run_dir / "timing_aware.ckpt"
    if not (resume and ta.exists()):
        train_alternating(cfg, run_dir, p1)
    out["timing_aware"] = ta
    if lattice:
        sl = run_dir / "sac_lattice.ckpt"
        if not (resume and sl.exists()):
            train_sac_lattice(cfg, run_dir)
        out["sac_lattice"] = sl
    write_manifest(run_dir, cfg)
    return out


EXPERIMENT_MODELS = ("timing_aware", "plain_sac", "sac_lattice", "lattice_idm")


def experiment_config(seed: int = 0) -> TrainConfig:
    """The scaled comparison: 5e4 plain-SAC steps, then 5e4 alternating steps."""
    return TrainConfig(scenario="intersection", scenario_overrides=(("t_spawn", 3.0),), seed=seed,
                       n_train=100_000, phase1_steps=50_000, trace_training=False)


def run_experiment(out_dir, seeds=(0, 1, 2), episodes: int = 200, base: TrainConfig | None = None,
                   progress=None) -> dict:
    """Train every model per seed, evaluate each on ``episodes`` episodes, write results.json.

    Completed stages are reused, so an interrupted run can be restarted.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = base or experiment_config()
    rows = []
    for i, seed in enumerate(seeds):
        cfg = TrainConfig(**{**{f.name: getattr(base, f.name) for f in fields(base)}, "seed": seed})
        run_dir = out_dir / f"seed{seed}"
        if progress:
            progress(f"seed {seed}: training")
        paths = train_all(cfg, run_dir, resume=True)
        spec = cfg.spec()
        bundles = {
            "timing_aware": lambda: load_bundle(paths["timing_aware"]),
            "plain_sac": lambda: load_bundle(paths["phase1"]),
            "sac_lattice": lambda: load_bundle(paths["sac_lattice"]),
            "lattice_idm": lambda: lattice_bundle(spec),
        }
        for model in EXPERIMENT_MODELS:
            done_file = run_dir / f"eval_{model}.csv"
            if done_file.exists():
                from .metrics import read_metrics

                rows += read_metrics(done_file)
                continue
            if progress:
                progress(f"seed {seed}: evaluating {model}")
            r = evaluate(bundles[model](), spec, episodes, 1, seed=10_000 + seed, trace_dir=run_dir / "traces",
                         tag=model, vehicles=False, round_offset=i)
            export_metrics(r, done_file)
            rows += r
    export_metrics(rows, out_dir / "metrics.csv")
    results = summarize_experiment(out_dir, rows, base, seeds, episodes)
    (out_dir / "results.json").write_text(json.dumps(results, indent=2, sort_keys=True) + "\n")
    return results


def summarize_experiment(out_dir: Path, rows, base: TrainConfig, seeds, episodes) -> dict:
    from .traces import analyze_beta, read_trace

    by_model = {}
    for r in rows:
        by_model.setdefault(r.model, []).append(r)
    summary = {}
    for m, rs in by_model.items():
        times = [r.crossing_time for r in rs if math.isfinite(r.crossing_time)]
        summary[m] = {
            "success_rate": float(np.mean([r.success_rate for r in rs])),
            "success_rate_std": float(np.std([r.success_rate for r in rs])),
            "collision_rate": float(np.mean([r.collision_rate for r in rs])),
            "crossing_time": float(np.mean(times)) if times else None,
            "beta_minus": float(np.mean([r.beta_minus for r in rs])),
        }
    traces = [read_trace(p) for p in sorted(Path(out_dir).glob("seed*/traces/eval_timing_aware_*.jsonl*"))]
    beta = analyze_beta(traces) if traces else None
    return {
        "config_digest": base.digest(),
        "seeds": list(seeds),
        "episodes": episodes,
        "phase1_steps": base.phase1_steps,
        "alternating_steps": base.alternating_steps,
        "t_spawn": dict(base.scenario_overrides).get("t_spawn"),
        "models": summary,
        "beta_timing_aware": asdict(beta) if beta else None,
    }
