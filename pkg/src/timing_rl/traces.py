"""Line-delimited JSON traces of real-environment steps, and analyses over them.

Record types, one object per line:

    {"type": "header", ...}           run metadata (scenario text, seed, mode)
    {"type": "episode_start", ...}    episode index, clock, ego route
    {"type": "step", ...}             one per real step
    {"type": "episode_end", ...}      outcome, steps, crossing time, return

Files ending in ``.gz`` are gzip-compressed transparently.
"""
from __future__ import annotations

import gzip
import json
import math
from dataclasses import dataclass, field

STEP_FIELDS = ("step", "clock", "a_actor", "a_base", "a_exec", "beta", "T", "fsm", "reward",
               "phase", "collided", "reached", "timeout")


def _open(path, mode: str):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


class TraceWriter:
    """Appends records; each episode is flushed as a complete block."""

    def __init__(self, path, vehicles: bool = True, header: dict | None = None):
        self.path = path
        self.vehicles = vehicles
        self._fh = _open(path, "w")
        self._pending = []
        if header is not None:
            self._write({"type": "header", **header})

    def _write(self, rec: dict):
        self._fh.write(json.dumps(rec, sort_keys=True, allow_nan=False) + "\n")

    def episode_start(self, episode: int, clock: float, route: str, lane: str):
        self._pending = [{"type": "episode_start", "episode": episode, "clock": clock,
                          "route": route, "lane": lane}]

    def step(self, record: dict, world=None):
        rec = {"type": "step", **record}
        if self.vehicles and world is not None:
            rec["vehicles"] = [[v.id, round(v.x, 6), round(v.y, 6), round(v.heading, 6), round(v.speed, 6)]
                               for v in sorted(world.vehicles.values(), key=lambda v: v.id)]
        self._pending.append(rec)

    def episode_end(self, record: dict):
        self._pending.append({"type": "episode_end", **record})
        for rec in self._pending:
            self._write(rec)
        self._pending = []
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class EpisodeTrace:
    start: dict
    steps: list = field(default_factory=list)
    end: dict | None = None


@dataclass
class Trace:
    header: dict
    episodes: list

    @property
    def n_steps(self) -> int:
        return sum(len(e.steps) for e in self.episodes)


def read_trace(path) -> Trace:
    header, episodes, cur = {}, [], None
    with _open(path, "r") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            kind = rec.get("type")
            if kind == "header":
                header = rec
            elif kind == "episode_start":
                cur = EpisodeTrace(rec)
            elif kind == "step":
                if cur is None:
                    raise ValueError(f"{path}:{lineno}: step outside an episode")
                cur.steps.append(rec)
            elif kind == "episode_end":
                if cur is None:
                    raise ValueError(f"{path}:{lineno}: episode_end without episode_start")
                cur.end = rec
                episodes.append(cur)
                cur = None
            else:
                raise ValueError(f"{path}:{lineno}: unknown record type {kind!r}")
    return Trace(header, episodes)


def replay_rows(trace: Trace) -> list:
    """Flat per-step table: one row per recorded step."""
    rows = []
    for ep in trace.episodes:
        for st in ep.steps:
            row = {"episode": ep.start["episode"]}
            row.update({k: st.get(k) for k in STEP_FIELDS})
            rows.append(row)
    return rows


@dataclass
class BetaStats:
    overall: float
    pre3: float | None
    pre1: float | None
    n_steps: int
    n_collisions: int


def analyze_beta(traces, dt: float = 0.1) -> BetaStats:
    """Mean planner share 1 - beta over all steps and over the windows before collisions.

    Windows cover the last 3 s and 1 s of each collision episode (clipped at
    the episode start) and are pooled over steps.
    """
    total = count = 0.0
    sums = {3.0: [0.0, 0], 1.0: [0.0, 0]}
    collisions = 0
    for tr in traces:
        for ep in tr.episodes:
            vals = [1.0 - float(s["beta"]) for s in ep.steps]
            total += sum(vals)
            count += len(vals)
            if ep.steps and ep.steps[-1].get("collided"):
                collisions += 1
                for win, acc in sums.items():
                    n = int(round(win / dt))
                    tail = vals[-n:]
                    acc[0] += sum(tail)
                    acc[1] += len(tail)
    if count == 0:
        raise ValueError("traces contain no steps")

    def mean(acc):
        return acc[0] / acc[1] if acc[1] else None

    return BetaStats(total / count, mean(sums[3.0]), mean(sums[1.0]), int(count), collisions)


def episode_outcome(ep: EpisodeTrace) -> str:
    last = ep.steps[-1] if ep.steps else {}
    if last.get("collided"):
        return "collision"
    if last.get("reached"):
        return "success"
    return "timeout"


def metrics_from_trace(trace: Trace) -> dict:
    """Success, collision and timeout rates plus mean crossing time, from step records alone."""
    outcomes = [episode_outcome(ep) for ep in trace.episodes]
    n = len(outcomes)
    if n == 0:
        raise ValueError("trace contains no episodes")
    times = []
    for ep, out in zip(trace.episodes, outcomes):
        if out != "success":
            continue
        # first step on the exit road
        for st in ep.steps:
            if st.get("phase") == 2:
                times.append(st["clock"] - ep.start["clock"])
                break
    return {
        "episodes": n,
        "success_rate": outcomes.count("success") / n,
        "collision_rate": outcomes.count("collision") / n,
        "timeout_rate": outcomes.count("timeout") / n,
        "crossing_time": sum(times) / len(times) if times else math.nan,
        "beta_minus": analyze_beta([trace]).overall,
    }
