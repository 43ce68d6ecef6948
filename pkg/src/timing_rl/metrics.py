"""Evaluation metrics rows, their CSV form and the training-curve export."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields

import numpy as np


@dataclass
class MetricsRow:
    model: str
    scenario: str
    round: int
    episodes: int
    success_rate: float
    crossing_time: float
    collision_rate: float
    timeout_rate: float
    beta_minus: float

    def __post_init__(self):
        for name in ("success_rate", "collision_rate", "timeout_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} = {v} outside [0, 1]")


COLUMNS = tuple(f.name for f in fields(MetricsRow))
_INT_COLUMNS = {"round", "episodes"}
_STR_COLUMNS = {"model", "scenario"}


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.6g}"


def export_metrics(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for r in rows:
            d = asdict(r)
            w.writerow([_fmt(d[c]) for c in COLUMNS])


def read_metrics(path) -> list:
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            vals = {}
            for c in COLUMNS:
                raw = rec[c]
                vals[c] = raw if c in _STR_COLUMNS else int(raw) if c in _INT_COLUMNS else float(raw)
            out.append(MetricsRow(**vals))
    return out


def summarize(rows) -> dict:
    """{(model, scenario): {metric: (mean, std)}} over rounds; std is the population value."""
    groups = {}
    for r in rows:
        groups.setdefault((r.model, r.scenario), []).append(r)
    out = {}
    for key, rs in groups.items():
        stats = {}
        for name in ("success_rate", "crossing_time", "collision_rate", "timeout_rate", "beta_minus"):
            vals = np.array([getattr(r, name) for r in rs], dtype=float)
            vals = vals[np.isfinite(vals)]
            stats[name] = (float(vals.mean()), float(vals.std())) if len(vals) else (math.nan, math.nan)
        out[key] = stats
    return out


def format_summary(rows) -> str:
    lines = [f"{'model':<14}{'scenario':<14}{'success':>18}{'crossing time (s)':>22}{'collision':>18}"]
    for (model, scen), st in summarize(rows).items():
        s, c, k = st["success_rate"], st["crossing_time"], st["collision_rate"]
        lines.append(f"{model:<14}{scen:<14}{s[0]:>10.3f} ± {s[1]:.3f}{c[0]:>14.3f} ± {c[1]:.3f}"
                     f"{k[0]:>10.3f} ± {k[1]:.3f}")
    return "\n".join(lines)


CURVE_COLUMNS = ("step", "episode_reward", "collision_rate", "success_rate", "crossing_time")


def training_curves(episodes, window: int = 5000) -> list:
    """Windowed curve points from per-episode training records.

    ``episodes`` holds dicts with step, return, outcome and crossing_time.
    Each window [k*window, (k+1)*window) of training steps yields one point.
    """
    buckets = {}
    for e in episodes:
        buckets.setdefault(int(e["step"]) // window, []).append(e)
    rows = []
    for k in sorted(buckets):
        es = buckets[k]
        n = len(es)
        times = [e["crossing_time"] for e in es if e["outcome"] == "success" and e.get("crossing_time") is not None]
        rows.append({
            "step": (k + 1) * window,
            "episode_reward": sum(e["return"] for e in es) / n,
            "collision_rate": sum(e["outcome"] == "collision" for e in es) / n,
            "success_rate": sum(e["outcome"] == "success" for e in es) / n,
            "crossing_time": sum(times) / len(times) if times else math.nan,
        })
    return rows


def write_curves(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) if c != "step" else str(r[c]) for c in CURVE_COLUMNS])
