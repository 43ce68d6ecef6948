"""Level-k cross/yield decisions for human drivers meeting at a conflict point.

Each player's motion under a decision is a constant-acceleration profile:
crossing accelerates at the player's maximum toward its crossing speed,
yielding brakes comfortably down to a creep speed.  Utilities are built from
the arrival-time gap (safety), projected waiting (efficiency), acceleration
changes (comfort) and accumulated waiting (emotion).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

CROSS, YIELD = "cross", "yield"
DECISIONS = (CROSS, YIELD)

CREEP_SPEED = 1.0
PASS_TIME = 1.0
EMO_WAIT_MAX = 20.0


@dataclass(frozen=True)
class GameParams:
    alpha1: float = 0.65
    alpha2: float = 0.1
    alpha3: float = 0.1
    alpha4: float = 0.1
    svo: float = 0.0
    k: int = 2

    def __post_init__(self):
        if not 0.0 <= self.svo <= 0.5:
            raise ValueError(f"svo must lie in [0, 0.5], got {self.svo}")


@dataclass(frozen=True)
class ConflictView:
    """One player's situation relative to the shared conflict point."""

    dist: float
    speed: float
    wait: float = 0.0
    a_max: float = 2.0
    b_min: float = -3.0
    v_target: float = 5.0
    accel: float = 0.0

    def __post_init__(self):
        if self.dist < 0:
            raise ValueError("distance to the conflict point must be >= 0")


@dataclass(frozen=True)
class UtilityTerms:
    safe: float
    eff: float
    comf: float
    emo: float


def profile(view: ConflictView, decision: str) -> tuple[float, float]:
    """(acceleration, capped speed) of the motion implied by ``decision``."""
    v = view.speed
    if decision == CROSS:
        cap = max(v, view.v_target)
        return (view.a_max if cap > v else 0.0), cap
    if v > CREEP_SPEED:
        return 0.5 * view.b_min, CREEP_SPEED
    if v < CREEP_SPEED:
        return 0.5 * view.a_max, CREEP_SPEED
    return 0.0, CREEP_SPEED


def eta(dist: float, speed: float, accel: float, cap: float) -> float:
    """Time to cover ``dist`` accelerating at ``accel`` until ``cap``, then cruising."""
    if dist <= 0.0:
        return 0.0
    if accel == 0.0 or cap == speed:
        return dist / speed if speed > 0 else math.inf
    t1 = (cap - speed) / accel
    d1 = speed * t1 + 0.5 * accel * t1 * t1
    if d1 >= dist:
        disc = speed * speed + 2.0 * accel * dist
        return (-speed + math.sqrt(max(disc, 0.0))) / accel
    if cap <= 0.0:
        return math.inf
    return t1 + (dist - d1) / cap


def arrival(view: ConflictView, decision: str) -> float:
    a, cap = profile(view, decision)
    return eta(view.dist, view.speed, a, cap)


def utility_terms(view: ConflictView, opp: ConflictView, own_decision: str, opp_decision: str) -> UtilityTerms:
    """Raw (un-normalized) terms for one cell of the 2x2 decision matrix."""
    t_self = arrival(view, own_decision)
    t_opp = arrival(opp, opp_decision)
    safe = abs(t_self - t_opp)
    if own_decision == CROSS:
        eff = 0.0
        emo = view.wait
    else:
        eff = max(0.0, t_opp + PASS_TIME - arrival(view, CROSS))
        emo = 0.0
    a, cap = profile(view, own_decision)
    comf = abs(a - view.accel)
    if a != 0.0:
        t_cap = (cap - view.speed) / a
        if view.speed * t_cap + 0.5 * a * t_cap * t_cap < view.dist:
            comf += abs(a)
    return UtilityTerms(safe, eff, comf, emo)


def normalize(value: float, lo: float, hi: float) -> float:
    """Min-max normalization clamped to [0, 1]; degenerate bounds map to 0."""
    if not hi > lo:
        return 0.0
    return min(max((value - lo) / (hi - lo), 0.0), 1.0)


def normalize_terms(raw: UtilityTerms, bounds: dict) -> UtilityTerms:
    """Normalize each term with ``bounds[name] = (lo, hi)``."""
    return UtilityTerms(**{k: normalize(getattr(raw, k), *bounds[k]) for k in ("safe", "eff", "comf", "emo")})


def utility_matrix(view: ConflictView, opp: ConflictView, p: GameParams) -> np.ndarray:
    """U[i, j] for own decision i and opponent decision j (index 0 = cross).

    Safety, efficiency and comfort are normalized over the four cells; the
    emotion term uses the fixed range [0, EMO_WAIT_MAX] so that its size
    still reflects how long the driver has waited.
    """
    cells = [[utility_terms(view, opp, d, o) for o in DECISIONS] for d in DECISIONS]
    flat = [c for row in cells for c in row]
    bounds = {}
    for name in ("safe", "eff", "comf"):
        vals = [getattr(c, name) for c in flat]
        finite = [v for v in vals if math.isfinite(v)]
        bounds[name] = (min(finite), max(finite)) if finite else (0.0, 0.0)
    bounds["emo"] = (0.0, EMO_WAIT_MAX)
    u = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            t = cells[i][j]
            # an infinite arrival gap is as safe as the largest finite one
            if not math.isfinite(t.safe):
                t = UtilityTerms(bounds["safe"][1], t.eff, t.comf, t.emo)
            if not math.isfinite(t.eff):
                t = UtilityTerms(t.safe, bounds["eff"][1], t.comf, t.emo)
            n = normalize_terms(t, bounds)
            u[i, j] = p.alpha1 * n.safe - p.alpha2 * n.eff - p.alpha3 * n.comf + p.alpha4 * n.emo
    return u


def svo_utility(u_self, u_oppo, svo: float):
    return (1.0 - svo) * u_self + svo * u_oppo


def _argmax_yield_ties(cross_value, yield_value) -> str:
    return CROSS if cross_value > yield_value else YIELD


def level_k_from_matrices(u_hv: np.ndarray, u_av: np.ndarray, svo: float) -> list[str]:
    """Decisions at levels 0, 1 and 2 given both players' utility matrices.

    ``u_hv[i, j]``: human driver chooses i, automated vehicle chooses j.
    ``u_av[j, i]``: the automated vehicle's own view, indexed the other way.
    Level 0 and level 2 belong to the human driver, level 1 to the AV.  The
    level-0 driver does not reason about the AV and treats it as a
    non-reactive vehicle that keeps going (crosses).
    """
    level0 = _argmax_yield_ties(u_hv[0, 0], u_hv[1, 0])
    i0 = DECISIONS.index(level0)
    level1 = _argmax_yield_ties(u_av[0, i0], u_av[1, i0])
    j1 = DECISIONS.index(level1)
    level2 = _argmax_yield_ties(
        svo_utility(u_hv[0, j1], u_av[j1, 0], svo),
        svo_utility(u_hv[1, j1], u_av[j1, 1], svo),
    )
    return [level0, level1, level2]


def level_k_decide(hv: ConflictView, av: ConflictView, params: GameParams, av_passed: bool = False) -> str:
    """The human driver's level-2 decision against the automated vehicle."""
    if av_passed:
        return CROSS
    u_hv = utility_matrix(hv, av, params)
    u_av = utility_matrix(av, hv, params)
    return level_k_from_matrices(u_hv, u_av, params.svo)[-1]
