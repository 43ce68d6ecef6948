import math

import numpy as np
import pytest

from timing_rl.env import DrivingEnv
from timing_rl.metrics import (MetricsRow, export_metrics, format_summary, read_metrics, summarize,
                               training_curves)
from timing_rl.sac import SacAgent, SacConfig, to_physical
from timing_rl.scenario import load_scenario
from timing_rl.timing import TimingTaker, timing_factor
from timing_rl.traces import (EpisodeTrace, Trace, TraceWriter, analyze_beta, metrics_from_trace, read_trace,
                              replay_rows)
from timing_rl.trainer import evaluate, lattice_bundle
from timing_rl.variants import PolicyBundle, decide, sac_lattice_select

TINY = SacConfig(hidden=(8, 8))


@pytest.fixture(scope="module")
def spec():
    return load_scenario("intersection")


@pytest.fixture(scope="module")
def env(spec):
    e = DrivingEnv(spec, seed=2)
    e.reset()
    return e


def bundle(mode, obs_dim=67):
    actor = SacAgent(obs_dim, 2 if mode == "sac_lattice" else 1, 0, TINY)
    timing = TimingTaker(obs_dim, 1, sac_cfg=TINY) if mode == "timing_aware" else None
    return PolicyBundle(mode, actor=actor, timing=timing)


class TestVariants:
    def test_gate(self):
        assert sac_lattice_select(1.0, -2.0, 0.0) == 1.0
        assert sac_lattice_select(1.0, -2.0, -1e-9) == -2.0

    def test_validation(self):
        with pytest.raises(ValueError):
            PolicyBundle("nope")
        with pytest.raises(ValueError):
            PolicyBundle("plain_sac")
        with pytest.raises(ValueError):
            PolicyBundle("sac_lattice", actor=SacAgent(67, 1, 0, TINY))
        with pytest.raises(ValueError):
            PolicyBundle("timing_aware", actor=SacAgent(67, 1, 0, TINY))

    def test_lattice_idm_is_planner(self, spec, env):
        d = decide(lattice_bundle(spec), env, env.observe())
        assert d.a_exec == env.base_action()[0] and d.beta == 0.0

    def test_plain_sac_ignores_planner(self, env):
        b = bundle("plain_sac")
        d = decide(b, env, env.observe())
        assert d.a_exec == float(to_physical(b.actor.act(env.observe(), deterministic=True)[0]))
        assert d.beta == 1.0 and d.a_base is None

    def test_sac_lattice_selects(self, env):
        b = bundle("sac_lattice")
        d = decide(b, env, env.observe())
        assert d.a_exec in (d.a_actor, d.a_base)
        assert (d.a_exec == d.a_actor) == (d.a_unit[1] >= 0.0) or d.a_actor == d.a_base

    def test_timing_aware_blend(self, env):
        b = bundle("timing_aware")
        d = decide(b, env, env.observe())
        w = timing_factor(d.T, b.timing_cfg.omega)
        assert d.beta == w
        assert d.a_exec == pytest.approx(w * d.a_actor + (1 - w) * d.a_base, abs=1e-12)
        assert min(d.a_actor, d.a_base) - 1e-12 <= d.a_exec <= max(d.a_actor, d.a_base) + 1e-12


def write_sample(path, vehicles=False):
    with TraceWriter(path, vehicles, {"mode": "x"}) as w:
        w.episode_start(1, 0.0, "r", "l")
        for k, (b, coll) in enumerate([(1.0, False), (0.5, False), (0.0, True)]):
            w.step({"step": k, "clock": 0.1 * (k + 1), "beta": b, "collided": coll, "reached": False,
                    "phase": 1})
        w.episode_end({"outcome": "collision"})
        w.episode_start(2, 5.0, "r", "l")
        for k in range(3):
            w.step({"step": k, "clock": 5.0 + 0.1 * (k + 1), "beta": 1.0, "collided": False,
                    "reached": k == 2, "phase": 2 if k else 1})
        w.episode_end({"outcome": "success"})


class TestTraces:
    @pytest.mark.parametrize("name", ["t.jsonl", "t.jsonl.gz"])
    def test_round_trip(self, tmp_path, name):
        write_sample(tmp_path / name)
        tr = read_trace(tmp_path / name)
        assert tr.header["mode"] == "x" and len(tr.episodes) == 2 and tr.n_steps == 6
        assert len(replay_rows(tr)) == 6

    def test_bad_record(self, tmp_path):
        (tmp_path / "t.jsonl").write_text('{"type": "step"}\n')
        with pytest.raises(ValueError):
            read_trace(tmp_path / "t.jsonl")

    def test_metrics_by_hand(self, tmp_path):
        write_sample(tmp_path / "t.jsonl")
        m = metrics_from_trace(read_trace(tmp_path / "t.jsonl"))
        assert m["success_rate"] == 0.5 and m["collision_rate"] == 0.5 and m["timeout_rate"] == 0.0
        assert m["crossing_time"] == pytest.approx(0.2)
        assert m["beta_minus"] == pytest.approx(1.5 / 6)

    def test_beta_windows(self):
        steps = [{"beta": b, "collided": False} for b in np.linspace(1, 0, 40)]
        steps[-1]["collided"] = True
        clean = [{"beta": 1.0, "collided": False}] * 20
        st = analyze_beta([Trace({}, [EpisodeTrace({}, steps), EpisodeTrace({}, clean)])], dt=0.1)
        vals = 1 - np.linspace(1, 0, 40)
        assert st.overall == pytest.approx(vals.sum() / 60)
        assert st.pre1 == pytest.approx(vals[-10:].mean())
        assert st.pre3 == pytest.approx(vals[-30:].mean())
        assert st.n_collisions == 1 and st.n_steps == 60

    def test_no_collisions(self):
        st = analyze_beta([Trace({}, [EpisodeTrace({}, [{"beta": 0.25}])])])
        assert st.pre1 is None and st.overall == 0.75
        with pytest.raises(ValueError):
            analyze_beta([])


class TestMetrics:
    def row(self, **kw):
        base = dict(model="m", scenario="s", round=0, episodes=10, success_rate=0.5, crossing_time=9.0,
                    collision_rate=0.2, timeout_rate=0.3, beta_minus=0.4)
        return MetricsRow(**{**base, **kw})

    def test_rate_range(self):
        with pytest.raises(ValueError):
            self.row(success_rate=1.5)

    def test_csv_round_trip(self, tmp_path):
        rows = [self.row(), self.row(round=1, crossing_time=math.nan)]
        export_metrics(rows, tmp_path / "m.csv")
        back = read_metrics(tmp_path / "m.csv")
        assert back[0] == rows[0] and math.isnan(back[1].crossing_time)

    def test_summary(self):
        rows = [self.row(success_rate=0.4), self.row(round=1, success_rate=0.6, crossing_time=math.nan)]
        st = summarize(rows)[("m", "s")]
        assert st["success_rate"] == pytest.approx((0.5, 0.1))
        assert st["crossing_time"] == (9.0, 0.0)
        assert "0.500 ± 0.100" in format_summary(rows)

    def test_curves(self):
        eps = [{"step": 10, "return": 1.0, "outcome": "success", "crossing_time": 8.0},
               {"step": 90, "return": 3.0, "outcome": "collision", "crossing_time": None},
               {"step": 150, "return": 5.0, "outcome": "timeout", "crossing_time": None}]
        c = training_curves(eps, window=100)
        assert [r["step"] for r in c] == [100, 200]
        assert c[0]["episode_reward"] == 2.0 and c[0]["collision_rate"] == 0.5 and c[0]["crossing_time"] == 8.0
        assert math.isnan(c[1]["crossing_time"])


@pytest.mark.parametrize("mode", ["lattice_idm", "timing_aware"])
def test_trace_replay_reproduces_metrics(tmp_path, spec, mode):
    b = lattice_bundle(spec) if mode == "lattice_idm" else bundle(mode)
    rows = evaluate(b, spec, 3, rounds=2, seed=5, trace_dir=tmp_path, tag=mode, vehicles=False)
    for r in rows:
        m = metrics_from_trace(read_trace(tmp_path / f"eval_{mode}_round{r.round}.jsonl.gz"))
        assert m["episodes"] == r.episodes == 3
        for k in ("success_rate", "collision_rate", "timeout_rate", "beta_minus"):
            assert m[k] == pytest.approx(getattr(r, k), abs=1e-12)
        if not math.isnan(r.crossing_time):
            assert m["crossing_time"] == pytest.approx(r.crossing_time, abs=1e-9)


def test_evaluate_is_deterministic(spec):
    a = evaluate(lattice_bundle(spec), spec, 2, rounds=1, seed=3)
    b = evaluate(lattice_bundle(spec), spec, 2, rounds=1, seed=3)
    assert a == b
