import copy
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import rollout_reward_errors, timing_discount_errors
from timing_rl.env import DrivingEnv
from timing_rl.sac import SacAgent, SacConfig
from timing_rl.scenario import load_scenario
from timing_rl.timing import (TimingConfig, TimingTaker, beta, blend_action, discounted_sum, imagination_rollout,
                              joint_input, raw_to_horizon, timing_factor, timing_update)

OMEGAS = (1.0, 2.0, 4.0, 8.0)


class TestBeta:
    def test_endpoints(self):
        for T in range(1, 33):
            for w in OMEGAS:
                assert abs(beta(T, 0, w)) < 1e-12 and abs(beta(T, T, w) - 1) < 1e-12

    def test_factor_two_is_half(self):
        for w in OMEGAS + (0.3, 17.0):
            assert timing_factor(2, w) == 0.5

    def test_factor_one_is_immediate(self):
        assert timing_factor(1, 4.0) == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("w", OMEGAS)
    def test_factor_non_increasing(self, w):
        f = [timing_factor(T, w) for T in range(1, 65)]
        assert all(a >= b for a, b in zip(f, f[1:]))

    def test_hand_value(self):
        # T=4, dt=1, omega=4: 0.5 (tanh(-1) / tanh(2) + 1)
        assert beta(4, 1, 4.0) == pytest.approx(0.5 * (math.tanh(-1) / math.tanh(2) + 1), abs=1e-15)

    @given(st.integers(1, 40), st.sampled_from(OMEGAS))
    def test_monotone_and_symmetric(self, T, w):
        b = [beta(T, k, w) for k in range(T + 1)]
        assert all(x < y for x, y in zip(b, b[1:]))
        for k in range(T + 1):
            assert b[k] + b[T - k] == pytest.approx(1.0, abs=1e-12)

    def test_domain(self):
        with pytest.raises(ValueError):
            beta(0, 0, 4.0)
        with pytest.raises(ValueError):
            beta(3, 4, 4.0)
        with pytest.raises(ValueError):
            TimingConfig(t_max=1)
        with pytest.raises(ValueError):
            TimingConfig(omega=0.0)


class TestBlend:
    def test_weights(self):
        assert blend_action(2.0, -3.0, 1.0) == 2.0
        assert blend_action(2.0, -3.0, 0.0) == -3.0
        assert blend_action(2.0, -3.0, 0.5) == -0.5

    def test_weight_range(self):
        with pytest.raises(ValueError):
            blend_action(0.0, 0.0, 1.5)


class TestHorizon:
    @pytest.mark.parametrize("raw,T", [(-1.0, 1), (1.0, 8), (0.0, 5), (-0.99, 1), (-0.8, 2), (0.99, 8)])
    def test_values(self, raw, T):
        assert raw_to_horizon(raw, 8) == T

    @given(st.floats(-1, 1), st.floats(-1, 1))
    def test_monotone_in_range(self, a, b):
        lo, hi = sorted((a, b))
        assert 1 <= raw_to_horizon(lo, 8) <= raw_to_horizon(hi, 8) <= 8

    def test_every_horizon_reachable(self):
        assert {raw_to_horizon(r, 8) for r in np.linspace(-1, 1, 1001)} == set(range(1, 9))


@pytest.fixture(scope="module")
def env():
    e = DrivingEnv(load_scenario("intersection"), seed=11)
    e.reset()
    for _ in range(30):
        e.step(0.5)
    return e


class TestImagination:
    def test_source_untouched(self, env):
        before = (env.world.serialize(), env.steps, env.world.rng.bit_generator.state)
        imagination_rollout(env, 2.0, 8, TimingConfig(), seed=1)
        assert (env.world.serialize(), env.steps, env.world.rng.bit_generator.state) == before

    def test_blend_schedule_logged(self, env):
        cfg = TimingConfig(omega=4.0)
        res = imagination_rollout(env, 1.5, 6, cfg, seed=2)
        for rec in res.log:
            assert rec["beta"] == beta(6, rec["k"], 4.0)
            assert rec["a_exec"] == pytest.approx(blend_action(1.5, rec["a_base"], rec["beta"]))
        assert res.steps == len(res.log) <= 6

    def test_horizon_one_executes_actor_action(self, env):
        res = imagination_rollout(env, -2.0, 1, TimingConfig(), seed=3)
        assert res.steps == 1 and res.log[0]["a_exec"] == -2.0

    def test_reproducible_with_seed(self, env):
        a = imagination_rollout(env, 0.3, 5, TimingConfig(), seed=4)
        b = imagination_rollout(env, 0.3, 5, TimingConfig(), seed=4)
        assert a.reward == b.reward and np.array_equal(a.obs, b.obs)

    def test_horizon_checked(self, env):
        with pytest.raises(ValueError):
            imagination_rollout(env, 0.0, 9, TimingConfig())

    def test_reward_is_discounted_log_sum(self):
        worst, steps = rollout_reward_errors(40, seed=1)
        assert worst < 1e-9 and steps > 40

    def test_discounted_sum(self):
        assert discounted_sum([1.0, 1.0, 1.0], 0.5) == 1.75
        assert discounted_sum([], 0.9) == 0.0


class TestTimingAgent:
    def test_gamma_power_horizon(self):
        for seed in range(5):
            assert timing_discount_errors(seed) < 1e-12

    def test_joint_input(self):
        assert joint_input(np.zeros(3), 0.5).tolist() == [0, 0, 0, 0.5]
        assert joint_input(np.zeros((2, 3)), np.ones((2, 1))).shape == (2, 4)

    def test_decide_range_and_determinism(self):
        t = TimingTaker(4, seed=0, sac_cfg=SacConfig(hidden=(8, 8)))
        obs = np.ones(4)
        d1, d2 = t.decide(obs, 0.2, deterministic=True), t.decide(obs, 0.2, deterministic=True)
        assert d1 == d2 and 1 <= d1.T <= 8
        assert all(1 <= t.decide(obs, 0.2).T <= 8 for _ in range(50))

    def test_update_consumes_actor_sample(self):
        actor = SacAgent(4, 1, 0, SacConfig(hidden=(8, 8)))
        taker = SacAgent(5, 1, 1, SacConfig(hidden=(8, 8)))
        rng = np.random.default_rng(0)
        batch = {"s": rng.normal(size=(8, 5)), "a": rng.uniform(-1, 1, (8, 1)), "r": rng.normal(size=8),
                 "s2": rng.normal(size=(8, 4)), "done": np.zeros(8), "T": np.full(8, 3.0)}
        state = copy.deepcopy(actor.rng.bit_generator.state)
        stats = timing_update(taker, batch, 0.99, actor)
        assert actor.rng.bit_generator.state != state
        assert np.isfinite(stats["critic_loss"]) and taker.updates == 1
