import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from timing_rl.env import DrivingEnv
from timing_rl.observation import (COLLISION_REWARD, EGO_DIM, OBS_DIM, REACHED_REWARD, SECTOR_NAMES,
                                   encode_vehicles, sector_of, step_reward)
from timing_rl.scenario import load_scenario


def deg(a):
    return math.radians(a)


def slot(sector, rank):
    return EGO_DIM + 5 * (2 * SECTOR_NAMES.index(sector) + rank)


def at(angle_deg, dist=10.0, speed=4.0, heading=0.0):
    return (dist * math.cos(deg(angle_deg)), dist * math.sin(deg(angle_deg)), speed, heading)


def encode(others, heading=0.0, speed=4.0, task=0, phase=0):
    return encode_vehicles((0.0, 0.0), heading, speed, task, phase, others, d_max=50.0, v_max=8.0)


class TestSectors:
    @pytest.mark.parametrize("angle,name", [
        (0, "front"), (30, "front"), (30.01, "left_front"), (90, "left_front"), (90.01, "left_rear"),
        (150, "left_rear"), (150.01, "rear"), (180, "rear"), (-150, "rear"), (-149.99, "right_rear"),
        (-90, "right_rear"), (-89.99, "right_front"), (-30, "right_front"), (-29.99, "front"),
    ])
    def test_half_open_bounds(self, angle, name):
        assert SECTOR_NAMES[sector_of(deg(angle))] == name

    @given(st.floats(-math.pi, math.pi, exclude_min=True))
    def test_every_angle_has_one_sector(self, a):
        assert 0 <= sector_of(a) < 6


class TestEncoding:
    def test_layout(self):
        obs = encode([], speed=2.0, task=1, phase=2)
        assert obs.shape == (OBS_DIM,)
        assert obs[:3].tolist() == [0, 1, 0]
        assert obs[3:6].tolist() == [0, 0, 1]
        assert obs[6] == 0.25
        assert not obs[EGO_DIM:].any()

    def test_slot_index_and_values(self):
        obs = encode([at(45.0, dist=20.0, speed=6.0, heading=math.pi / 2)])
        b = slot("left_front", 0)
        assert obs[b:b + 5] == pytest.approx([1.0, 0.4, 0.75, 0.25, 0.75])
        assert obs.sum() == pytest.approx(1 + 1 + 0.5 + sum([1.0, 0.4, 0.75, 0.25, 0.75]))

    def test_two_nearest_per_sector(self):
        obs = encode([at(0, 30.0), at(5, 10.0), at(-5, 20.0)])
        assert obs[slot("front", 0) + 1] == pytest.approx(0.2)
        assert obs[slot("front", 1) + 1] == pytest.approx(0.4)

    def test_out_of_range_ignored(self):
        assert not encode([at(0, 50.5)])[EGO_DIM:].any()

    def test_relative_to_heading(self):
        # a car due north is "front" for an ego heading north
        obs = encode([at(90.0)], heading=math.pi / 2)
        assert obs[slot("front", 0)] == 1.0

    def test_rear_angle_continuous_across_wrap(self):
        left = encode([at(179.0)])[slot("rear", 0) + 3]
        right = encode([at(-179.0)])[slot("rear", 0) + 3]
        assert left == pytest.approx(29 / 60) and right == pytest.approx(31 / 60)

    @given(st.lists(st.tuples(st.floats(-60, 60), st.floats(-60, 60), st.floats(0, 20), st.floats(-7, 7)),
                    max_size=20), st.floats(-4, 4), st.floats(0, 20))
    def test_bounded(self, others, heading, speed):
        obs = encode(others, heading=heading, speed=speed)
        assert np.all((obs >= 0) & (obs <= 1))


class TestReward:
    def ev(self, reached=False, collided=False):
        return SimpleNamespace(reached=reached, collided=collided)

    def test_terminal(self):
        assert step_reward(self.ev(reached=True), 3.0) == REACHED_REWARD == 20.0
        assert step_reward(self.ev(collided=True), 3.0) == COLLISION_REWARD == -20.0

    def test_speed_term(self):
        assert step_reward(self.ev(), 4.0) == 0.25
        assert step_reward(self.ev(), 0.0) == 0.0
        assert step_reward(self.ev(), 9.0) == 0.5

    @given(st.floats(0, 30), st.booleans(), st.booleans())
    def test_contract(self, v, reached, collided):
        r = step_reward(self.ev(reached, collided), v)
        assert r in (-20.0, 20.0) or 0.0 <= r <= 0.5


def test_env_observation_in_unit_box():
    env = DrivingEnv(load_scenario("intersection"), seed=3)
    obs = env.reset()
    for _ in range(100):
        assert obs.shape == (OBS_DIM,) and np.all((obs >= 0) & (obs <= 1))
        obs, _, term, trunc, _ = env.step(1.0)
        if term or trunc:
            obs = env.reset()
