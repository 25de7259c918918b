import numpy as np
import pytest

from socialnav.sim import AgentBody, WorldState


def make_robot(pos=(0.0, -4.0), goal=(0.0, 4.0), radius=0.3, v_pref=1.0, vel=(0.0, 0.0)):
    return AgentBody(np.array(pos, dtype=float), np.array(vel, dtype=float),
                     radius, np.array(goal, dtype=float), v_pref)


def make_human(pos, vel=(0.0, 0.0), radius=0.3, goal=None, v_pref=1.0):
    goal = pos if goal is None else goal
    return AgentBody(np.array(pos, dtype=float), np.array(vel, dtype=float),
                     radius, np.array(goal, dtype=float), v_pref)


def make_world(robot=None, humans=(), **kwargs):
    robot = robot if robot is not None else make_robot()
    humans = list(humans)
    kwargs.setdefault("groups", tuple(range(len(humans))))
    return WorldState(robot=robot, humans=humans, **kwargs)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
