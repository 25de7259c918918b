"""Evaluation harness: batch episodes, outcome metrics, path deviation."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import orca
from .env import Action, CrowdEnv
from .sim import ScenarioSpec, WorldState, generate_scenario, trajectory_record


class OrcaRobotPolicy:
    """Baseline: the robot runs ORCA against the humans (no learning)."""

    def __init__(self, env: CrowdEnv):
        self.env = env
        self.last_action_index = -1

    def reset(self, world: WorldState | None = None) -> None:
        pass

    def act(self, world: WorldState, goal=None) -> np.ndarray:
        if goal is None:
            return orca.orca_policy(world, orca.ROBOT, self.env.orca)
        agent = replace(world.robot, goal=np.asarray(goal, dtype=float))
        patched = replace(world, robot=agent)
        return orca.orca_policy(patched, orca.ROBOT, self.env.orca)


@dataclass
class EpisodeRecord:
    outcome: str              # success | collision | timeout
    nav_time: float
    path_length: float
    cumulative_reward: float  # discounted episode return
    trajectory: list[tuple[float, float, float]]  # (t, x, y)
    records: list[dict]       # full trajectory-log records


@dataclass
class EvalMetrics:
    SR: float
    CR: float
    TO: float
    NT: float | None   # mean success duration, None when no successes
    PL: float | None   # mean success path length
    AR: float
    n_episodes: int

    def as_dict(self) -> dict:
        return {
            "SR": self.SR, "CR": self.CR, "TO": self.TO,
            "NT": self.NT, "PL": self.PL, "AR": self.AR,
            "n_episodes": self.n_episodes,
        }


_OUTCOME = {"goal": "success", "collision": "collision", "timeout": "timeout"}


def run_episode(policy, world: WorldState, env: CrowdEnv, gamma: float = 0.9, v_norm: float = 1.0) -> EpisodeRecord:
    """Roll one episode to termination, collecting the trajectory log."""
    policy.reset(world)
    gamma_step = gamma ** (world.dt * v_norm)
    start_pos = world.robot.position.copy()
    traj = [(world.time, float(start_pos[0]), float(start_pos[1]))]
    records = []
    path_length = 0.0
    ep_return = 0.0
    event = "none"
    step = 0
    while event == "none":
        out = policy.act(world)
        if isinstance(out, Action):
            world, _, breakdown, event = env.step(world, out)
        else:
            world, _, breakdown, event = env.step_velocity(world, out)
        p = world.robot.position
        path_length += float(np.linalg.norm(p - np.array(traj[-1][1:])))
        traj.append((world.time, float(p[0]), float(p[1])))
        ep_return += gamma_step ** step * breakdown.total
        records.append(trajectory_record(
            world, getattr(policy, "last_action_index", -1), breakdown.as_dict(), event
        ))
        step += 1
    return EpisodeRecord(
        outcome=_OUTCOME[event],
        nav_time=world.time,
        path_length=path_length,
        cumulative_reward=ep_return,
        trajectory=traj,
        records=records,
    )


def _eval_one(args) -> EpisodeRecord:
    policy_factory, spec, seed, env, gamma, v_norm = args
    world = generate_scenario(replace(spec, seed=seed))
    return run_episode(policy_factory(), world, env, gamma, v_norm)


def evaluate_policy(
    policy_factory,
    scenario_spec: ScenarioSpec,
    n_episodes: int,
    seed: int,
    env: CrowdEnv,
    gamma: float = 0.9,
    v_norm: float = 1.0,
    workers: int = 1,
) -> tuple[EvalMetrics, list[EpisodeRecord]]:
    """Run n_episodes with seeds seed+i and aggregate the outcome metrics.

    policy_factory is a zero-argument callable building a fresh policy
    (picklable when workers > 1); aggregation order is episode order, so
    results do not depend on the worker count.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    jobs = [(policy_factory, scenario_spec, seed + i, env, gamma, v_norm) for i in range(n_episodes)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            episodes = list(pool.map(_eval_one, jobs, chunksize=4))
    else:
        episodes = [_eval_one(j) for j in jobs]

    succ = [e for e in episodes if e.outcome == "success"]
    coll = [e for e in episodes if e.outcome == "collision"]
    tout = [e for e in episodes if e.outcome == "timeout"]
    metrics = EvalMetrics(
        SR=len(succ) / n_episodes,
        CR=len(coll) / n_episodes,
        TO=len(tout) / n_episodes,
        NT=float(np.mean([e.nav_time for e in succ])) if succ else None,
        PL=float(np.mean([e.path_length for e in succ])) if succ else None,
        AR=float(np.mean([e.cumulative_reward for e in episodes])),
        n_episodes=n_episodes,
    )
    return metrics, episodes


def path_deviation(
    trajectory: list[tuple[float, float, float]],
    start: np.ndarray,
    goal: np.ndarray,
) -> tuple[list[float], dict]:
    """Distance of each sample to the straight start->goal segment.

    Points beyond the segment ends measure to the nearest endpoint.
    """
    if not trajectory:
        raise ValueError("trajectory is empty")
    a = np.asarray(start, dtype=float)
    b = np.asarray(goal, dtype=float)
    seg = b - a
    seg_len_sq = float(seg @ seg)
    devs = []
    for _, x, y in trajectory:
        p = np.array([x, y])
        t = 0.0 if seg_len_sq < 1e-18 else float(np.clip((p - a) @ seg / seg_len_sq, 0.0, 1.0))
        devs.append(float(np.linalg.norm(p - (a + t * seg))))
    arr = np.array(devs)
    summary = {"mean": float(arr.mean()), "max": float(arr.max()), "spread": float(arr.std())}
    return devs, summary
