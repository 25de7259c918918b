"""Ground-truth 2D world: agent kinematics, scenarios, collision/goal tests.

Everything here has value semantics: stepping returns a fresh WorldState and
never mutates its input, so episodes can run in parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

DEFAULT_DT = 0.25
DEFAULT_EPISODE_LIMIT = 30.0
MIN_SPAWN_CLEARANCE = 0.1
MAX_PLACEMENT_TRIES = 10_000


class ScenarioGenerationError(RuntimeError):
    """Raised when rejection sampling cannot place all agents."""


@dataclass
class AgentBody:
    """A holonomic circular agent in the world frame."""

    position: np.ndarray  # (2,) m
    velocity: np.ndarray  # (2,) m/s
    radius: float
    goal: np.ndarray      # (2,) m
    v_pref: float

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        self.goal = np.asarray(self.goal, dtype=float)
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.v_pref <= 0:
            raise ValueError("v_pref must be positive")

    def dist_to_goal(self) -> float:
        return float(np.linalg.norm(self.goal - self.position))


@dataclass
class WorldState:
    """Ground-truth snapshot of the robot and all humans."""

    robot: AgentBody
    humans: list[AgentBody]
    time: float = 0.0
    dt: float = DEFAULT_DT
    episode_limit: float = DEFAULT_EPISODE_LIMIT
    # Group id per human; group-mates share a goal and re-sample it together.
    groups: tuple[int, ...] = ()
    arena_radius: float = 4.0
    # Seed material for deterministic goal re-sampling during stepping.
    goal_seed: int = 0
    resample_count: int = 0


@dataclass
class ScenarioSpec:
    """Parameters of a randomized starting configuration."""

    kind: str = "circle_crossing"  # empty | circle_crossing | grouped
    n_humans: int = 0
    n_groups: int = 0
    radius_range: tuple[float, float] = (0.2, 0.6)
    speed_range: tuple[float, float] = (0.5, 1.8)
    arena_radius: float = 4.0
    seed: int = 0
    robot_radius: float = 0.3
    robot_v_pref: float = 1.0
    dt: float = DEFAULT_DT
    episode_limit: float = DEFAULT_EPISODE_LIMIT

    def __post_init__(self):
        if self.kind not in ("empty", "circle_crossing", "grouped"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.kind == "grouped" and self.n_groups > self.n_humans:
            raise ValueError("n_groups must not exceed n_humans")


def _clear_of(pos: np.ndarray, radius: float, others: list[AgentBody]) -> bool:
    for o in others:
        if np.linalg.norm(pos - o.position) <= radius + o.radius + MIN_SPAWN_CLEARANCE:
            return False
    return True


def _sample_disc(rng: np.random.Generator, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.uniform())
    a = rng.uniform(0.0, 2.0 * np.pi)
    return np.array([r * np.cos(a), r * np.sin(a)])


def generate_scenario(spec: ScenarioSpec) -> WorldState:
    """Place the robot and humans per the scenario kind, rejection-sampled.

    Deterministic given the seed. Raises ScenarioGenerationError when a
    human cannot be placed within MAX_PLACEMENT_TRIES attempts.
    """
    rng = np.random.default_rng(spec.seed)
    r_arena = spec.arena_radius

    robot = AgentBody(
        position=np.array([0.0, -r_arena]),
        velocity=np.zeros(2),
        radius=spec.robot_radius,
        goal=np.array([0.0, r_arena]),
        v_pref=spec.robot_v_pref,
    )

    humans: list[AgentBody] = []
    groups: list[int] = []

    if spec.kind == "empty" or spec.n_humans == 0:
        pass
    elif spec.kind == "circle_crossing":
        for i in range(spec.n_humans):
            radius = rng.uniform(*spec.radius_range)
            speed = rng.uniform(*spec.speed_range)
            for _ in range(MAX_PLACEMENT_TRIES):
                angle = rng.uniform(0.0, 2.0 * np.pi)
                rho = r_arena + rng.uniform(-0.5, 0.5)
                pos = rho * np.array([np.cos(angle), np.sin(angle)])
                if _clear_of(pos, radius, humans + [robot]):
                    break
            else:
                raise ScenarioGenerationError(f"could not place human {i}")
            humans.append(AgentBody(pos, np.zeros(2), radius, -pos, speed))
            groups.append(i)  # everyone is their own group
    else:  # grouped
        n_groups = max(spec.n_groups, 1)
        anchors = [_sample_disc(rng, r_arena) for _ in range(n_groups)]
        goals = [r_arena * _unit(rng.uniform(0.0, 2.0 * np.pi)) for _ in range(n_groups)]
        for i in range(spec.n_humans):
            g = i % n_groups
            radius = rng.uniform(*spec.radius_range)
            speed = rng.uniform(*spec.speed_range)
            for _ in range(MAX_PLACEMENT_TRIES):
                pos = anchors[g] + _sample_disc(rng, 1.5)
                if _clear_of(pos, radius, humans + [robot]):
                    break
            else:
                raise ScenarioGenerationError(f"could not place human {i}")
            humans.append(AgentBody(pos, np.zeros(2), radius, goals[g].copy(), speed))
            groups.append(g)

    return WorldState(
        robot=robot,
        humans=humans,
        time=0.0,
        dt=spec.dt,
        episode_limit=spec.episode_limit,
        groups=tuple(groups),
        arena_radius=r_arena,
        goal_seed=spec.seed,
        resample_count=0,
    )


def _unit(angle: float) -> np.ndarray:
    return np.array([np.cos(angle), np.sin(angle)])


def step_world(world: WorldState, robot_velocity: np.ndarray, human_policy) -> WorldState:
    """Advance every agent by velocity * dt.

    human_policy(world, i) supplies the i-th human's velocity for this step;
    all human velocities are computed against the pre-step world so the
    update is simultaneous. Humans arriving at their goal re-sample a fresh
    one (group-mates together), keeping the crowd in motion.
    """
    robot_velocity = np.asarray(robot_velocity, dtype=float)
    speed = np.linalg.norm(robot_velocity)
    if speed > world.robot.v_pref + 1e-9:
        raise ValueError(f"robot speed {speed} exceeds v_pref {world.robot.v_pref}")

    dt = world.dt
    human_vels = [np.asarray(human_policy(world, i), dtype=float) for i in range(len(world.humans))]

    robot = replace(
        world.robot,
        position=world.robot.position + robot_velocity * dt,
        velocity=robot_velocity,
        goal=world.robot.goal.copy(),
    )
    humans = [
        replace(h, position=h.position + v * dt, velocity=v, goal=h.goal.copy())
        for h, v in zip(world.humans, human_vels)
    ]

    resample_count = world.resample_count
    arrived_groups = sorted(
        {
            g
            for h, g in zip(humans, world.groups)
            if np.linalg.norm(h.goal - h.position) < h.radius
        }
    )
    for g in arrived_groups:
        rng = np.random.default_rng([world.goal_seed, resample_count])
        resample_count += 1
        new_goal = world.arena_radius * _unit(rng.uniform(0.0, 2.0 * np.pi))
        for h, hg in zip(humans, world.groups):
            if hg == g:
                h.goal = new_goal.copy()

    return replace(
        world,
        robot=robot,
        humans=humans,
        time=world.time + dt,
        resample_count=resample_count,
    )


def detect_collision(world: WorldState) -> int | None:
    """First human index whose disc strictly overlaps the robot's, else None."""
    p = world.robot.position
    r = world.robot.radius
    for i, h in enumerate(world.humans):
        if np.linalg.norm(p - h.position) < r + h.radius:
            return i
    return None


def detect_collision_sampled(prev: WorldState, nxt: WorldState) -> int | None:
    """Collision test at the step midpoint and endpoint.

    Sub-sampling the segment mitigates tunneling at high closing speeds; it
    can only report more collisions than the endpoint-only test.
    """
    p_mid = 0.5 * (prev.robot.position + nxt.robot.position)
    r = nxt.robot.radius
    for i, (h0, h1) in enumerate(zip(prev.humans, nxt.humans)):
        h_mid = 0.5 * (h0.position + h1.position)
        if np.linalg.norm(p_mid - h_mid) < r + h1.radius:
            return i
    return detect_collision(nxt)


def goal_reached(world: WorldState) -> bool:
    """True when the robot center is within its own radius of the goal."""
    return world.robot.dist_to_goal() < world.robot.radius


def trajectory_record(world: WorldState, action_index: int, reward: dict, event: str) -> dict:
    """One JSON-lines record of the trajectory log."""
    r = world.robot
    return {
        "t": world.time,
        "robot": {
            "x": float(r.position[0]),
            "y": float(r.position[1]),
            "vx": float(r.velocity[0]),
            "vy": float(r.velocity[1]),
        },
        "humans": [
            {
                "x": float(h.position[0]),
                "y": float(h.position[1]),
                "vx": float(h.velocity[0]),
                "vy": float(h.velocity[1]),
                "r": float(h.radius),
            }
            for h in world.humans
        ],
        "action_index": int(action_index),
        "reward": reward,
        "event": event,
    }
