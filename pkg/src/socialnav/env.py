"""Robot-centric MDP: observations, warning zones, multi-term reward, stepping.

The observation frame is translated to the robot and rotated so +x points at
the goal. All reward terms depend only on distances and relative geometry,
so they are invariant under global rotation/translation of the world.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import sim
from .orca import OrcaParams, orca_policy
from .sim import AgentBody, WorldState


class DegenerateGoalError(ValueError):
    """Robot sits exactly on its goal; the observation rotation is undefined."""


@dataclass
class RewardConfig:
    wz_scale: float = 0.2
    wz_offset: float = 0.3
    route_scale: float = 0.01
    disc_scale: float = 0.25
    disc_margin: float = 0.3
    goal_reward: float = 10.0
    collision_reward: float = -0.25
    timeout_reward: float = -10.0
    k_s: float = 1.0            # seconds of lookahead folded into the zone radius
    stationary_pad: float = 0.2  # zone padding for humans below the speed threshold
    speed_threshold: float = 0.1
    # Replaces wz_offset with 1.0 so the zone term is zero at the boundary
    # and strictly negative inside (pure penalty variant).
    wz_shifted: bool = False

    @property
    def effective_wz_offset(self) -> float:
        return 1.0 if self.wz_shifted else self.wz_offset


@dataclass
class RobotObservation:
    d_g: float
    velocity: np.ndarray  # (2,) robot-centric
    radius: float
    v_max: float

    def flatten(self) -> np.ndarray:
        return np.array([self.d_g, self.velocity[0], self.velocity[1], self.radius, self.v_max])


@dataclass
class HumanObservation:
    position: np.ndarray  # (2,) robot-centric
    velocity: np.ndarray  # (2,) robot-centric
    radius: float
    dist: float           # distance robot center -> human center
    r_sum: float          # human radius + robot radius

    def flatten(self) -> np.ndarray:
        return np.array([
            self.position[0], self.position[1],
            self.velocity[0], self.velocity[1],
            self.radius, self.dist, self.r_sum,
        ])


@dataclass
class JointState:
    robot: RobotObservation
    humans: list[HumanObservation]

    def humans_array(self) -> np.ndarray:
        if not self.humans:
            return np.zeros((0, 7))
        return np.stack([h.flatten() for h in self.humans])


@dataclass
class WarningZone:
    """Sector (or full disc) around a human; same frame as its inputs."""

    center: np.ndarray
    radius: float
    heading: float
    half_angle: float


@dataclass
class RewardBreakdown:
    wz: float
    route: float
    disc: float
    nav: float
    time: float
    total: float

    def as_dict(self) -> dict:
        return {
            "wz": self.wz, "route": self.route, "disc": self.disc,
            "nav": self.nav, "time": self.time, "total": self.total,
        }


@dataclass
class Action:
    index: int
    velocity: np.ndarray  # (2,) in the goal-aligned robot frame


def rotate(v: np.ndarray, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def goal_angle(world: WorldState, goal: np.ndarray | None = None) -> float:
    g = world.robot.goal if goal is None else np.asarray(goal, dtype=float)
    d = g - world.robot.position
    if np.linalg.norm(d) < 1e-9:
        raise DegenerateGoalError("robot is on its goal; rotation undefined")
    return float(np.arctan2(d[1], d[0]))


def _transform(world: WorldState, goal: np.ndarray, theta: float) -> JointState:
    p_r = world.robot.position
    d_g = float(np.linalg.norm(goal - p_r))
    robot = RobotObservation(
        d_g=d_g,
        velocity=rotate(world.robot.velocity, -theta),
        radius=world.robot.radius,
        v_max=world.robot.v_pref,
    )
    humans = []
    for i, h in enumerate(world.humans):
        rel = h.position - p_r
        humans.append((float(np.linalg.norm(rel)), i, HumanObservation(
            position=rotate(rel, -theta),
            velocity=rotate(h.velocity, -theta),
            radius=h.radius,
            dist=float(np.linalg.norm(rel)),
            r_sum=h.radius + world.robot.radius,
        )))
    humans.sort(key=lambda t: (t[0], t[1]))
    return JointState(robot=robot, humans=[h for _, _, h in humans])


def transform_to_robot_frame(world: WorldState, goal: np.ndarray | None = None) -> JointState:
    """Robot-centric joint state; humans ordered by ascending distance.

    An explicit goal substitutes for the robot's own (sub-goal navigation).
    """
    g = world.robot.goal if goal is None else np.asarray(goal, dtype=float)
    return _transform(world, g, goal_angle(world, g))


def warning_zone(human: AgentBody, dt: float, cfg: RewardConfig = RewardConfig()) -> WarningZone:
    """Dynamic zone around a human, sized by its radius and speed.

    Moving humans get a forward sector whose radius grows with speed;
    near-stationary ones get a small padded circle.
    """
    return _zone(human.position, human.velocity, human.radius, cfg)


def _zone(center: np.ndarray, velocity: np.ndarray, radius: float, cfg: RewardConfig) -> WarningZone:
    speed = float(np.linalg.norm(velocity))
    if speed >= cfg.speed_threshold:
        return WarningZone(
            center=np.asarray(center, dtype=float),
            radius=radius + cfg.k_s * speed,
            heading=float(np.arctan2(velocity[1], velocity[0])),
            half_angle=np.pi / 2,
        )
    return WarningZone(
        center=np.asarray(center, dtype=float),
        radius=radius + cfg.stationary_pad,
        heading=0.0,
        half_angle=np.pi,
    )


def zones_for_joint(joint: JointState, cfg: RewardConfig = RewardConfig()) -> list[WarningZone]:
    return [_zone(h.position, h.velocity, h.radius, cfg) for h in joint.humans]


def _zone_violated(zone: WarningZone, human: HumanObservation) -> bool:
    # Robot is at the origin of the joint-state frame.
    if human.dist >= zone.radius + human.radius:
        return False
    if zone.half_angle >= np.pi:
        return True
    to_robot = -human.position
    bearing = float(np.arctan2(to_robot[1], to_robot[0]))
    diff = (bearing - zone.heading + np.pi) % (2.0 * np.pi) - np.pi
    return abs(diff) <= zone.half_angle


def reward_route(d_g_now: float, d_g_prev: float, cfg: RewardConfig = RewardConfig()) -> float:
    """Progress-toward-goal shaping term."""
    return cfg.route_scale * (-d_g_now + d_g_prev)


def reward_warning_zone(
    joint: JointState,
    zones: list[WarningZone],
    d_g_prev: float,
    cfg: RewardConfig = RewardConfig(),
) -> float:
    """Exponential zone term for the deepest violation, else the route term."""
    if len(zones) != len(joint.humans):
        raise ValueError("zones must correspond 1-1 with humans")
    k_min = None
    for human, zone in zip(joint.humans, zones):
        if _zone_violated(zone, human):
            k = human.dist - zone.radius - human.radius
            if k_min is None or k < k_min:
                k_min = k
    if k_min is not None:
        return cfg.wz_scale * (np.exp(k_min) - cfg.effective_wz_offset)
    return reward_route(joint.robot.d_g, d_g_prev, cfg)


def reward_discomfort(joint: JointState, cfg: RewardConfig = RewardConfig()) -> float:
    """Penalty when the nearest human surface comes within the comfort margin."""
    if not joint.humans:
        return 0.0
    d_s = min(h.dist - joint.robot.radius - h.radius for h in joint.humans)
    if d_s < cfg.disc_margin:
        return cfg.disc_scale * (d_s - cfg.disc_margin)
    return 0.0


def reward_nav_time(event: str, cfg: RewardConfig = RewardConfig()) -> tuple[float, float]:
    """(nav, time) terminal terms for the step's event."""
    if event == "goal":
        return cfg.goal_reward, 0.0
    if event == "collision":
        return cfg.collision_reward, 0.0
    if event == "timeout":
        return 0.0, cfg.timeout_reward
    return 0.0, 0.0


def action_space(v_max: float) -> list[Action]:
    """Stop plus 5 exponentially spaced speeds x 16 uniform headings."""
    if v_max <= 0:
        raise ValueError("v_max must be positive")
    actions = [Action(0, np.zeros(2))]
    speeds = [v_max * (np.exp(i / 5.0) - 1.0) / (np.e - 1.0) for i in range(1, 6)]
    headings = [2.0 * np.pi * k / 16.0 for k in range(16)]
    idx = 1
    for s in speeds:
        for a in headings:
            actions.append(Action(idx, np.array([s * np.cos(a), s * np.sin(a)])))
            idx += 1
    return actions


class CrowdEnv:
    """Couples the kinematic world, ORCA humans, and the reward system."""

    def __init__(
        self,
        rewards: RewardConfig | None = None,
        orca: OrcaParams | None = None,
        humans_see_robot: bool = False,
    ):
        self.rewards = rewards if rewards is not None else RewardConfig()
        self.orca = orca if orca is not None else OrcaParams()
        self.humans_see_robot = humans_see_robot

    def human_policy(self, world: WorldState, i: int) -> np.ndarray:
        return orca_policy(world, i, self.orca, include_robot=self.humans_see_robot)

    def world_velocity(self, world: WorldState, action: Action, goal: np.ndarray | None = None) -> np.ndarray:
        """De-rotate an action from the goal-aligned frame into the world frame."""
        v = rotate(action.velocity, goal_angle(world, goal))
        speed = np.linalg.norm(v)
        if speed > world.robot.v_pref:
            v = v * (world.robot.v_pref / speed)
        return v

    def step(
        self,
        world: WorldState,
        action: Action,
        goal: np.ndarray | None = None,
    ) -> tuple[WorldState, JointState, RewardBreakdown, str]:
        """One environment step; reward evaluated on the post-step configuration.

        Event precedence: collision > goal > timeout > none. The optional
        goal substitutes for the robot's own in the observation and route
        reward (sub-goal navigation); termination events always use the
        robot's true goal.
        """
        goal_ref = world.robot.goal if goal is None else np.asarray(goal, dtype=float)
        theta_pre = goal_angle(world, goal_ref)
        v_world = rotate(action.velocity, theta_pre)
        return self.step_velocity(world, v_world, goal)

    def step_velocity(
        self,
        world: WorldState,
        v_world: np.ndarray,
        goal: np.ndarray | None = None,
    ) -> tuple[WorldState, JointState, RewardBreakdown, str]:
        """Like step() but with the robot command given directly in the world frame."""
        goal_ref = world.robot.goal if goal is None else np.asarray(goal, dtype=float)
        theta_pre = goal_angle(world, goal_ref)
        d_g_prev = float(np.linalg.norm(goal_ref - world.robot.position))

        v_world = np.asarray(v_world, dtype=float)
        speed = np.linalg.norm(v_world)
        if speed > world.robot.v_pref:
            v_world = v_world * (world.robot.v_pref / speed)

        nxt = sim.step_world(world, v_world, self.human_policy)

        if sim.detect_collision_sampled(world, nxt) is not None:
            event = "collision"
        elif sim.goal_reached(nxt):
            event = "goal"
        elif nxt.time > nxt.episode_limit + 1e-9:
            event = "timeout"
        else:
            event = "none"

        if np.linalg.norm(goal_ref - nxt.robot.position) < 1e-9:
            joint = _transform(nxt, goal_ref, theta_pre)
        else:
            joint = _transform(nxt, goal_ref, goal_angle(nxt, goal_ref))

        breakdown = self.reward_for(joint, d_g_prev, event)
        return nxt, joint, breakdown, event

    def reward_for(self, joint: JointState, d_g_prev: float, event: str) -> RewardBreakdown:
        cfg = self.rewards
        zones = zones_for_joint(joint, cfg)
        wz = reward_warning_zone(joint, zones, d_g_prev, cfg)
        route = reward_route(joint.robot.d_g, d_g_prev, cfg)
        disc = reward_discomfort(joint, cfg)
        nav, time_term = reward_nav_time(event, cfg)
        total = wz + nav + disc + time_term
        return RewardBreakdown(wz=wz, route=route, disc=disc, nav=nav, time=time_term, total=total)
