"""Action selection by one-step lookahead over the value network.

For every discrete action the robot is propagated for one step and each
human for one step at constant velocity; the score is the lookahead
reward plus the discounted value of the resulting joint state. The reward
math here is a vectorized mirror of the environment's scalar path (tested
for parity).
"""

from __future__ import annotations

import numpy as np

from ..env import Action, CrowdEnv, action_space, goal_angle
from ..sim import WorldState
from .network import HIDDEN, NetworkParameters, forward, forward_batch

EVENT_NAMES = ("none", "goal", "collision", "timeout")


def lookahead_batch(world: WorldState, actions: list[Action], env: CrowdEnv, goal=None):
    """Per-action lookahead observations and rewards.

    Returns (robot_obs (A,5), humans_obs (A,n,7), totals (A,), events (A,) int).
    """
    cfg = env.rewards
    dt = world.dt
    r_r = world.robot.radius
    v_pref = world.robot.v_pref
    p = world.robot.position
    goal_ref = world.robot.goal if goal is None else np.asarray(goal, dtype=float)
    theta = goal_angle(world, goal_ref)

    act_v = np.stack([a.velocity for a in actions])  # (A, 2) goal-aligned frame
    c, s = np.cos(theta), np.sin(theta)
    v_world = act_v @ np.array([[c, s], [-s, c]])  # rotate each row by +theta
    speeds = np.linalg.norm(v_world, axis=1)
    over = speeds > v_pref
    if over.any():
        v_world[over] *= (v_pref / speeds[over])[:, None]
    robot_next = p + v_world * dt  # (A, 2)
    n_act = len(actions)

    d_true = np.linalg.norm(robot_next - world.robot.goal, axis=1)
    goal_evt = d_true < r_r
    timed_out = (world.time + dt) > world.episode_limit + 1e-9

    d_g_prev = float(np.linalg.norm(goal_ref - p))
    d_g = np.linalg.norm(robot_next - goal_ref, axis=1)
    route = cfg.route_scale * (d_g_prev - d_g)

    n = len(world.humans)
    if n > 0:
        h_pos = np.stack([h.position for h in world.humans])
        h_vel = np.stack([h.velocity for h in world.humans])
        h_r = np.array([h.radius for h in world.humans])
        h_next = h_pos + h_vel * dt

        dists = np.linalg.norm(robot_next[:, None, :] - h_next[None, :, :], axis=2)  # (A, n)
        mid_r = 0.5 * (p + robot_next)
        mid_h = 0.5 * (h_pos + h_next)
        mid_d = np.linalg.norm(mid_r[:, None, :] - mid_h[None, :, :], axis=2)
        collide = ((dists < r_r + h_r) | (mid_d < r_r + h_r)).any(axis=1)

        h_speed = np.linalg.norm(h_vel, axis=1)
        moving = h_speed >= cfg.speed_threshold
        r_wz = np.where(moving, h_r + cfg.k_s * h_speed, h_r + cfg.stationary_pad)
        to_robot = robot_next[:, None, :] - h_next[None, :, :]
        fwd_dot = np.einsum("anc,nc->an", to_robot, h_vel)
        in_sector = np.where(moving[None, :], fwd_dot >= 0.0, True)
        violated = (dists < (r_wz + h_r)[None, :]) & in_sector
        k = dists - (r_wz + h_r)[None, :]
        k_min = np.where(violated, k, np.inf).min(axis=1)
        any_violated = violated.any(axis=1)
        wz = np.where(
            any_violated,
            cfg.wz_scale * (np.exp(np.where(np.isfinite(k_min), k_min, 0.0)) - cfg.effective_wz_offset),
            route,
        )
        d_s = (dists - r_r - h_r[None, :]).min(axis=1)
        disc = np.where(d_s < cfg.disc_margin, cfg.disc_scale * (d_s - cfg.disc_margin), 0.0)
    else:
        collide = np.zeros(n_act, dtype=bool)
        wz = route
        disc = np.zeros(n_act)

    nav = np.where(collide, cfg.collision_reward, np.where(goal_evt, cfg.goal_reward, 0.0))
    time_term = np.where(~collide & ~goal_evt & timed_out, cfg.timeout_reward, 0.0)
    totals = wz + nav + disc + time_term
    events = np.where(collide, 2, np.where(goal_evt, 1, np.where(timed_out, 3, 0)))

    # Observations of the lookahead configuration, goal-aligned per action.
    to_goal = goal_ref - robot_next
    degenerate = d_g < 1e-9
    theta_next = np.where(degenerate, theta, np.arctan2(to_goal[:, 1], to_goal[:, 0]))
    cn, sn = np.cos(theta_next), np.sin(theta_next)
    vrx = cn * v_world[:, 0] + sn * v_world[:, 1]
    vry = -sn * v_world[:, 0] + cn * v_world[:, 1]
    robot_obs = np.stack(
        [d_g, vrx, vry, np.full(n_act, r_r), np.full(n_act, v_pref)], axis=1
    )

    if n > 0:
        rel = h_next[None, :, :] - robot_next[:, None, :]  # (A, n, 2)
        px = cn[:, None] * rel[:, :, 0] + sn[:, None] * rel[:, :, 1]
        py = -sn[:, None] * rel[:, :, 0] + cn[:, None] * rel[:, :, 1]
        hvx = cn[:, None] * h_vel[None, :, 0] + sn[:, None] * h_vel[None, :, 1]
        hvy = -sn[:, None] * h_vel[None, :, 0] + cn[:, None] * h_vel[None, :, 1]
        humans_obs = np.stack(
            [
                px, py, hvx, hvy,
                np.broadcast_to(h_r, (n_act, n)),
                dists,
                np.broadcast_to(h_r + r_r, (n_act, n)),
            ],
            axis=2,
        )
        order = np.argsort(dists, axis=1, kind="stable")
        humans_obs = np.take_along_axis(humans_obs, order[:, :, None], axis=1)
    else:
        humans_obs = np.zeros((n_act, 0, 7))

    return robot_obs, humans_obs, totals, events


def select_action(
    params: NetworkParameters,
    world: WorldState,
    h_prev: np.ndarray,
    epsilon: float,
    *,
    env: CrowdEnv,
    actions: list[Action],
    gamma: float,
    rng: np.random.Generator,
    goal=None,
    v_norm: float = 1.0,
) -> tuple[Action, np.ndarray]:
    """Epsilon-greedy one-step lookahead; ties go to the lowest action index.

    h_prev is the robot-GRU memory entering the lookahead (i.e. already
    updated with the current observation). Returns (action, scores).
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be a probability")
    n_act = len(actions)
    if epsilon > 0.0 and rng.uniform() < epsilon:
        return actions[int(rng.integers(n_act))], np.zeros(n_act)
    robot_obs, humans_obs, totals, events = lookahead_batch(world, actions, env, goal)
    out = forward_batch(params, humans_obs, robot_obs, np.tile(h_prev, (n_act, 1)))
    # A colliding lookahead step has no continuation, so its score is the
    # immediate reward alone; goal/timeout outcomes keep the value term
    # (V extrapolates smoothly there, and zeroing it would let a collapsed
    # value estimate make collisions look attractive by comparison).
    scores = totals + gamma ** (world.dt * v_norm) * out["V"] * (events != 2)
    return actions[int(np.argmax(scores))], scores


class NetworkPolicy:
    """Episode-scoped policy driving the robot with the value network.

    Keeps the robot-GRU hidden state across steps of one episode; reset()
    zeroes it (and must be called at every episode start).
    """

    def __init__(
        self,
        params: NetworkParameters,
        env: CrowdEnv,
        gamma: float = 0.9,
        v_norm: float = 1.0,
        epsilon: float = 0.0,
        seed: int = 0,
    ):
        self.params = params
        self.env = env
        self.gamma = gamma
        self.v_norm = v_norm
        self.epsilon = epsilon
        self.rng = np.random.default_rng(seed)
        self.actions: list[Action] | None = None
        self.h = np.zeros(HIDDEN)
        # Set by act(): snapshot of the memory before / after the update.
        self.last_h_prev = np.zeros(HIDDEN)
        self.last_joint = None
        self.last_value = 0.0
        self.last_action_index = 0

    def reset(self, world: WorldState | None = None) -> None:
        self.h = np.zeros(HIDDEN)
        if world is not None and self.actions is None:
            self.actions = action_space(world.robot.v_pref)

    def act(self, world: WorldState, goal=None) -> Action:
        from ..env import transform_to_robot_frame

        if self.actions is None:
            self.actions = action_space(world.robot.v_pref)
        joint = transform_to_robot_frame(world, goal)
        out = forward(self.params, joint.humans_array(), joint.robot.flatten(), self.h)
        self.last_h_prev = self.h
        self.last_joint = joint
        self.last_value = out["V"]
        self.h = out["h_next"]

        action, _ = select_action(
            self.params, world, self.h, self.epsilon,
            env=self.env, actions=self.actions, gamma=self.gamma,
            rng=self.rng, goal=goal, v_norm=self.v_norm,
        )
        self.last_action_index = action.index
        return action
