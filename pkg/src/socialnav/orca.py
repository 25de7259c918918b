"""Optimal Reciprocal Collision Avoidance.

Per neighbor, an agent gets a half-plane of permitted velocities derived
from the truncated velocity obstacle; the new velocity is the feasible
point closest to the preferred velocity, found by a small incremental
linear program with a directional fallback when the constraints are
jointly infeasible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sim import AgentBody, WorldState

ROBOT = -1  # agent_index value designating the robot


@dataclass
class OrcaParams:
    time_horizon: float = 5.0
    neighbor_dist: float = 10.0
    max_neighbors: int = 10
    reciprocity_share: float = 0.5

    def __post_init__(self):
        if self.time_horizon <= 0:
            raise ValueError("time_horizon must be positive")
        if not 0.0 < self.reciprocity_share <= 1.0:
            raise ValueError("reciprocity_share must be in (0, 1]")


@dataclass
class HalfPlane:
    """Permitted velocities: {v : normal . (v - point) >= 0}."""

    point: np.ndarray   # (2,) m/s
    normal: np.ndarray  # (2,) unit

    def permits(self, v: np.ndarray, tol: float = 0.0) -> bool:
        return float(self.normal @ (np.asarray(v) - self.point)) >= -tol


def _det(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def orca_halfplane(self_agent: AgentBody, other: AgentBody, params: OrcaParams, dt: float) -> HalfPlane:
    """Half-plane of velocities keeping self clear of other for time_horizon.

    Overlapping agents use a horizon of one step (dt) so the constraint
    pushes them apart immediately.
    """
    rel_pos = other.position - self_agent.position
    rel_vel = self_agent.velocity - other.velocity
    dist_sq = float(rel_pos @ rel_pos)
    combined_r = self_agent.radius + other.radius
    combined_r_sq = combined_r * combined_r

    if dist_sq > combined_r_sq:
        inv_th = 1.0 / params.time_horizon
        # Vector from the cutoff circle center to the relative velocity.
        w = rel_vel - inv_th * rel_pos
        w_len_sq = float(w @ w)
        dot = float(w @ rel_pos)
        if dot < 0.0 and dot * dot > combined_r_sq * w_len_sq:
            # Project on the cutoff circle.
            w_len = np.sqrt(w_len_sq)
            unit_w = w / w_len
            u = (combined_r * inv_th - w_len) * unit_w
            normal = unit_w
        else:
            # Project on a leg of the velocity obstacle cone.
            leg = np.sqrt(dist_sq - combined_r_sq)
            if _det(rel_pos, w) > 0.0:
                direction = np.array([
                    rel_pos[0] * leg - rel_pos[1] * combined_r,
                    rel_pos[0] * combined_r + rel_pos[1] * leg,
                ]) / dist_sq
            else:
                direction = -np.array([
                    rel_pos[0] * leg + rel_pos[1] * combined_r,
                    -rel_pos[0] * combined_r + rel_pos[1] * leg,
                ]) / dist_sq
            u = float(rel_vel @ direction) * direction - rel_vel
            normal = np.array([-direction[1], direction[0]])
    else:
        # Already overlapping: resolve within one step.
        inv_dt = 1.0 / dt
        w = rel_vel - inv_dt * rel_pos
        w_len = float(np.linalg.norm(w))
        if w_len > 1e-12:
            unit_w = w / w_len
        else:
            d = np.linalg.norm(rel_pos)
            unit_w = -rel_pos / d if d > 1e-12 else np.array([1.0, 0.0])
        u = (combined_r * inv_dt - w_len) * unit_w
        normal = unit_w

    point = self_agent.velocity + params.reciprocity_share * u
    return HalfPlane(point=point, normal=normal / np.linalg.norm(normal))


def _lines_from_halfplanes(halfplanes: list[HalfPlane]) -> list[tuple[np.ndarray, np.ndarray]]:
    # Line representation (point, direction); permitted side is left of direction.
    return [(hp.point, np.array([hp.normal[1], -hp.normal[0]])) for hp in halfplanes]


def _lp1(lines, i, radius, opt_v, directional, result):
    """Optimize along line i subject to lines[0..i-1] and |v| <= radius."""
    point, direction = lines[i]
    dot = float(point @ direction)
    discr = dot * dot + radius * radius - float(point @ point)
    if discr < 0.0:
        return None  # line misses the disc
    sqrt_discr = np.sqrt(discr)
    t_left = -dot - sqrt_discr
    t_right = -dot + sqrt_discr

    for j in range(i):
        p_j, d_j = lines[j]
        denom = _det(direction, d_j)
        numer = _det(d_j, point - p_j)
        if abs(denom) <= 1e-12:
            if numer < 0.0:
                return None  # parallel and on the wrong side
            continue
        t = numer / denom
        if denom >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return None

    if directional:
        t = t_right if float(opt_v @ direction) > 0.0 else t_left
    else:
        t = float(direction @ (opt_v - point))
        t = min(max(t, t_left), t_right)
    return point + t * direction


def _lp2(lines, radius, opt_v, directional):
    """Incremental 2D LP; returns (first failed line index or len, result)."""
    if directional:
        result = opt_v * radius
    elif float(opt_v @ opt_v) > radius * radius:
        result = opt_v / np.linalg.norm(opt_v) * radius
    else:
        result = opt_v.copy()

    for i, (point, direction) in enumerate(lines):
        if _det(direction, point - result) > 0.0:
            new_result = _lp1(lines, i, radius, opt_v, directional, result)
            if new_result is None:
                return i, result
            result = new_result
    return len(lines), result


def _lp3(lines, begin, radius, result):
    """Infeasible fallback: minimize the maximum constraint violation."""
    distance = 0.0
    for i in range(begin, len(lines)):
        point_i, dir_i = lines[i]
        if _det(dir_i, point_i - result) > distance:
            proj_lines: list[tuple[np.ndarray, np.ndarray]] = []
            for j in range(i):
                point_j, dir_j = lines[j]
                determinant = _det(dir_i, dir_j)
                if abs(determinant) <= 1e-12:
                    if float(dir_i @ dir_j) > 0.0:
                        continue  # same direction
                    p = 0.5 * (point_i + point_j)
                else:
                    t = _det(dir_j, point_i - point_j) / determinant
                    p = point_i + t * dir_i
                d = dir_j - dir_i
                proj_lines.append((p, d / np.linalg.norm(d)))
            opt_dir = np.array([-dir_i[1], dir_i[0]])
            count, new_result = _lp2(proj_lines, radius, opt_dir, True)
            if count >= len(proj_lines):
                result = new_result
            distance = _det(dir_i, point_i - result)
    return result


def solve_velocity_program(halfplanes: list[HalfPlane], v_pref: np.ndarray, v_max: float) -> np.ndarray:
    """Velocity closest to v_pref inside all half-planes and |v| <= v_max.

    Constraints are processed in index order, which makes degenerate ties
    deterministic. When the intersection is empty the standard fallback
    program minimizes the worst violation instead.
    """
    if v_max <= 0:
        raise ValueError("v_max must be positive")
    v_pref = np.asarray(v_pref, dtype=float)
    lines = _lines_from_halfplanes(halfplanes)
    fail, result = _lp2(lines, v_max, v_pref, False)
    if fail < len(lines):
        result = _lp3(lines, fail, v_max, result)
    return result


def orca_policy(world: WorldState, agent_index: int, params: OrcaParams, include_robot: bool = True) -> np.ndarray:
    """ORCA step for one agent: aim at the goal, avoid nearby neighbors.

    agent_index = ROBOT selects the robot (which always sees the humans);
    include_robot controls whether a human treats the robot as a neighbor.
    """
    if agent_index == ROBOT:
        agent = world.robot
        others = list(world.humans)
    else:
        agent = world.humans[agent_index]
        others = [h for i, h in enumerate(world.humans) if i != agent_index]
        if include_robot:
            others.append(world.robot)

    to_goal = agent.goal - agent.position
    dist = np.linalg.norm(to_goal)
    v_pref = agent.v_pref * to_goal / dist if dist > 1e-12 else np.zeros(2)

    in_range = [
        (float(np.linalg.norm(o.position - agent.position)), k, o)
        for k, o in enumerate(others)
        if np.linalg.norm(o.position - agent.position) < params.neighbor_dist
    ]
    in_range.sort(key=lambda t: (t[0], t[1]))
    halfplanes = [
        orca_halfplane(agent, o, params, world.dt)
        for _, _, o in in_range[: params.max_neighbors]
    ]
    return solve_velocity_program(halfplanes, v_pref, agent.v_pref)
