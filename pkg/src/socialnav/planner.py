"""Global planning: occupancy grid, Dijkstra path, sub-goals, navigation loop.

The grid holds static structure only; dynamic humans are the learned
policy's problem. The navigation loop replans when the robot strays from
the current path and hands the policy a sub-goal a fixed arc length ahead.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .env import CrowdEnv
from .sim import WorldState, trajectory_record

DEFAULT_RESOLUTION = 0.1
DEFAULT_SUBGOAL_DIST = 2.0
DEFAULT_DEVIATION_THRESHOLD = 0.5

MAP_MAGIC = "MESAMAP"

# 8-connected neighborhood in row-major order (dy, dx).
_NEIGHBORS = [
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 1),
    (1, -1), (1, 0), (1, 1),
]


class NoPathError(RuntimeError):
    """Goal unreachable in the occupancy grid."""


@dataclass
class OccupancyGrid:
    width: int
    height: int
    resolution: float
    origin: np.ndarray        # (2,) metric position of cell (0, 0)'s corner
    cells: np.ndarray         # (height, width) bool, True = occupied

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.cells = np.asarray(self.cells, dtype=bool).reshape(self.height, self.width)
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")

    def cell_of(self, point: np.ndarray) -> tuple[int, int]:
        col = int(np.floor((point[0] - self.origin[0]) / self.resolution))
        row = int(np.floor((point[1] - self.origin[1]) / self.resolution))
        return row, col

    def center_of(self, row: int, col: int) -> np.ndarray:
        return self.origin + self.resolution * (np.array([col, row]) + 0.5)

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.height and 0 <= col < self.width

    def free(self, row: int, col: int) -> bool:
        return self.in_bounds(row, col) and not self.cells[row, col]

    def save(self, path: str | Path) -> None:
        lines = [f"{MAP_MAGIC} {self.width} {self.height} {self.resolution:g} "
                 f"{self.origin[0]:g} {self.origin[1]:g}"]
        for row in range(self.height):  # row 0 = minimum y
            lines.append("".join("1" if c else "0" for c in self.cells[row]))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "OccupancyGrid":
        text = Path(path).read_text().splitlines()
        header = text[0].split()
        if not header or header[0] != MAP_MAGIC:
            raise ValueError(f"{path}: not a {MAP_MAGIC} file")
        width, height = int(header[1]), int(header[2])
        resolution = float(header[3])
        origin = np.array([float(header[4]), float(header[5])])
        rows = text[1 : 1 + height]
        if len(rows) != height or any(len(r) != width for r in rows):
            raise ValueError(f"{path}: grid body does not match header dims")
        cells = np.array([[ch == "1" for ch in r] for r in rows])
        return cls(width, height, resolution, origin, cells)


@dataclass
class PlanPath:
    waypoints: list[np.ndarray]
    cost: float

    def as_array(self) -> np.ndarray:
        return np.stack(self.waypoints)


def _square_to_point_dist(lo: np.ndarray, hi: np.ndarray, p: np.ndarray) -> float:
    d = np.maximum(np.maximum(lo - p, 0.0), p - hi)
    return float(np.linalg.norm(d))


def _square_to_rect_dist(lo_a, hi_a, lo_b, hi_b) -> float:
    dx = max(lo_b[0] - hi_a[0], lo_a[0] - hi_b[0], 0.0)
    dy = max(lo_b[1] - hi_a[1], lo_a[1] - hi_b[1], 0.0)
    return float(np.hypot(dx, dy))


def build_grid(
    width: int,
    height: int,
    resolution: float,
    obstacles: list[dict],
    origin: np.ndarray | None = None,
    inflation: float = 0.3,
) -> OccupancyGrid:
    """Rasterize discs/rectangles, inflated by the robot radius.

    Obstacles: {"type": "disc", "center": [x, y], "radius": r} or
    {"type": "rect", "min": [x, y], "max": [x, y]}.
    """
    if width <= 0 or height <= 0:
        raise ValueError("grid dims must be positive")
    if origin is None:
        origin = -0.5 * resolution * np.array([width, height])
    cells = np.zeros((height, width), dtype=bool)
    for row in range(height):
        for col in range(width):
            lo = origin + resolution * np.array([col, row])
            hi = lo + resolution
            for obs in obstacles:
                if obs["type"] == "disc":
                    d = _square_to_point_dist(lo, hi, np.asarray(obs["center"], dtype=float))
                    if d < obs["radius"] + inflation:
                        cells[row, col] = True
                        break
                elif obs["type"] == "rect":
                    d = _square_to_rect_dist(
                        lo, hi, np.asarray(obs["min"], dtype=float), np.asarray(obs["max"], dtype=float)
                    )
                    if d < inflation:
                        cells[row, col] = True
                        break
                else:
                    raise ValueError(f"unknown obstacle type {obs['type']!r}")
    return OccupancyGrid(width, height, resolution, origin, cells)


def dijkstra_path(grid: OccupancyGrid, start: np.ndarray, goal: np.ndarray) -> PlanPath:
    """Minimum-cost 8-connected path between the cells containing start/goal.

    Diagonal moves are forbidden when both adjacent orthogonal cells are
    occupied (no squeezing between blocked corners). Waypoints are metric
    cell centers.
    """
    s = grid.cell_of(np.asarray(start, dtype=float))
    g = grid.cell_of(np.asarray(goal, dtype=float))
    for name, cell in (("start", s), ("goal", g)):
        if not grid.free(*cell):
            raise ValueError(f"{name} cell {cell} is occupied or out of bounds")
    if s == g:
        return PlanPath([grid.center_of(*s)], 0.0)

    res = grid.resolution
    diag = np.sqrt(2.0) * res
    dist = {s: 0.0}
    prev: dict[tuple[int, int], tuple[int, int]] = {}
    counter = 0
    heap = [(0.0, counter, s)]
    done = set()
    while heap:
        d, _, cell = heapq.heappop(heap)
        if cell in done:
            continue
        done.add(cell)
        if cell == g:
            break
        row, col = cell
        for dy, dx in _NEIGHBORS:
            nxt = (row + dy, col + dx)
            if not grid.free(*nxt):
                continue
            if dy != 0 and dx != 0 and not (grid.free(row, col + dx) or grid.free(row + dy, col)):
                continue
            step = diag if dy != 0 and dx != 0 else res
            nd = d + step
            if nd < dist.get(nxt, np.inf):
                dist[nxt] = nd
                prev[nxt] = cell
                counter += 1
                heapq.heappush(heap, (nd, counter, nxt))
    if g not in done:
        raise NoPathError(f"no path from {s} to {g}")

    cells = [g]
    while cells[-1] != s:
        cells.append(prev[cells[-1]])
    cells.reverse()
    return PlanPath([grid.center_of(*c) for c in cells], dist[g])


def _project_arc_length(path: PlanPath, point: np.ndarray) -> float:
    """Arc length along the path of the polyline point nearest to `point`."""
    best_d = np.inf
    best_s = 0.0
    s = 0.0
    wps = path.waypoints
    if len(wps) == 1:
        return 0.0
    for a, b in zip(wps[:-1], wps[1:]):
        seg = b - a
        seg_len = float(np.linalg.norm(seg))
        t = 0.0 if seg_len < 1e-12 else float(np.clip((point - a) @ seg / seg_len**2, 0.0, 1.0))
        proj = a + t * seg
        d = float(np.linalg.norm(point - proj))
        if d < best_d:
            best_d = d
            best_s = s + t * seg_len
        s += seg_len
    return best_s


def path_point_at(path: PlanPath, arc: float) -> np.ndarray:
    """Point at a given arc length, clamped to the final waypoint."""
    wps = path.waypoints
    s = 0.0
    for a, b in zip(wps[:-1], wps[1:]):
        seg_len = float(np.linalg.norm(b - a))
        if s + seg_len >= arc and seg_len > 1e-12:
            t = (arc - s) / seg_len
            return a + t * (b - a)
        s += seg_len
    return wps[-1].copy()


def select_subgoal(path: PlanPath, robot_pos: np.ndarray, d_sub: float = DEFAULT_SUBGOAL_DIST) -> np.ndarray:
    """Sub-goal d_sub of arc length ahead of the robot's projection."""
    if not path.waypoints:
        raise ValueError("path is empty")
    s = _project_arc_length(path, np.asarray(robot_pos, dtype=float))
    return path_point_at(path, s + d_sub)


def path_deviation_from(path: PlanPath, point: np.ndarray) -> float:
    s = _project_arc_length(path, np.asarray(point, dtype=float))
    return float(np.linalg.norm(path_point_at(path, s) - point))


def run_navigation(
    policy,
    world: WorldState,
    grid: OccupancyGrid,
    env: CrowdEnv,
    d_sub: float = DEFAULT_SUBGOAL_DIST,
    deviation_threshold: float = DEFAULT_DEVIATION_THRESHOLD,
) -> dict:
    """Sub-goal navigation loop coupling the planner to the policy.

    Replans when no path exists or the robot deviates from the current one
    by more than deviation_threshold; the selected sub-goal replaces the
    true goal in the policy's observation. Termination events always use
    the true goal.
    """
    policy.reset(world)
    path = dijkstra_path(grid, world.robot.position, world.robot.goal)
    records = []
    subgoals = []
    event = "none"
    while event == "none":
        if path_deviation_from(path, world.robot.position) > deviation_threshold:
            try:
                path = dijkstra_path(grid, world.robot.position, world.robot.goal)
            except (ValueError, NoPathError):
                # Robot is momentarily in an invalid cell; keep the old path.
                pass
        subgoal = select_subgoal(path, world.robot.position, d_sub)
        subgoals.append(subgoal)
        action = policy.act(world, goal=subgoal)
        if hasattr(action, "velocity"):
            world, _, breakdown, event = env.step(world, action, goal=subgoal)
            action_index = action.index
        else:  # policy returned a world-frame velocity (e.g. an ORCA baseline)
            world, _, breakdown, event = env.step_velocity(world, action, goal=subgoal)
            action_index = -1
        records.append(trajectory_record(world, action_index, breakdown.as_dict(), event))
    return {
        "status": event,
        "steps": len(records),
        "records": records,
        "subgoals": [list(map(float, s)) for s in subgoals],
    }
