"""Occupancy grid, Dijkstra vs a brute-force oracle, sub-goal selection."""

import heapq

import numpy as np
import pytest

from socialnav.planner import (
    NoPathError,
    OccupancyGrid,
    PlanPath,
    build_grid,
    dijkstra_path,
    path_point_at,
    run_navigation,
    select_subgoal,
)


def grid_from_rows(rows, resolution=1.0, origin=(0.0, 0.0)):
    cells = np.array([[c == "1" for c in row] for row in rows])
    return OccupancyGrid(cells.shape[1], cells.shape[0], resolution,
                         np.array(origin, dtype=float), cells)


def oracle_cost(grid, s, g):
    """Independent uniform-cost search over the same move set."""
    res = grid.resolution
    diag = np.sqrt(2.0) * res
    dist = {s: 0.0}
    heap = [(0.0, s)]
    seen = set()
    while heap:
        d, cell = heapq.heappop(heap)
        if cell in seen:
            continue
        seen.add(cell)
        if cell == g:
            return d
        r, c = cell
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy == 0 and dx == 0:
                    continue
                nxt = (r + dy, c + dx)
                if not grid.free(*nxt):
                    continue
                if dy != 0 and dx != 0 and not (grid.free(r, c + dx) or grid.free(r + dy, c)):
                    continue
                nd = d + (diag if dy != 0 and dx != 0 else res)
                if nd < dist.get(nxt, np.inf):
                    dist[nxt] = nd
                    heapq.heappush(heap, (nd, nxt))
    return None


class TestGridIO:
    def test_save_load_round_trip(self, tmp_path):
        g = grid_from_rows(["010", "000", "100"], resolution=0.5, origin=(-1.0, 2.0))
        p = tmp_path / "map.txt"
        g.save(p)
        text = p.read_text()
        assert text.startswith("MESAMAP 3 3 0.5 -1 2")
        g2 = OccupancyGrid.load(p)
        assert g2.width == 3 and g2.height == 3 and g2.resolution == 0.5
        np.testing.assert_array_equal(g2.cells, g.cells)
        np.testing.assert_array_equal(g2.origin, [-1.0, 2.0])

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("NOPE 1 1 1 0 0\n0\n")
        with pytest.raises(ValueError, match="MESAMAP"):
            OccupancyGrid.load(p)

    def test_body_dims_checked(self, tmp_path):
        p = tmp_path / "short.txt"
        p.write_text("MESAMAP 3 3 1 0 0\n000\n000\n")
        with pytest.raises(ValueError):
            OccupancyGrid.load(p)

    def test_cell_mapping(self):
        g = grid_from_rows(["00", "00"], resolution=0.5, origin=(0.0, 0.0))
        assert g.cell_of(np.array([0.75, 0.25])) == (0, 1)
        np.testing.assert_allclose(g.center_of(0, 1), [0.75, 0.25])


class TestBuildGrid:
    def test_disc_inflation(self):
        g = build_grid(20, 20, 0.5, [{"type": "disc", "center": [0.0, 0.0], "radius": 1.0}])
        assert not g.free(*g.cell_of(np.array([0.0, 0.0])))
        # 1.0 + 0.3 inflation: a point 1.2 m out is still blocked...
        assert not g.free(*g.cell_of(np.array([1.2, 0.0])))
        # ... but 2.5 m out is clear.
        assert g.free(*g.cell_of(np.array([2.5, 0.0])))

    def test_rect_obstacle(self):
        g = build_grid(20, 20, 0.5,
                       [{"type": "rect", "min": [-1.0, -1.0], "max": [1.0, 1.0]}])
        assert not g.free(*g.cell_of(np.array([0.0, 0.0])))
        assert g.free(*g.cell_of(np.array([3.0, 3.0])))

    def test_unknown_obstacle_type(self):
        with pytest.raises(ValueError):
            build_grid(4, 4, 1.0, [{"type": "triangle"}])


class TestDijkstra:
    def test_3x3_diagonal_cost(self):
        g = grid_from_rows(["000", "000", "000"])
        path = dijkstra_path(g, np.array([0.5, 0.5]), np.array([2.5, 2.5]))
        # One straight move cannot beat two diagonals here: cost 2*sqrt(2).
        assert path.cost == pytest.approx(2 * np.sqrt(2), abs=1e-9)

    def test_3x3_center_blocked_corner_to_corner(self):
        # Straight + diagonal around the blocked center: cost 2 + sqrt(2).
        g = grid_from_rows(["000", "010", "000"])
        path = dijkstra_path(g, np.array([0.5, 0.5]), np.array([2.5, 2.5]))
        assert path.cost == pytest.approx(2 + np.sqrt(2), abs=1e-9)

    def test_squeeze_between_blocked_corners_forbidden(self):
        # Diagonal between two occupied orthogonal cells must not be taken.
        g = grid_from_rows(["01", "10"])
        with pytest.raises(NoPathError):
            dijkstra_path(g, np.array([0.5, 0.5]), np.array([1.5, 1.5]))

    def test_occupied_endpoint_rejected(self):
        g = grid_from_rows(["00", "01"])
        with pytest.raises(ValueError, match="goal"):
            dijkstra_path(g, np.array([0.5, 0.5]), np.array([1.5, 1.5]))

    def test_same_cell(self):
        g = grid_from_rows(["00", "00"])
        path = dijkstra_path(g, np.array([0.2, 0.2]), np.array([0.8, 0.8]))
        assert path.cost == 0.0 and len(path.waypoints) == 1

    def test_random_grids_match_oracle(self):
        rng = np.random.default_rng(0)
        checked = 0
        for _ in range(100):
            cells = rng.uniform(size=(15, 15)) < 0.3
            g = OccupancyGrid(15, 15, 1.0, np.zeros(2), cells)
            free = np.argwhere(~cells)
            s = tuple(free[rng.integers(len(free))])
            t = tuple(free[rng.integers(len(free))])
            start = g.center_of(*s)
            goal = g.center_of(*t)
            expected = oracle_cost(g, s, t)
            if expected is None:
                with pytest.raises(NoPathError):
                    dijkstra_path(g, start, goal)
            else:
                path = dijkstra_path(g, start, goal)
                assert path.cost == pytest.approx(expected, abs=1e-9)
                # Waypoints are adjacent free cells.
                for a, b in zip(path.waypoints[:-1], path.waypoints[1:]):
                    step = np.abs(b - a)
                    assert step.max() <= 1.0 + 1e-9
                    assert g.free(*g.cell_of(b))
            checked += 1
        assert checked == 100


class TestSubgoal:
    def path_of(self, *pts):
        wps = [np.array(p, dtype=float) for p in pts]
        cost = sum(np.linalg.norm(b - a) for a, b in zip(wps[:-1], wps[1:]))
        return PlanPath(wps, cost)

    def test_walks_arc_length(self):
        path = self.path_of((0, 0), (4, 0), (4, 4))
        sub = select_subgoal(path, np.array([1.0, 0.0]), d_sub=2.0)
        np.testing.assert_allclose(sub, [3.0, 0.0], atol=1e-12)
        sub2 = select_subgoal(path, np.array([3.0, 0.0]), d_sub=2.0)
        np.testing.assert_allclose(sub2, [4.0, 1.0], atol=1e-12)

    def test_clamps_to_final_waypoint(self):
        path = self.path_of((0, 0), (1, 0))
        sub = select_subgoal(path, np.array([0.9, 0.0]), d_sub=5.0)
        np.testing.assert_allclose(sub, [1.0, 0.0])

    def test_projection_off_path(self):
        path = self.path_of((0, 0), (10, 0))
        sub = select_subgoal(path, np.array([4.0, 3.0]), d_sub=2.0)
        np.testing.assert_allclose(sub, [6.0, 0.0], atol=1e-12)

    def test_path_point_at(self):
        path = self.path_of((0, 0), (3, 0), (3, 4))
        np.testing.assert_allclose(path_point_at(path, 5.0), [3.0, 2.0], atol=1e-12)


class TestRunNavigation:
    def test_empty_world_reaches_goal_via_subgoals(self):
        from socialnav.env import CrowdEnv
        from socialnav.evaluation import OrcaRobotPolicy
        from socialnav.sim import ScenarioSpec, generate_scenario

        env = CrowdEnv()
        world = generate_scenario(ScenarioSpec(kind="empty", seed=0))
        g = build_grid(110, 110, 0.1, [])
        result = run_navigation(OrcaRobotPolicy(env), world, g, env)
        assert result["status"] == "goal"
        assert len(result["subgoals"]) == result["steps"]
        # Early sub-goals sit ~2 m ahead, not at the true goal.
        first = np.array(result["subgoals"][0])
        assert np.linalg.norm(first - world.robot.position) == pytest.approx(2.0, abs=0.2)

    def test_routes_around_wall(self):
        from socialnav.env import CrowdEnv
        from socialnav.evaluation import OrcaRobotPolicy
        from socialnav.sim import ScenarioSpec, generate_scenario

        env = CrowdEnv()
        world = generate_scenario(ScenarioSpec(kind="empty", seed=0))
        # Wall across the direct route with a gap on the right.
        g = build_grid(110, 110, 0.1,
                       [{"type": "rect", "min": [-5.5, -0.2], "max": [1.0, 0.2]}])
        result = run_navigation(OrcaRobotPolicy(env), world, g, env)
        assert result["status"] == "goal"
        xs = [r["robot"]["x"] for r in result["records"]]
        assert max(xs) > 1.0  # detoured through the gap
