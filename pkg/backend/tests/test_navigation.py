import heapq
import math

import numpy as np
import pytest

from app.errors import InvalidInputError, MapStateError, NoPathError, UnreachableTargetError
from app.models.navigation import CellState
from app.services.memory_service import VoxelMap
from app.services.navigation_service import (
    SQRT2,
    ObstacleGrid,
    build_grid,
    inflate,
    nearest_free_cell,
    path_from_text,
    path_to_text,
    plan_path,
    score,
    select_nav_target,
)

MOVES = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]


def _random_grid(rng, shape=(12, 12), blocked=0.25) -> ObstacleGrid:
    cells = np.where(rng.random(shape) < blocked, CellState.OCCUPIED, CellState.NAVIGABLE).astype(np.uint8)
    return ObstacleGrid(cells, (0.0, 0.0), 0.1)


def _clearance_cm(grid: ObstacleGrid, x: float, y: float) -> float:
    rows, cols = np.nonzero(grid.blocked)
    if rows.size == 0:
        return math.inf
    xs, ys = grid.cell_centers(rows, cols)
    return float(np.min(np.hypot(xs - x, ys - y))) * 100.0


def _s3(clearance: float) -> float:
    if clearance == 0:
        return math.inf
    return 1.0 / clearance if clearance <= 30.0 + 1e-6 else 0.0


def _oracle_score(grid: ObstacleGrid, x: float, y: float, obj) -> float:
    s1 = math.hypot(x - obj[0], y - obj[1]) * 100.0
    s2 = 40.0 - min(s1, 40.0)
    return s1 + 8.0 * s2 + 8.0 * _s3(_clearance_cm(grid, x, y))


def _flood_fill(free: np.ndarray, start):
    seen = {start}
    stack = [start]
    while stack:
        r, c = stack.pop()
        for dr, dc in MOVES:
            n = (r + dr, c + dc)
            if 0 <= n[0] < free.shape[0] and 0 <= n[1] < free.shape[1] and free[n] and n not in seen:
                seen.add(n)
                stack.append(n)
    return seen


def _dijkstra(free: np.ndarray, penalty: np.ndarray, start, goal) -> float:
    best = {start: 0.0}
    heap = [(0.0, start)]
    while heap:
        cost, cell = heapq.heappop(heap)
        if cell == goal:
            return cost
        if cost > best[cell]:
            continue
        for dr, dc in MOVES:
            n = (cell[0] + dr, cell[1] + dc)
            if not (0 <= n[0] < free.shape[0] and 0 <= n[1] < free.shape[1]) or not free[n]:
                continue
            candidate = cost + (SQRT2 if dr and dc else 1.0) + penalty[n]
            if candidate < best.get(n, math.inf):
                best[n] = candidate
                heapq.heappush(heap, (candidate, n))
    return math.inf


# ---- grid construction ----------------------------------------------------

def test_build_grid_classifies_cells():
    voxel_map = VoxelMap(0.05)
    e = np.array([1.0, 0.0])
    voxel_map.add_points(np.array([[0.01, 0.01, 0.01]]), e, 1.0)
    voxel_map.add_points(np.array([[0.31, 0.01, 0.51]]), e, 1.0)
    voxel_map.add_occupancy(np.array([[0.31, 0.01, 0.01], [0.11, 0.01, 1.91]]))
    voxel_map.finalize()
    grid = build_grid(voxel_map, 0.10, 1.80)
    assert grid.origin == (0.0, 0.0)
    assert grid.cells.tolist() == [[
        CellState.NAVIGABLE, CellState.NAVIGABLE, CellState.UNEXPLORED, CellState.OCCUPIED,
    ]]


def test_build_grid_rejects_bad_inputs():
    voxel_map = VoxelMap(0.05).add_points(np.zeros((1, 3)), np.array([1.0]), 1.0)
    with pytest.raises(MapStateError):
        build_grid(voxel_map, 0.1, 1.8)
    voxel_map.finalize()
    with pytest.raises(InvalidInputError):
        build_grid(voxel_map, 1.8, 0.1)


def test_scene_grid_marks_furniture(built):
    _, grid = built
    table = grid.cell_of(1.0, 1.2)
    assert grid.cells[table] == CellState.OCCUPIED
    assert grid.cells[grid.cell_of(2.0, 2.0)] == CellState.NAVIGABLE


def test_inflation_radius_zero_only_blocks_obstacles():
    grid = ObstacleGrid.from_text("....\n.#..\n..?.\n")
    inflated = inflate(grid, 0.0)
    np.testing.assert_array_equal(inflated.inflated, grid.blocked)
    assert inflated.free.sum() == 10


def test_inflation_marks_a_disk():
    rows = ["........."] * 9
    rows[4] = "....#...."
    inflated = inflate(ObstacleGrid.from_text("\n".join(rows)), 0.2)
    assert int(inflated.inflated.sum()) == 13
    assert int(inflated.free.sum()) == 81 - 13
    assert inflated.inflated[4, 2] and not inflated.inflated[3, 2]


def test_inflating_an_open_grid_changes_nothing():
    inflated = inflate(ObstacleGrid.from_text("....\n....\n"), 0.5)
    assert inflated.free.all()
    with pytest.raises(InvalidInputError):
        inflate(inflated, -0.1)


def test_grid_text_round_trip():
    grid = inflate(ObstacleGrid.from_text("......\n..#...\n?.....\n"), 0.1)
    text = grid.to_text()
    assert text.splitlines()[1] == "++#+.."
    again = ObstacleGrid.from_text(text)
    np.testing.assert_array_equal(again.cells, grid.cells)
    np.testing.assert_array_equal(again.inflated, grid.inflated)
    with pytest.raises(InvalidInputError):
        ObstacleGrid.from_text("..x\n")


def test_grid_file_round_trip(rng, tmp_path):
    grid = inflate(ObstacleGrid(_random_grid(rng).cells, (-1.5, 2.0), 0.1), 0.2)
    grid.save(tmp_path / "grid.npz")
    again = ObstacleGrid.load(tmp_path / "grid.npz")
    np.testing.assert_array_equal(again.cells, grid.cells)
    np.testing.assert_array_equal(again.inflated, grid.inflated)
    assert again.origin == grid.origin
    assert again.cell_size == grid.cell_size
    assert again.inflation_radius == pytest.approx(0.2)


# ---- scoring --------------------------------------------------------------

@pytest.fixture
def strip():
    # one obstacle at cell (0, 0), centers at x = 0.05 + 0.1 * col
    return ObstacleGrid.from_text("#.........")


def test_score_far_from_obstacle_is_plain_distance(strip):
    result = score((0.55, 0.05), (0.95, 0.05), strip)
    assert result.s1 == pytest.approx(40.0)
    assert result.s2 == pytest.approx(0.0, abs=1e-9)
    assert result.s3 == 0.0
    assert result.s == pytest.approx(40.0)


def test_score_at_the_object_is_all_closeness_penalty(strip):
    result = score((0.55, 0.05), (0.55, 0.05), strip)
    assert result.s1 == 0.0
    assert result.s2 == 40.0
    assert result.s == pytest.approx(320.0)


def test_clearance_penalty_cutoff(strip):
    assert score((0.35, 0.05), (0.35, 0.05), strip).s3 == pytest.approx(1.0 / 30.0)
    assert score((0.36, 0.05), (0.36, 0.05), strip).s3 == 0.0
    assert score((0.45, 0.05), (0.45, 0.05), strip).s3 == 0.0
    assert score((0.15, 0.05), (0.15, 0.05), strip).s3 == pytest.approx(0.1)
    assert math.isinf(score((0.05, 0.05), (0.05, 0.05), strip).s3)


def test_score_matches_direct_formula(rng):
    for _ in range(20):
        grid = _random_grid(rng, (8, 8), 0.15)
        row, col = (int(v) for v in rng.integers(0, 8, 2))
        x, y = grid.cell_center((row, col))
        obj = tuple(rng.uniform(0.0, 0.8, 2))
        result = score((x, y), obj, grid)
        expected = _oracle_score(grid, x, y, obj)
        if math.isinf(expected):
            assert math.isinf(result.s)
        else:
            assert result.s == pytest.approx(expected, rel=1e-9)


# ---- standing point -------------------------------------------------------

def test_nav_target_matches_exhaustive_search(rng):
    for _ in range(50):
        grid = inflate(_random_grid(rng, (10, 10), 0.2), 0.1)
        if not grid.free.any():
            continue
        obj = tuple(rng.uniform(0.0, 1.0, 2))
        best = math.inf
        for row, col in zip(*np.nonzero(grid.free)):
            best = min(best, _oracle_score(grid, *grid.cell_center((row, col)), obj))
        target = select_nav_target(grid, obj)
        assert grid.is_free(target.cell)
        assert target.score == pytest.approx(best, rel=1e-9)
        assert math.hypot(*target.heading) == pytest.approx(1.0)


def test_open_floor_target_stands_forty_centimeters_away():
    grid = ObstacleGrid.from_text("\n".join(["." * 50] * 50))
    target = select_nav_target(grid, (2.55, 2.55))
    distance = math.hypot(target.position[0] - 2.55, target.position[1] - 2.55)
    assert distance == pytest.approx(0.40, abs=1e-6)
    assert target.score == pytest.approx(40.0)


def test_single_candidate_is_chosen():
    grid = ObstacleGrid.from_text("###\n#.#\n###\n")
    target = select_nav_target(grid, (0.05, 0.05))
    assert target.cell == (1, 1)
    assert target.position == pytest.approx((0.15, 0.15))
    assert target.heading == pytest.approx((-math.sqrt(0.5), -math.sqrt(0.5)))


def test_heading_defaults_when_standing_on_the_object():
    target = select_nav_target(ObstacleGrid.from_text(".\n"), (0.05, 0.05))
    assert target.heading == (1.0, 0.0)


def test_grid_without_free_cells_is_unreachable():
    with pytest.raises(UnreachableTargetError):
        select_nav_target(ObstacleGrid.from_text("##\n?#\n"), (0.0, 0.0))
    with pytest.raises(UnreachableTargetError):
        nearest_free_cell(ObstacleGrid.from_text("##\n"), 0.0, 0.0)


def test_nearest_free_cell():
    grid = ObstacleGrid.from_text("#..\n###\n..#\n")
    assert nearest_free_cell(grid, 0.05, 0.05) == (0, 1)
    assert nearest_free_cell(grid, 0.05, 0.25) == (2, 0)


# ---- path planning --------------------------------------------------------

def test_plan_path_against_flood_fill_and_dijkstra(rng):
    for _ in range(200):
        grid = _random_grid(rng)
        free_cells = list(zip(*np.nonzero(grid.free)))
        if len(free_cells) < 2:
            continue
        pick = rng.choice(len(free_cells), 2, replace=False)
        start = tuple(int(v) for v in free_cells[pick[0]])
        goal = tuple(int(v) for v in free_cells[pick[1]])
        if goal not in _flood_fill(grid.free, start):
            with pytest.raises(NoPathError):
                plan_path(grid, start, goal, obstacle_weight=0.0)
            continue
        path = plan_path(grid, start, goal, obstacle_weight=0.0)
        assert path.start == start and path.goal == goal
        for a, b in zip(path.cells, path.cells[1:]):
            assert max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1
            assert grid.free[b]
        assert path.cost == pytest.approx(_dijkstra(grid.free, np.zeros(grid.shape), start, goal))


def test_weighted_path_is_optimal_including_clearance(rng):
    for _ in range(30):
        grid = _random_grid(rng, (10, 10), 0.15)
        free_cells = list(zip(*np.nonzero(grid.free)))
        if len(free_cells) < 2:
            continue
        start, goal = (tuple(int(v) for v in free_cells[i]) for i in (0, -1))
        penalty = np.zeros(grid.shape)
        for cell in free_cells:
            penalty[cell] = 2.0 * _s3(_clearance_cm(grid, *grid.cell_center(cell)))
        expected = _dijkstra(grid.free, penalty, start, goal)
        if math.isinf(expected):
            continue
        path = plan_path(grid, start, goal, obstacle_weight=2.0)
        walked = sum(
            (SQRT2 if a[0] != b[0] and a[1] != b[1] else 1.0) + penalty[b]
            for a, b in zip(path.cells, path.cells[1:])
        )
        assert path.cost == pytest.approx(walked)
        assert path.cost == pytest.approx(expected)


def test_path_to_itself():
    path = plan_path(ObstacleGrid.from_text("...\n"), (0, 1), (0, 1))
    assert path.cells == [(0, 1)]
    assert path.cost == 0.0


def test_corridor_path():
    grid = ObstacleGrid.from_text("#####\n#...#\n#####\n")
    path = plan_path(grid, (1, 1), (1, 3), obstacle_weight=0.0)
    assert path.cells == [(1, 1), (1, 2), (1, 3)]
    assert path.cost == pytest.approx(2.0)


def test_diagonal_moves_may_cut_corners():
    grid = ObstacleGrid.from_text(".#\n#.\n")
    assert plan_path(grid, (0, 0), (1, 1), obstacle_weight=0.0).cells == [(0, 0), (1, 1)]


def test_walled_off_goal_has_no_path():
    grid = ObstacleGrid.from_text("..#..\n..#..\n")
    with pytest.raises(NoPathError):
        plan_path(grid, (0, 0), (0, 4))


def test_path_endpoints_must_be_free():
    grid = ObstacleGrid.from_text("..#\n")
    with pytest.raises(InvalidInputError):
        plan_path(grid, (0, 0), (0, 2))
    with pytest.raises(InvalidInputError):
        plan_path(grid, (0, 0), (5, 5))


def test_path_text_format():
    path = plan_path(ObstacleGrid.from_text("....\n"), (0, 0), (0, 3), obstacle_weight=0.0)
    text = path_to_text(path)
    assert text == "0 0\n0 1\n0 2\n0 3\n"
    assert path_from_text(text) == path.cells
    with pytest.raises(InvalidInputError):
        path_from_text("0 1 2\n")
