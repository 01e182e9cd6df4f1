"""
Obstacle grid, standing-point selection and A* path planning.

Grid cells are indexed (row, col): rows follow world y, columns follow world
x, and cell (0, 0) has its lower-left corner at the grid origin. Navigation
scores use centimeters.
"""

import heapq
import logging
import math
from pathlib import Path as FilePath
from typing import Iterable, List, Optional, Tuple, Union

import numpy as np
from scipy.ndimage import distance_transform_edt
from scipy.spatial import cKDTree

from app.errors import (
    EmptyMapError,
    InvalidInputError,
    MapStateError,
    NoPathError,
    UnreachableTargetError,
)
from app.models.navigation import CellState, NavScore, NavTarget, Path
from app.services.memory_service import VoxelMap

logger = logging.getLogger(__name__)

DEFAULT_CELL_SIZE = 0.10
DEFAULT_INFLATION_RADIUS = 0.20
CLOSENESS_RANGE_CM = 40.0
CLEARANCE_RANGE_CM = 30.0
SCORE_WEIGHTS = (1.0, 8.0, 8.0)
SQRT2 = math.sqrt(2.0)
_EPS = 1e-9

_CELL_CHARS = {CellState.NAVIGABLE: ".", CellState.OCCUPIED: "#", CellState.UNEXPLORED: "?"}
_MOVES = [(-1, -1, SQRT2), (-1, 0, 1.0), (-1, 1, SQRT2), (0, -1, 1.0),
          (0, 1, 1.0), (1, -1, SQRT2), (1, 0, 1.0), (1, 1, SQRT2)]

Cell = Tuple[int, int]


class ObstacleGrid:
    """2D navigability grid with an inflated non-navigable mask"""

    def __init__(
        self,
        cells: np.ndarray,
        origin: Tuple[float, float],
        cell_size: float = DEFAULT_CELL_SIZE,
        inflated: Optional[np.ndarray] = None,
        inflation_radius: float = 0.0,
    ):
        if cell_size <= 0:
            raise InvalidInputError("cell_size must be positive")
        self.cells = np.asarray(cells, dtype=np.uint8)
        if self.cells.ndim != 2 or self.cells.size == 0:
            raise InvalidInputError("grid must be a non-empty 2D array")
        self.origin = (float(origin[0]), float(origin[1]))
        self.cell_size = float(cell_size)
        self.inflation_radius = float(inflation_radius)
        blocked = self.blocked
        self.inflated = blocked.copy() if inflated is None else (np.asarray(inflated, dtype=bool) | blocked)
        self._tree: Optional[cKDTree] = None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.cells.shape

    @property
    def blocked(self) -> np.ndarray:
        """Occupied or unexplored cells"""
        return self.cells != CellState.NAVIGABLE

    @property
    def free(self) -> np.ndarray:
        """Navigable cells outside the inflation zone"""
        return (self.cells == CellState.NAVIGABLE) & ~self.inflated

    def contains(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.shape[0] and 0 <= cell[1] < self.shape[1]

    def is_free(self, cell: Cell) -> bool:
        return self.contains(cell) and bool(self.free[cell])

    def cell_center(self, cell: Cell) -> Tuple[float, float]:
        x, y = self.cell_centers(np.array([cell[0]]), np.array([cell[1]]))
        return float(x[0]), float(y[0])

    def cell_centers(self, rows: np.ndarray, cols: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        x = self.origin[0] + (np.asarray(cols, dtype=np.float64) + 0.5) * self.cell_size
        y = self.origin[1] + (np.asarray(rows, dtype=np.float64) + 0.5) * self.cell_size
        return x, y

    def cell_of(self, x: float, y: float) -> Cell:
        col = int(math.floor((x - self.origin[0]) / self.cell_size))
        row = int(math.floor((y - self.origin[1]) / self.cell_size))
        return row, col

    def obstacle_distance_cm(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Distance from world points to the nearest blocked cell center (inf when none)"""
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        if not self.blocked.any():
            return np.full(xs.shape, np.inf)
        if self._tree is None:
            self._tree = cKDTree(np.argwhere(self.blocked).astype(np.float64))
        # work in cell units; snap cell centers so center-to-center distances are exact
        query = np.stack([
            (ys - self.origin[1]) / self.cell_size - 0.5,
            (xs - self.origin[0]) / self.cell_size - 0.5,
        ], axis=-1)
        snapped = np.round(query)
        query = np.where(np.abs(query - snapped) < _EPS, snapped, query)
        distances, _ = self._tree.query(query.reshape(-1, 2))
        return distances.reshape(xs.shape) * (self.cell_size * 100.0)

    # ---- exports -----------------------------------------------------

    def to_text(self) -> str:
        """One char per cell, row 0 first: '.' free, '#' occupied, '?' unexplored, '+' inflated"""
        lines = []
        for row in range(self.shape[0]):
            chars = []
            for col in range(self.shape[1]):
                state = CellState(int(self.cells[row, col]))
                if state == CellState.NAVIGABLE and self.inflated[row, col]:
                    chars.append("+")
                else:
                    chars.append(_CELL_CHARS[state])
            lines.append("".join(chars))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(
        cls,
        text: str,
        origin: Tuple[float, float] = (0.0, 0.0),
        cell_size: float = DEFAULT_CELL_SIZE,
    ) -> "ObstacleGrid":
        lines = [line.rstrip("\n") for line in text.strip("\n").split("\n")]
        width = max(len(line) for line in lines)
        cells = np.full((len(lines), width), CellState.UNEXPLORED, dtype=np.uint8)
        inflated = np.zeros(cells.shape, dtype=bool)
        codes = {".": CellState.NAVIGABLE, "+": CellState.NAVIGABLE,
                 "#": CellState.OCCUPIED, "?": CellState.UNEXPLORED}
        for row, line in enumerate(lines):
            for col, char in enumerate(line):
                if char not in codes:
                    raise InvalidInputError(f"unknown grid character {char!r} at ({row}, {col})")
                cells[row, col] = codes[char]
                inflated[row, col] = char == "+"
        return cls(cells, origin, cell_size, inflated)

    def save(self, path: Union[str, FilePath]) -> None:
        with open(path, "wb") as handle:
            np.savez(
                handle,
                cells=self.cells,
                inflated=self.inflated,
                origin=np.array(self.origin),
                cell_size=np.array(self.cell_size),
                inflation_radius=np.array(self.inflation_radius),
            )

    @classmethod
    def load(cls, path: Union[str, FilePath]) -> "ObstacleGrid":
        with np.load(path) as data:
            return cls(
                data["cells"],
                tuple(data["origin"].tolist()),
                float(data["cell_size"]),
                data["inflated"],
                float(data["inflation_radius"]),
            )


def build_grid(
    voxel_map: VoxelMap,
    floor_height: float,
    ceiling_height: float,
    cell_size: float = DEFAULT_CELL_SIZE,
) -> ObstacleGrid:
    """Classify 2D cells from voxel centers between the floor and ceiling heights"""
    if floor_height >= ceiling_height:
        raise InvalidInputError("floor_height must be below ceiling_height")
    if not voxel_map.finalized:
        raise MapStateError("map must be finalized before building a grid")
    indices = voxel_map.occupied_indices()
    if indices.shape[0] == 0:
        raise EmptyMapError("map has no voxels")

    centers = (indices + 0.5) * voxel_map.voxel_size
    cols_global = np.floor(centers[:, 0] / cell_size).astype(np.int64)
    rows_global = np.floor(centers[:, 1] / cell_size).astype(np.int64)
    col0, row0 = int(cols_global.min()), int(rows_global.min())
    cols, rows = cols_global - col0, rows_global - row0
    shape = (int(rows.max()) + 1, int(cols.max()) + 1)

    z = centers[:, 2]
    between = (z > floor_height) & (z < ceiling_height)
    occupied = np.zeros(shape, dtype=bool)
    occupied[rows[between], cols[between]] = True
    observed = np.zeros(shape, dtype=bool)
    observed[rows[~between], cols[~between]] = True

    cells = np.full(shape, CellState.UNEXPLORED, dtype=np.uint8)
    cells[observed] = CellState.NAVIGABLE
    cells[occupied] = CellState.OCCUPIED
    grid = ObstacleGrid(cells, (col0 * cell_size, row0 * cell_size), cell_size)
    logger.info(
        f"Built {shape[0]}x{shape[1]} obstacle grid: "
        f"{int((cells == CellState.NAVIGABLE).sum())} navigable, "
        f"{int(occupied.sum())} occupied, {int((cells == CellState.UNEXPLORED).sum())} unexplored"
    )
    return grid


def inflate(grid: ObstacleGrid, radius: float = DEFAULT_INFLATION_RADIUS) -> ObstacleGrid:
    """Mark every cell whose center is within radius of a blocked cell center"""
    if radius < 0:
        raise InvalidInputError("inflation radius must be non-negative")
    blocked = grid.blocked
    if blocked.any():
        distance_cells = distance_transform_edt(~blocked)
        inflated = distance_cells <= radius / grid.cell_size + _EPS
    else:
        inflated = np.zeros(grid.shape, dtype=bool)
    return ObstacleGrid(grid.cells.copy(), grid.origin, grid.cell_size, inflated, radius)


def _score_arrays(grid: ObstacleGrid, xs: np.ndarray, ys: np.ndarray, object_position) -> Tuple[np.ndarray, ...]:
    s1 = np.hypot(xs - object_position[0], ys - object_position[1]) * 100.0
    s2 = CLOSENESS_RANGE_CM - np.minimum(s1, CLOSENESS_RANGE_CM)
    clearance = grid.obstacle_distance_cm(xs, ys)
    with np.errstate(divide="ignore"):
        s3 = np.where(
            clearance == 0,
            np.inf,
            np.where(clearance <= CLEARANCE_RANGE_CM + _EPS, 1.0 / clearance, 0.0),
        )
    w1, w2, w3 = SCORE_WEIGHTS
    return s1, s2, s3, w1 * s1 + w2 * s2 + w3 * s3


def score(x, object_position, grid: ObstacleGrid) -> NavScore:
    """s1, s2, s3 and their weighted sum s at world point x (all distances in cm)"""
    s1, s2, s3, s = _score_arrays(
        grid, np.array([float(x[0])]), np.array([float(x[1])]), object_position
    )
    return NavScore(s1=float(s1[0]), s2=float(s2[0]), s3=float(s3[0]), s=float(s[0]))


def select_nav_target(grid: ObstacleGrid, object_position) -> NavTarget:
    """Free cell center minimizing s; ties go to the lexicographically smallest cell"""
    rows, cols = np.nonzero(grid.free)
    if rows.size == 0:
        raise UnreachableTargetError("grid has no free navigable cell")
    xs, ys = grid.cell_centers(rows, cols)
    _, _, _, s = _score_arrays(grid, xs, ys, object_position)
    best = int(np.argmin(s))
    if not np.isfinite(s[best]):
        raise UnreachableTargetError("no candidate cell has a finite score")
    position = (float(xs[best]), float(ys[best]))
    dx, dy = object_position[0] - position[0], object_position[1] - position[1]
    norm = math.hypot(dx, dy)
    heading = (dx / norm, dy / norm) if norm > 0 else (1.0, 0.0)
    target = NavTarget(
        cell=(int(rows[best]), int(cols[best])),
        position=position,
        heading=heading,
        score=float(s[best]),
        object_position=(float(object_position[0]), float(object_position[1])),
    )
    logger.info(f"Navigation target {target.cell} at {norm:.2f} m from the object (s={target.score:.3f})")
    return target


def clearance_penalty(grid: ObstacleGrid) -> np.ndarray:
    """s3 evaluated at every cell center, via a distance transform"""
    blocked = grid.blocked
    if not blocked.any():
        return np.zeros(grid.shape)
    distance_cm = distance_transform_edt(~blocked) * (grid.cell_size * 100.0)
    with np.errstate(divide="ignore"):
        return np.where(
            distance_cm == 0,
            np.inf,
            np.where(distance_cm <= CLEARANCE_RANGE_CM + _EPS, 1.0 / distance_cm, 0.0),
        )


def octile_distance(a: Cell, b: Cell) -> float:
    dr, dc = abs(a[0] - b[0]), abs(a[1] - b[1])
    return (max(dr, dc) - min(dr, dc)) + SQRT2 * min(dr, dc)


def plan_path(grid: ObstacleGrid, start: Cell, goal: Cell, obstacle_weight: float = 1.0) -> Path:
    """A* over free cells; each entered cell costs its step length plus obstacle_weight * s3"""
    start, goal = (int(start[0]), int(start[1])), (int(goal[0]), int(goal[1]))
    for name, cell in (("start", start), ("goal", goal)):
        if not grid.is_free(cell):
            raise InvalidInputError(f"{name} cell {cell} is not a free navigable cell")
    if obstacle_weight < 0:
        raise InvalidInputError("obstacle_weight must be non-negative")

    free = grid.free
    penalty = clearance_penalty(grid) * obstacle_weight if obstacle_weight > 0 else np.zeros(grid.shape)
    rows, cols = grid.shape
    g_cost = np.full(grid.shape, np.inf)
    parent = np.full(grid.shape + (2,), -1, dtype=np.int64)
    closed = np.zeros(grid.shape, dtype=bool)
    g_cost[start] = 0.0
    h0 = octile_distance(start, goal)
    heap = [(h0, h0, start[0], start[1])]

    while heap:
        _, _, r, c = heapq.heappop(heap)
        if closed[r, c]:
            continue
        closed[r, c] = True
        if (r, c) == goal:
            break
        base = g_cost[r, c]
        for dr, dc, step in _MOVES:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < rows and 0 <= nc < cols) or not free[nr, nc] or closed[nr, nc]:
                continue
            candidate = base + step + penalty[nr, nc]
            if candidate < g_cost[nr, nc]:
                g_cost[nr, nc] = candidate
                parent[nr, nc] = (r, c)
                h = octile_distance((nr, nc), goal)
                heapq.heappush(heap, (candidate + h, h, nr, nc))

    if not closed[goal]:
        raise NoPathError(f"goal {goal} is not reachable from {start}")

    cells: List[Cell] = [goal]
    while cells[-1] != start:
        pr, pc = parent[cells[-1]]
        cells.append((int(pr), int(pc)))
    cells.reverse()
    logger.info(f"Planned path of {len(cells)} cells from {start} to {goal} (cost {g_cost[goal]:.3f})")
    return Path(cells=cells, cost=float(g_cost[goal]))


def nearest_free_cell(grid: ObstacleGrid, x: float, y: float) -> Cell:
    """Free cell whose center is closest to (x, y); ties go to the smallest cell"""
    rows, cols = np.nonzero(grid.free)
    if rows.size == 0:
        raise UnreachableTargetError("grid has no free navigable cell")
    xs, ys = grid.cell_centers(rows, cols)
    best = int(np.argmin(np.hypot(xs - x, ys - y)))
    return int(rows[best]), int(cols[best])


def path_to_text(path: Path) -> str:
    return "".join(f"{row} {col}\n" for row, col in path.cells)


def path_from_text(text: str) -> List[Cell]:
    cells: List[Cell] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise InvalidInputError(f"path line {line_no} must hold 'row col'")
        cells.append((int(parts[0]), int(parts[1])))
    return cells


def path_world_points(grid: ObstacleGrid, cells: Iterable[Cell]) -> List[Tuple[float, float]]:
    return [grid.cell_center(cell) for cell in cells]
