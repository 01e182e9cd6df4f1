from enum import IntEnum
from typing import List, Tuple

from pydantic import BaseModel, Field


class CellState(IntEnum):
    NAVIGABLE = 0
    OCCUPIED = 1
    UNEXPLORED = 2


class NavScore(BaseModel):
    s1: float
    s2: float
    s3: float
    s: float


class NavTarget(BaseModel):
    """Best standing point x* for reaching an object at x_o"""

    cell: Tuple[int, int]
    position: Tuple[float, float]
    heading: Tuple[float, float]
    score: float
    object_position: Tuple[float, float]


class Path(BaseModel):
    """8-connected (row, col) cells from start to goal"""

    cells: List[Tuple[int, int]] = Field(..., min_length=1)
    cost: float = Field(..., ge=0)

    @property
    def start(self) -> Tuple[int, int]:
        return self.cells[0]

    @property
    def goal(self) -> Tuple[int, int]:
        return self.cells[-1]
