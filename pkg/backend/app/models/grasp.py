from typing import Any, List, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator

PREGRASP_OFFSETS = (0.2, 0.08, 0.04, 0.0)


class GraspProposal(BaseModel):
    """Grasp from an external grasp generator, world frame, meters"""

    point: Tuple[float, float, float]
    approach: Tuple[float, float, float]
    width: float = Field(0.0, ge=0)
    height: float = Field(0.0, ge=0)
    depth: float = Field(0.0, ge=0)
    score: float

    @field_validator("point", "approach", mode="before")
    @classmethod
    def _finite_vector(cls, value: Any) -> Tuple[float, float, float]:
        vector = np.asarray(value, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(vector)):
            raise ValueError("vector components must be finite")
        return float(vector[0]), float(vector[1]), float(vector[2])

    @field_validator("approach")
    @classmethod
    def _unit_approach(cls, value: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if abs(float(np.linalg.norm(value)) - 1.0) > 1e-6:
            raise ValueError("approach vector must have unit norm")
        return value


class RankedGrasp(BaseModel):
    proposal: GraspProposal
    theta: float = Field(..., ge=0)
    heuristic_score: float
    input_index: int = Field(..., ge=0)


class GraspRanking(BaseModel):
    best: RankedGrasp
    ranking: List[RankedGrasp]


class GraspTrajectory(BaseModel):
    """Straight-line pre-grasp approach ending at the grasp point, then close"""

    waypoints: List[Tuple[float, float, float]] = Field(..., min_length=4, max_length=4)
    terminal_action: str = "close_gripper"
