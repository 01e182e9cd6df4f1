from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, field_validator

from app.models.drop import DropPoint
from app.models.grasp import GraspTrajectory, RankedGrasp
from app.models.navigation import NavTarget, Path
from app.models.semantic import QueryResult


class Stage(str, Enum):
    NAVIGATE_TO_OBJECT = "navigate-to-object"
    GRASP = "grasp"
    NAVIGATE_TO_GOAL = "navigate-to-goal"
    DROP = "drop"


class TaskSpec(BaseModel):
    """Pick up A (from B) and drop it on/in C"""

    pick_query: str
    drop_query: str
    from_query: Optional[str] = None

    @field_validator("pick_query", "drop_query")
    @classmethod
    def _non_empty(cls, value: str) -> str:
        value = value.strip()
        if not value:
            raise ValueError("query must not be empty")
        return value

    @field_validator("from_query")
    @classmethod
    def _optional_non_empty(cls, value: Optional[str]) -> Optional[str]:
        if value is None or not value.strip():
            return None
        return value.strip()

    def pick_parts(self) -> Tuple[str, Optional[str]]:
        """(A, B) where B comes from from_query or an 'A on B' pick query"""
        if self.from_query:
            return self.pick_query, self.from_query
        head, sep, tail = self.pick_query.partition(" on ")
        if sep and head.strip() and tail.strip():
            return head.strip(), tail.strip()
        return self.pick_query, None


class StageOutcome(BaseModel):
    stage: Stage
    succeeded: bool
    error: Optional[str] = None
    error_type: Optional[str] = None
    query: Optional[QueryResult] = None
    target: Optional[NavTarget] = None
    path: Optional[Path] = None
    grasp: Optional[RankedGrasp] = None
    trajectory: Optional[GraspTrajectory] = None
    drop: Optional[DropPoint] = None


class TaskReport(BaseModel):
    task: TaskSpec
    stages: List[StageOutcome] = []
    failed_stage: Optional[Stage] = None

    @property
    def succeeded(self) -> bool:
        return self.failed_stage is None and len(self.stages) == len(Stage)
