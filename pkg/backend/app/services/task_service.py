"""
The pick-and-drop state machine: navigate to the object, grasp it, navigate
to the goal, drop. Stages run in that fixed order with no recovery; the
first failure ends the task and is recorded in the report.
"""

import logging
from typing import Callable, Optional, Tuple

import numpy as np

from app.errors import NoGraspError, NoReceptacleError, PickDropError, UnreachableTargetError
from app.models.navigation import NavTarget
from app.models.semantic import QueryResult
from app.models.task import Stage, StageOutcome, TaskReport, TaskSpec
from app.services.drop_service import align_cloud, compute_drop
from app.services.grasp_service import filter_by_mask, pregrasp_trajectory, rank_grasps
from app.services.memory_service import VoxelMap
from app.services.navigation_service import ObstacleGrid, nearest_free_cell, plan_path, select_nav_target
from app.services.providers import Providers
from app.utils.geometry import backproject

logger = logging.getLogger(__name__)


def _locate(voxel_map: VoxelMap, providers: Providers, text: str, near: Optional[str],
            similarity_floor: float, top_a: int, top_b: int) -> QueryResult:
    embedding = providers.embedder.embed_text(text)
    if near:
        result = voxel_map.query_near(embedding, providers.embedder.embed_text(near), top_a, top_b)
    else:
        result = voxel_map.query(embedding, 1)[0]
    if similarity_floor > 0 and result.score < similarity_floor:
        logger.warning(f"Best match for '{text}' scores {result.score:.3f}, below the floor {similarity_floor}")
        raise UnreachableTargetError(
            f"could not locate '{text}': best score {result.score:.3f} is below {similarity_floor}"
        )
    return result


def _start_cell(grid: ObstacleGrid, start: Optional[Tuple[float, float]]) -> Tuple[int, int]:
    if start is None:
        rows, cols = grid.shape
        x, y = grid.cell_center((rows // 2, cols // 2))
    else:
        x, y = start
    cell = grid.cell_of(x, y)
    return cell if grid.is_free(cell) else nearest_free_cell(grid, x, y)


def run_task(
    voxel_map: VoxelMap,
    grid: ObstacleGrid,
    task: TaskSpec,
    providers: Providers,
    start: Optional[Tuple[float, float]] = None,
    similarity_floor: float = 0.0,
    near_top_a: int = 10,
    near_top_b: int = 50,
    obstacle_weight: float = 1.0,
    max_release_height: Optional[float] = None,
) -> TaskReport:
    """Run one task; every stage failure ends up in the report, never raised"""
    report = TaskReport(task=task)
    pick, pick_from = task.pick_parts()
    logger.info(f"Task: pick '{pick}'" + (f" on '{pick_from}'" if pick_from else "") + f", drop on '{task.drop_query}'")

    def attempt(stage: Stage, body: Callable[[], StageOutcome]) -> Optional[StageOutcome]:
        try:
            outcome = body()
        except (PickDropError, ValueError) as e:
            logger.error(f"Stage {stage.value} failed: {e}")
            report.stages.append(StageOutcome(stage=stage, succeeded=False, error=str(e),
                                              error_type=type(e).__name__))
            report.failed_stage = stage
            return None
        report.stages.append(outcome)
        return outcome

    def navigate(stage: Stage, text: str, near: Optional[str], from_cell) -> StageOutcome:
        result = _locate(voxel_map, providers, text, near, similarity_floor, near_top_a, near_top_b)
        target = select_nav_target(grid, result.position[:2])
        origin = from_cell() if callable(from_cell) else from_cell
        path = plan_path(grid, origin, target.cell, obstacle_weight)
        return StageOutcome(stage=stage, succeeded=True, query=result, target=target, path=path)

    def capture(target: NavTarget, result: QueryResult):
        return providers.observer.capture(target.position, target.heading, result.position)

    to_object = attempt(Stage.NAVIGATE_TO_OBJECT,
                        lambda: navigate(Stage.NAVIGATE_TO_OBJECT, pick, pick_from, lambda: _start_cell(grid, start)))
    if to_object is None:
        return report

    def grasp() -> StageOutcome:
        view = capture(to_object.target, to_object.query)
        mask = providers.segmenter.segment(view, pick)
        if mask is None:
            raise NoGraspError(f"'{pick}' is not visible from the navigation target")
        kept = filter_by_mask(providers.grasper.propose(view), mask, view.intrinsics, view.pose)
        ranking = rank_grasps(kept)
        return StageOutcome(stage=Stage.GRASP, succeeded=True, grasp=ranking.best,
                            trajectory=pregrasp_trajectory(ranking.best.proposal))

    if attempt(Stage.GRASP, grasp) is None:
        return report

    to_goal = attempt(Stage.NAVIGATE_TO_GOAL,
                      lambda: navigate(Stage.NAVIGATE_TO_GOAL, task.drop_query, None, to_object.target.cell))
    if to_goal is None:
        return report

    def drop() -> StageOutcome:
        view = capture(to_goal.target, to_goal.query)
        mask = providers.segmenter.segment(view, task.drop_query)
        if mask is None:
            raise NoReceptacleError(f"'{task.drop_query}' is not visible from the navigation target")
        cloud = backproject(view.depth, view.intrinsics, view.pose, np.asarray(mask, dtype=bool))
        aligned = align_cloud(cloud, to_goal.target.position, to_goal.target.heading)
        return StageOutcome(stage=Stage.DROP, succeeded=True, drop=compute_drop(aligned, max_release_height))

    if attempt(Stage.DROP, drop) is not None:
        logger.info("Task completed all stages")
    return report
