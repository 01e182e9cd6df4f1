from fastapi import APIRouter, Depends, HTTPException
from typing import Optional, Tuple
import logging
from pydantic import BaseModel, Field

from ..errors import PickDropError, http_status
from ..models.task import TaskReport, TaskSpec
from ..services.workspace_service import MapWorkspace
from .deps import require_workspace

logger = logging.getLogger(__name__)

router = APIRouter()


class TaskRequest(BaseModel):
    pick_query: str = Field(..., min_length=1)
    drop_query: str = Field(..., min_length=1)
    from_query: Optional[str] = None
    start: Optional[Tuple[float, float]] = None


@router.post("/run", response_model=TaskReport)
async def run_pick_and_drop(request: TaskRequest, workspace: MapWorkspace = Depends(require_workspace)):
    """Plan a full pick-and-drop task; stage failures come back inside the report"""
    try:
        task = TaskSpec(pick_query=request.pick_query, drop_query=request.drop_query,
                        from_query=request.from_query)
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e))
    try:
        report = workspace.run(task, request.start)
        logger.info(f"Task finished: {'succeeded' if report.succeeded else f'failed at {report.failed_stage.value}'}")
        return report
    except PickDropError as e:
        raise HTTPException(status_code=http_status(e), detail=str(e))
    except Exception as e:
        error_msg = f"Task planning failed: {str(e)}"
        logger.error(error_msg, exc_info=True)
        raise HTTPException(status_code=500, detail=error_msg)
