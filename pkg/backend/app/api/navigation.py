from fastapi import APIRouter, Depends, HTTPException
from typing import Tuple
import logging
from pydantic import BaseModel

from ..errors import PickDropError, http_status
from ..models.navigation import NavTarget, Path
from ..services.workspace_service import MapWorkspace
from .deps import require_workspace

logger = logging.getLogger(__name__)

router = APIRouter()


class TargetRequest(BaseModel):
    x: float
    y: float


class PathRequest(BaseModel):
    start: Tuple[float, float]
    goal: Tuple[float, float]


@router.post("/target", response_model=NavTarget)
async def navigation_target(request: TargetRequest, workspace: MapWorkspace = Depends(require_workspace)):
    """Standing point for reaching an object at (x, y)"""
    try:
        return workspace.nav_target(request.x, request.y)
    except PickDropError as e:
        raise HTTPException(status_code=http_status(e), detail=str(e))
    except Exception as e:
        error_msg = f"Target selection failed: {str(e)}"
        logger.error(error_msg, exc_info=True)
        raise HTTPException(status_code=500, detail=error_msg)


@router.post("/path", response_model=Path)
async def navigation_path(request: PathRequest, workspace: MapWorkspace = Depends(require_workspace)):
    """Grid path between the cells containing two world points"""
    try:
        return workspace.path(request.start, request.goal)
    except PickDropError as e:
        raise HTTPException(status_code=http_status(e), detail=str(e))
    except Exception as e:
        error_msg = f"Path planning failed: {str(e)}"
        logger.error(error_msg, exc_info=True)
        raise HTTPException(status_code=500, detail=error_msg)
