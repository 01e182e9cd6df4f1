from fastapi import APIRouter, Depends, HTTPException
from typing import Any, Dict, List, Optional
import logging
from pydantic import BaseModel, Field

from ..errors import PickDropError, http_status
from ..models.semantic import QueryResult
from ..services.workspace_service import MapWorkspace
from .deps import require_workspace

logger = logging.getLogger(__name__)

router = APIRouter()


class MapQueryRequest(BaseModel):
    text: str = Field(..., min_length=1)
    k: int = Field(1, ge=1)
    near: Optional[str] = None


@router.post("/query", response_model=List[QueryResult])
async def query_map(request: MapQueryRequest, workspace: MapWorkspace = Depends(require_workspace)):
    """Top-k voxels for a text query, or the single 'text near near' voxel"""
    try:
        logger.info(f"Map query '{request.text}' (k={request.k}, near={request.near})")
        return workspace.query(request.text, request.k, request.near)
    except PickDropError as e:
        logger.warning(f"Map query rejected: {e}")
        raise HTTPException(status_code=http_status(e), detail=str(e))
    except Exception as e:
        error_msg = f"Map query failed: {str(e)}"
        logger.error(error_msg, exc_info=True)
        raise HTTPException(status_code=500, detail=error_msg)


@router.get("/summary", response_model=Dict[str, Any])
async def map_summary(workspace: MapWorkspace = Depends(require_workspace)):
    return workspace.summary()
