import logging

from fastapi import HTTPException

from ..errors import PickDropError
from ..services.workspace_service import MapWorkspace, get_workspace

logger = logging.getLogger(__name__)


def require_workspace() -> MapWorkspace:
    """FastAPI dependency: the loaded workspace, or 503 while none is configured"""
    try:
        return get_workspace()
    except PickDropError as e:
        logger.warning(f"Workspace unavailable: {e}")
        raise HTTPException(status_code=503, detail=f"Workspace unavailable: {e}")
