import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from app.config import Settings, get_settings
from app.errors import MapStateError
from app.models.navigation import NavTarget, Path as GridPath
from app.models.semantic import QueryResult
from app.models.task import TaskReport, TaskSpec
from app.services.memory_service import VoxelMap
from app.services.navigation_service import ObstacleGrid, plan_path, select_nav_target
from app.services.providers import EmbeddingProvider, Providers, precomputed_providers
from app.services.scan_service import load_scan
from app.services.scene_generator import load_scene, synthetic_providers
from app.services.task_service import run_task

logger = logging.getLogger(__name__)


def load_providers(settings: Settings) -> Optional[Providers]:
    """Synthetic providers for a generated scene, else replay of precomputed model outputs"""
    if settings.scene_dir:
        return synthetic_providers(load_scene(settings.scene_dir))
    if settings.embeddings_path and settings.views_dir and settings.grasps_path:
        return precomputed_providers(settings.embeddings_path, load_scan(settings.views_dir), settings.grasps_path)
    return None


class MapWorkspace:
    """A finalized map, its obstacle grid and the providers that serve requests against them"""

    def __init__(self, voxel_map: VoxelMap, grid: ObstacleGrid, providers: Optional[Providers],
                 settings: Optional[Settings] = None):
        self.voxel_map = voxel_map
        self.grid = grid
        self.providers = providers
        self.settings = settings or get_settings()

    @classmethod
    def from_settings(cls, settings: Settings) -> "MapWorkspace":
        if not settings.map_path or not settings.grid_path:
            raise MapStateError("MAP_PATH and GRID_PATH must point at a built map and grid")
        for path in (settings.map_path, settings.grid_path):
            if not Path(path).exists():
                raise MapStateError(f"{path} does not exist")
        voxel_map = VoxelMap.load(settings.map_path)
        grid = ObstacleGrid.load(settings.grid_path)
        providers = load_providers(settings)
        logger.info(f"Workspace loaded: {len(voxel_map)} voxels, grid {grid.shape}, "
                    f"providers {'ready' if providers else 'not configured'}")
        return cls(voxel_map, grid, providers, settings)

    def _require_providers(self) -> Providers:
        if self.providers is None:
            raise MapStateError("no providers configured: set SCENE_DIR or the precomputed provider paths")
        return self.providers

    @property
    def embedder(self) -> EmbeddingProvider:
        return self._require_providers().embedder

    def query(self, text: str, k: int = 1, near: Optional[str] = None) -> List[QueryResult]:
        embedding = self.embedder.embed_text(text)
        if near:
            return [self.voxel_map.query_near(embedding, self.embedder.embed_text(near),
                                              self.settings.near_top_a, self.settings.near_top_b)]
        return self.voxel_map.query(embedding, k)

    def summary(self) -> Dict[str, Any]:
        rows, cols = self.grid.shape
        return {
            "voxels": len(self.voxel_map),
            "voxel_size": self.voxel_map.voxel_size,
            "embedding_dim": self.voxel_map.embedding_dim,
            "grid_shape": [rows, cols],
            "grid_origin": list(self.grid.origin),
            "cell_size": self.grid.cell_size,
            "free_cells": int(self.grid.free.sum()),
            "providers": self.providers is not None,
        }

    def nav_target(self, x: float, y: float) -> NavTarget:
        return select_nav_target(self.grid, (x, y))

    def path(self, start: Tuple[float, float], goal: Tuple[float, float]) -> GridPath:
        return plan_path(self.grid, self.grid.cell_of(*start), self.grid.cell_of(*goal),
                         self.settings.path_obstacle_weight)

    def run(self, task: TaskSpec, start: Optional[Tuple[float, float]] = None) -> TaskReport:
        settings = self.settings
        return run_task(
            self.voxel_map,
            self.grid,
            task,
            self._require_providers(),
            start=start,
            similarity_floor=settings.similarity_floor,
            near_top_a=settings.near_top_a,
            near_top_b=settings.near_top_b,
            obstacle_weight=settings.path_obstacle_weight,
            max_release_height=settings.max_release_height,
        )


# Global instance
_workspace: Optional[MapWorkspace] = None


def get_workspace() -> MapWorkspace:
    """Get or load the workspace instance"""
    global _workspace
    if _workspace is None:
        _workspace = MapWorkspace.from_settings(get_settings())
    return _workspace


def set_workspace(workspace: Optional[MapWorkspace]) -> None:
    global _workspace
    _workspace = workspace
