import os
from typing import List, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field

# Load environment variables
load_dotenv()


def _optional_float(name: str) -> Optional[float]:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return None
    return float(raw)


class Settings(BaseModel):
    voxel_size: float = Field(0.05, gt=0)
    grid_cell_size: float = Field(0.10, gt=0)
    floor_height: float = 0.10
    ceiling_height: float = 1.80
    inflation_radius: float = Field(0.20, ge=0)
    path_obstacle_weight: float = Field(1.0, ge=0)
    near_top_a: int = Field(10, ge=1)
    near_top_b: int = Field(50, ge=1)
    similarity_floor: float = 0.0
    max_release_height: Optional[float] = None
    embedding_dim: int = Field(64, ge=2)
    log_level: str = "INFO"
    map_path: Optional[str] = None
    grid_path: Optional[str] = None
    scene_dir: Optional[str] = None
    embeddings_path: Optional[str] = None
    views_dir: Optional[str] = None
    grasps_path: Optional[str] = None
    allowed_origins: List[str] = ["http://localhost:3000"]
    port: int = 8000

    @classmethod
    def from_env(cls) -> "Settings":
        return cls(
            voxel_size=float(os.getenv("VOXEL_SIZE", 0.05)),
            grid_cell_size=float(os.getenv("GRID_CELL_SIZE", 0.10)),
            floor_height=float(os.getenv("FLOOR_HEIGHT", 0.10)),
            ceiling_height=float(os.getenv("CEILING_HEIGHT", 1.80)),
            inflation_radius=float(os.getenv("INFLATION_RADIUS", 0.20)),
            path_obstacle_weight=float(os.getenv("PATH_OBSTACLE_WEIGHT", 1.0)),
            near_top_a=int(os.getenv("NEAR_TOP_A", 10)),
            near_top_b=int(os.getenv("NEAR_TOP_B", 50)),
            similarity_floor=float(os.getenv("SIMILARITY_FLOOR", 0.0)),
            max_release_height=_optional_float("MAX_RELEASE_HEIGHT"),
            embedding_dim=int(os.getenv("EMBEDDING_DIM", 64)),
            log_level=os.getenv("LOG_LEVEL", "INFO"),
            map_path=os.getenv("MAP_PATH"),
            grid_path=os.getenv("GRID_PATH"),
            scene_dir=os.getenv("SCENE_DIR"),
            embeddings_path=os.getenv("EMBEDDINGS_PATH"),
            views_dir=os.getenv("VIEWS_DIR"),
            grasps_path=os.getenv("GRASPS_PATH"),
            allowed_origins=os.getenv("ALLOWED_ORIGINS", "http://localhost:3000").split(","),
            port=int(os.getenv("PORT", 8000)),
        )


# Global instance
_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """Get or create the settings instance"""
    global _settings
    if _settings is None:
        _settings = Settings.from_env()
    return _settings


def reset_settings() -> None:
    global _settings
    _settings = None
