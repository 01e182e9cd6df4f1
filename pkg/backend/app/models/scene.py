from typing import List, Optional, Tuple

from pydantic import BaseModel, Field


class RoomSpec(BaseModel):
    """Rectangular room spanning [0, width] x [0, depth], walls outside that extent"""

    width: float = Field(..., gt=0)
    depth: float = Field(..., gt=0)
    wall_height: float = Field(2.0, gt=0)
    wall_thickness: float = Field(0.1, gt=0)


class ReceptacleSpec(BaseModel):
    label: str = Field(..., min_length=1)
    center: Tuple[float, float]
    size: Tuple[float, float, float]
    # sinks, bins and boxes: a cabinet topped by four rim walls
    concave: bool = False
    rim_thickness: float = Field(0.03, gt=0)
    basin_depth: float = Field(0.15, gt=0)


class ObjectSpec(BaseModel):
    label: str = Field(..., min_length=1)
    # center of the object's box
    position: Tuple[float, float, float]
    size: Tuple[float, float, float] = (0.08, 0.08, 0.10)


class CameraPathSpec(BaseModel):
    frames: int = Field(32, ge=0)
    height: float = Field(1.5, gt=0)
    image_width: int = Field(256, gt=0)
    image_height: int = Field(192, gt=0)
    focal_length: float = Field(200.0, gt=0)


class SceneSpec(BaseModel):
    room: RoomSpec
    receptacles: List[ReceptacleSpec] = []
    objects: List[ObjectSpec] = []
    camera: CameraPathSpec = CameraPathSpec()
    embedding_dim: int = Field(64, ge=2)
    floor_z: float = 0.0
    extra_words: List[str] = []


class EntityTruth(BaseModel):
    label: str
    kind: str
    position: Tuple[float, float, float]
    voxel: Tuple[int, int, int]
    box_min: Tuple[float, float, float]
    box_max: Tuple[float, float, float]


class SceneTruth(BaseModel):
    """Ground truth for oracles, in the map frame (floor at z = 0)"""

    voxel_size: float
    entities: List[EntityTruth]
    # (x_min, y_min, x_max, y_max) of every solid reaching the obstacle band
    footprints: List[Tuple[float, float, float, float]]
    room: RoomSpec

    def entity(self, label: str) -> Optional[EntityTruth]:
        return next((e for e in self.entities if e.label == label), None)

    def is_obstacle(self, x: float, y: float) -> bool:
        inside = 0 <= x <= self.room.width and 0 <= y <= self.room.depth
        return not inside or any(x0 <= x <= x1 and y0 <= y <= y1 for x0, y0, x1, y1 in self.footprints)
