from typing import Any, Dict, List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# Row-major H x W float32 depth in meters, 0 marks invalid pixels
DepthImage = np.ndarray
# N x 3 float64 points in meters
PointCloud = np.ndarray


class CameraIntrinsics(BaseModel):
    fx: float = Field(..., gt=0)
    fy: float = Field(..., gt=0)
    cx: float = Field(..., ge=0)
    cy: float = Field(..., ge=0)
    width: int = Field(..., gt=0)
    height: int = Field(..., gt=0)

    @model_validator(mode="after")
    def _principal_point_inside(self) -> "CameraIntrinsics":
        if self.cx >= self.width or self.cy >= self.height:
            raise ValueError("principal point must lie inside the image")
        return self


class Pose(BaseModel):
    """Rigid transform mapping camera-frame points to world-frame points"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    rotation: np.ndarray
    translation: np.ndarray

    @field_validator("rotation", mode="before")
    @classmethod
    def _rotation_matrix(cls, value: Any) -> np.ndarray:
        matrix = np.asarray(value, dtype=np.float64).reshape(3, 3)
        if not np.all(np.isfinite(matrix)):
            raise ValueError("rotation must be finite")
        if np.abs(matrix.T @ matrix - np.eye(3)).max() > 1e-9:
            raise ValueError("rotation must be orthonormal")
        if abs(np.linalg.det(matrix) - 1.0) > 1e-9:
            raise ValueError("rotation must have determinant +1")
        return matrix

    @field_validator("translation", mode="before")
    @classmethod
    def _translation_vector(cls, value: Any) -> np.ndarray:
        vector = np.asarray(value, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(vector)):
            raise ValueError("translation must be finite")
        return vector

    @classmethod
    def identity(cls) -> "Pose":
        return cls(rotation=np.eye(3), translation=np.zeros(3))

    def as_matrix(self) -> np.ndarray:
        matrix = np.eye(4)
        matrix[:3, :3] = self.rotation
        matrix[:3, 3] = self.translation
        return matrix

    def to_dict(self) -> Dict[str, List[float]]:
        # row-major rotation, matches the scan manifest layout
        return {
            "rotation": [float(v) for v in self.rotation.reshape(-1)],
            "translation": [float(v) for v in self.translation],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Pose":
        return cls(rotation=data["rotation"], translation=data["translation"])
