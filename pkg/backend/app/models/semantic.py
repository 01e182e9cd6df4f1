from typing import Any, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Detection(BaseModel):
    """One open-vocabulary detection on a frame"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    label: str
    # inclusive pixel rectangle (u_min, v_min, u_max, v_max)
    bbox: Tuple[int, int, int, int]
    mask: Optional[np.ndarray] = None
    embedding: np.ndarray
    confidence: float = Field(..., gt=0, le=1)

    @field_validator("embedding", mode="before")
    @classmethod
    def _unit_embedding(cls, value: Any) -> np.ndarray:
        vector = np.asarray(value, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(vector)):
            raise ValueError("embedding must be finite")
        if abs(np.linalg.norm(vector) - 1.0) > 1e-6:
            raise ValueError("embedding must have unit norm")
        return vector

    @field_validator("mask", mode="before")
    @classmethod
    def _boolean_mask(cls, value: Any) -> Optional[np.ndarray]:
        if value is None:
            return None
        mask = np.asarray(value, dtype=bool)
        if mask.ndim != 2:
            raise ValueError("mask must be two-dimensional")
        return mask

    @model_validator(mode="after")
    def _mask_inside_bbox(self) -> "Detection":
        u0, v0, u1, v1 = self.bbox
        if u0 > u1 or v0 > v1 or u0 < 0 or v0 < 0:
            raise ValueError(f"invalid bbox {self.bbox}")
        if self.mask is not None:
            rows, cols = np.nonzero(self.mask)
            if rows.size and (cols.min() < u0 or cols.max() > u1 or rows.min() < v0 or rows.max() > v1):
                raise ValueError("mask extends outside its bounding box")
        return self

    def pixel_mask(self, height: int, width: int) -> np.ndarray:
        """Pixels to back-project: the mask, or the bbox when no mask was given"""
        if self.mask is not None:
            if self.mask.shape != (height, width):
                raise ValueError(f"mask shape {self.mask.shape} does not match image {(height, width)}")
            return self.mask
        mask = np.zeros((height, width), dtype=bool)
        u0, v0, u1, v1 = self.bbox
        mask[v0:v1 + 1, u0:u1 + 1] = True
        return mask


class QueryResult(BaseModel):
    voxel_index: Tuple[int, int, int]
    position: Tuple[float, float, float]
    score: float
