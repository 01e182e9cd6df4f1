from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.models.geometry import CameraIntrinsics, Pose
from app.models.semantic import Detection

SCAN_FORMAT_VERSION = 1


class PosedFrame(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    index: int = Field(..., ge=0)
    intrinsics: CameraIntrinsics
    pose: Pose
    depth: np.ndarray
    color: Optional[str] = None
    detections: List[Detection] = []


class ScanManifest(BaseModel):
    format_version: int = SCAN_FORMAT_VERSION
    frame_count: int = Field(..., ge=0)
    intrinsics: CameraIntrinsics
    embedding_dim: int = Field(..., ge=1)
    # world height of the floor; ingestion shifts it to z = 0
    floor_z: float = 0.0


class ScanArchive(BaseModel):
    manifest: ScanManifest
    frames: List[PosedFrame] = []
