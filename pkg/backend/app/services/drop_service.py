"""
Drop-point heuristic over a segmented receptacle cloud, including concave
receptacles (sinks, bins, boxes) whose rim sets the release height.
"""

import logging
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from app.errors import (
    DegenerateReceptacleError,
    DropOutOfReachError,
    InvalidInputError,
    NoReceptacleError,
)
from app.models.drop import DROP_CLEARANCE, SLAB_HALF_WIDTH, DropPoint

logger = logging.getLogger(__name__)


def align_cloud(
    cloud: np.ndarray,
    robot_position: Tuple[float, float],
    robot_heading: Tuple[float, float],
    floor_z: float = 0.0,
) -> np.ndarray:
    """Express a world cloud in the robot frame: +X ahead, +Y left, robot at the origin"""
    hx, hy = float(robot_heading[0]), float(robot_heading[1])
    if abs(np.hypot(hx, hy) - 1.0) > 1e-6:
        raise InvalidInputError("robot heading must be a unit 2-vector")
    points = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    if not np.all(np.isfinite(points)):
        raise InvalidInputError("cloud coordinates must be finite")
    dx = points[:, 0] - robot_position[0]
    dy = points[:, 1] - robot_position[1]
    return np.stack([hx * dx + hy * dy, -hy * dx + hx * dy, points[:, 2] - floor_z], axis=-1)


def lower_median(values: np.ndarray) -> float:
    """Order statistic ceil(n/2), counting from 1"""
    n = values.size
    k = (n + 1) // 2 - 1
    return float(np.partition(values, k)[k])


def compute_drop(aligned: np.ndarray, max_release_height: Optional[float] = None) -> DropPoint:
    points = np.asarray(aligned, dtype=np.float64).reshape(-1, 3)
    if points.shape[0] == 0:
        raise NoReceptacleError("segmented receptacle cloud is empty")
    x_m = lower_median(points[:, 0])
    y_m = lower_median(points[:, 1])
    eligible = (points[:, 0] >= 0) & (points[:, 0] <= x_m) & (np.abs(points[:, 1] - y_m) < SLAB_HALF_WIDTH)
    if not eligible.any():
        raise DegenerateReceptacleError(
            f"no receptacle point between the robot and the median ({x_m:.3f}, {y_m:.3f})"
        )
    z_max = DROP_CLEARANCE + float(points[eligible, 2].max())
    if max_release_height is not None and z_max > max_release_height:
        raise DropOutOfReachError(
            f"release height {z_max:.3f} m exceeds the configured limit {max_release_height:.3f} m"
        )
    logger.info(f"Drop point ({x_m:.3f}, {y_m:.3f}) at {z_max:.3f} m over {int(eligible.sum())} points")
    return DropPoint(x_m=x_m, y_m=y_m, z_max=z_max, eligible_points=int(eligible.sum()))


def read_cloud(path: Union[str, Path]) -> np.ndarray:
    """Little-endian float32 xyz triples, the scan archive's payload encoding"""
    payload = Path(path).read_bytes()
    if len(payload) % 12:
        raise InvalidInputError(f"cloud file size {len(payload)} is not a multiple of 12 bytes")
    return np.frombuffer(payload, dtype="<f4").reshape(-1, 3).astype(np.float64)


def write_cloud(path: Union[str, Path], cloud: np.ndarray) -> None:
    Path(path).write_bytes(np.asarray(cloud, dtype="<f4").reshape(-1, 3).tobytes())
