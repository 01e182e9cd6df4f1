"""
Pinhole camera and rigid-body helpers.

Camera frame: x right, y down, z forward. Poses map camera-frame points to
the world frame (z up, floor at z = 0). A pixel (u, v) is the integer column
and row; its center is the pixel coordinate itself, so a projected point
belongs to pixel (round(u), round(v)).

The image spans -0.5 <= u < width - 0.5 and -0.5 <= v < height - 0.5, the
outer edges of its first and last pixels. `project` reports any point in
that span as in view, so it can return a slightly negative coordinate such
as (-0.4, 0.0); that point lies on pixel (0, 0). Anything outside the span
is out of view.
"""

from typing import Optional, Tuple

import numpy as np

from app.errors import InvalidInputError
from app.models.geometry import CameraIntrinsics, DepthImage, PointCloud, Pose


def _check_depth(depth: DepthImage, intr: CameraIntrinsics) -> np.ndarray:
    depth = np.asarray(depth)
    if depth.shape != (intr.height, intr.width):
        raise InvalidInputError(
            f"depth image is {depth.shape[::-1]} but intrinsics expect {(intr.width, intr.height)}"
        )
    return depth


def pixel_rays(intr: CameraIntrinsics) -> np.ndarray:
    """Camera-frame ray (z = 1) through every pixel, shape H x W x 3"""
    v, u = np.mgrid[0:intr.height, 0:intr.width].astype(np.float64)
    return np.stack([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, np.ones_like(u)], axis=-1)


def backproject(
    depth: DepthImage,
    intr: CameraIntrinsics,
    pose: Pose,
    pixel_mask: Optional[np.ndarray] = None,
) -> PointCloud:
    """World point for every valid pixel (optionally restricted to a mask), row-major order"""
    depth = _check_depth(depth, intr)
    valid = depth > 0
    if pixel_mask is not None:
        pixel_mask = np.asarray(pixel_mask, dtype=bool)
        if pixel_mask.shape != depth.shape:
            raise InvalidInputError(f"mask shape {pixel_mask.shape} does not match depth {depth.shape}")
        valid &= pixel_mask
    v, u = np.nonzero(valid)
    d = depth[v, u].astype(np.float64)
    camera_points = np.stack(
        [(u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, d], axis=-1
    )
    return transform_points(pose, camera_points)


def transform_points(pose: Pose, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return points @ pose.rotation.T + pose.translation


def project_points(points: np.ndarray, intr: CameraIntrinsics, pose: Pose) -> Tuple[np.ndarray, np.ndarray]:
    """Pixel coordinates (N x 2, u then v) and an in-view flag per world point"""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    camera_points = (points - pose.translation) @ pose.rotation
    z = camera_points[:, 2]
    in_front = z > 0
    safe_z = np.where(in_front, z, 1.0)
    u = intr.fx * camera_points[:, 0] / safe_z + intr.cx
    v = intr.fy * camera_points[:, 1] / safe_z + intr.cy
    in_view = (
        in_front
        & (u >= -0.5) & (u < intr.width - 0.5)
        & (v >= -0.5) & (v < intr.height - 0.5)
    )
    return np.stack([u, v], axis=-1), in_view


def project(point, intr: CameraIntrinsics, pose: Pose) -> Optional[Tuple[float, float]]:
    """(u, v) of a world point, or None when it is behind the camera or off the image"""
    point = np.asarray(point, dtype=np.float64).reshape(3)
    pixels, in_view = project_points(point[None, :], intr, pose)
    if not in_view[0]:
        return None
    return float(pixels[0, 0]), float(pixels[0, 1])


def pixel_index(pixel: Tuple[float, float]) -> Tuple[int, int]:
    """Integer (column, row) of the pixel containing a projected coordinate"""
    return int(np.floor(pixel[0] + 0.5)), int(np.floor(pixel[1] + 0.5))


def compose(a: Pose, b: Pose) -> Pose:
    """Pose applying b first, then a"""
    return Pose(
        rotation=a.rotation @ b.rotation,
        translation=a.rotation @ b.translation + a.translation,
    )


def inverse(pose: Pose) -> Pose:
    return Pose(rotation=pose.rotation.T, translation=-pose.rotation.T @ pose.translation)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """Camera pose at eye whose optical axis points at target, image rows pointing down"""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    norm = np.linalg.norm(forward)
    if norm == 0:
        raise InvalidInputError("look_at target coincides with the eye")
    forward /= norm
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(right) < 1e-9:
        raise InvalidInputError("look_at direction is parallel to the up vector")
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    return Pose(rotation=np.stack([right, down, forward], axis=1), translation=eye)
