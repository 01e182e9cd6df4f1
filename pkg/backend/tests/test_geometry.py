import math

import numpy as np
import pytest

from app.errors import InvalidInputError
from app.models.geometry import CameraIntrinsics, Pose
from app.utils.geometry import (
    backproject,
    compose,
    inverse,
    look_at,
    pixel_index,
    project,
    project_points,
    transform_points,
)


def _rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _random_pose(rng) -> Pose:
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return Pose(rotation=q, translation=rng.uniform(-2, 2, 3))


def test_principal_pixel_backprojects_onto_optical_axis(intrinsics, identity_pose):
    depth = np.zeros((48, 64), dtype=np.float32)
    depth[24, 32] = 2.0
    cloud = backproject(depth, intrinsics, identity_pose)
    np.testing.assert_array_equal(cloud, [[0.0, 0.0, 2.0]])


def test_backproject_applies_pinhole_then_pose():
    # pixel (cx + fx, cy) must be on the image
    intr =CameraIntrinsics(fx=10.0, fy=10.0, cx=5.0, cy=5.0, width=20, height=10)
    depth = np.zeros((10, 20), dtype=np.float32)
    depth[5, 15] = 1.0
    pose = Pose(rotation=np.eye(3), translation=[0.0, 0.0, 1.0])
    np.testing.assert_allclose(backproject(depth, intr, pose), [[1.0, 0.0, 2.0]])


def test_invalid_depth_pixels_are_skipped(intrinsics, identity_pose, rng):
    depth = rng.uniform(0.5, 3.0, (48, 64)).astype(np.float32)
    depth[rng.random((48, 64)) < 0.3] = 0.0
    cloud = backproject(depth, intrinsics, identity_pose)
    assert cloud.shape == (int((depth > 0).sum()), 3)


def test_backproject_respects_pixel_mask(intrinsics, identity_pose):
    depth = np.ones((48, 64), dtype=np.float32)
    mask = np.zeros((48, 64), dtype=bool)
    mask[10:12, 20:23] = True
    assert backproject(depth, intrinsics, identity_pose, mask).shape == (6, 3)


def test_depth_size_mismatch_is_rejected(intrinsics, identity_pose):
    with pytest.raises(InvalidInputError):
        backproject(np.ones((10, 10)), intrinsics, identity_pose)


def test_project_principal_ray_and_behind_camera(intrinsics, identity_pose):
    assert project((0.0, 0.0, 2.0), intrinsics, identity_pose) == (32.0, 24.0)
    assert project((0.0, 0.0, -1.0), intrinsics, identity_pose) is None
    assert project((5.0, 0.0, 1.0), intrinsics, identity_pose) is None


@pytest.mark.parametrize("x,expected_column", [(-0.324, 0), (0.314, 63), (-0.326, None), (0.316, None)])
def test_image_edges_are_the_outer_pixel_borders(intrinsics, identity_pose, x, expected_column):
    pixel = project((x, 0.0, 1.0), intrinsics, identity_pose)
    if expected_column is None:
        assert pixel is None
    else:
        assert pixel[0] == pytest.approx(100.0 * x + 32.0)
        assert pixel_index(pixel) == (expected_column, 24)


def test_project_inverts_backproject(rng):
    for _ in range(20):
        intr = CameraIntrinsics(
            fx=rng.uniform(50, 300), fy=rng.uniform(50, 300),
            cx=rng.uniform(10, 50), cy=rng.uniform(10, 40), width=64, height=48,
        )
        pose = _random_pose(rng)
        depth = rng.uniform(0.3, 5.0, (48, 64)).astype(np.float32)
        cloud = backproject(depth, intr, pose)
        pixels, in_view = project_points(cloud, intr, pose)
        assert in_view.all()
        v, u = np.mgrid[0:48, 0:64]
        expected = np.stack([u.reshape(-1), v.reshape(-1)], axis=-1)
        assert np.abs(pixels - expected).max() < 0.5
        assert pixel_index(tuple(pixels[100])) == tuple(expected[100])


def test_compose_identity_and_inverse(rng):
    pose = _random_pose(rng)
    same = compose(Pose.identity(), pose)
    np.testing.assert_allclose(same.as_matrix(), pose.as_matrix(), atol=1e-12)
    back = compose(pose, inverse(pose))
    np.testing.assert_allclose(back.as_matrix(), np.eye(4), atol=1e-9)


def test_two_quarter_turns_make_a_half_turn():
    quarter = Pose(rotation=_rot_z(math.pi / 2), translation=np.zeros(3))
    half = compose(quarter, quarter)
    np.testing.assert_allclose(half.rotation, _rot_z(math.pi), atol=1e-12)


def test_composition_is_associative(rng):
    a, b, c = (_random_pose(rng) for _ in range(3))
    left = compose(compose(a, b), c)
    right = compose(a, compose(b, c))
    np.testing.assert_allclose(left.as_matrix(), right.as_matrix(), atol=1e-9)


def test_compose_applies_b_first(rng):
    a, b = _random_pose(rng), _random_pose(rng)
    points = rng.uniform(-1, 1, (5, 3))
    np.testing.assert_allclose(
        transform_points(compose(a, b), points),
        transform_points(a, transform_points(b, points)),
        atol=1e-12,
    )


def test_pose_rejects_non_rotations():
    with pytest.raises(ValueError):
        Pose(rotation=np.diag([1.0, 1.0, -1.0]), translation=np.zeros(3))
    with pytest.raises(ValueError):
        Pose(rotation=np.eye(3) * 2, translation=np.zeros(3))


def test_pose_dict_round_trip(rng):
    pose = _random_pose(rng)
    again = Pose.from_dict(pose.to_dict())
    np.testing.assert_array_equal(again.rotation, pose.rotation)
    np.testing.assert_array_equal(again.translation, pose.translation)


def test_intrinsics_principal_point_must_be_inside():
    with pytest.raises(ValueError):
        CameraIntrinsics(fx=1.0, fy=1.0, cx=64.0, cy=10.0, width=64, height=48)


def test_look_at_centers_the_target(intrinsics):
    pose = look_at((1.0, 2.0, 1.5), (3.0, 1.0, 0.2))
    np.testing.assert_allclose(pose.rotation.T @ pose.rotation, np.eye(3), atol=1e-12)
    u, v = project((3.0, 1.0, 0.2), intrinsics, pose)
    assert u == pytest.approx(32.0)
    assert v == pytest.approx(24.0)
    # image rows point down: a point above the target lands higher in the image
    above = project((3.0, 1.0, 0.5), intrinsics, pose)
    assert above[1] < 24.0


def test_look_at_rejects_degenerate_directions():
    with pytest.raises(InvalidInputError):
        look_at((0.0, 0.0, 1.0), (0.0, 0.0, 1.0))
    with pytest.raises(InvalidInputError):
        look_at((0.0, 0.0, 1.0), (0.0, 0.0, 0.0))
