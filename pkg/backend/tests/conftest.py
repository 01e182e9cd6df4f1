"""Shared fixtures: a small furnished room, its scan and the map built from it."""

import numpy as np
import pytest

from app.models.geometry import CameraIntrinsics, Pose
from app.models.scene import CameraPathSpec, ObjectSpec, ReceptacleSpec, RoomSpec, SceneSpec
from app.services.scan_service import build_map
from app.services.scene_generator import gen_synthetic_scene, synthetic_providers


@pytest.fixture
def intrinsics():
    return CameraIntrinsics(fx=100.0, fy=100.0, cx=32.0, cy=24.0, width=64, height=48)


@pytest.fixture
def identity_pose():
    return Pose.identity()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def room_spec(frames: int = 24) -> SceneSpec:
    return SceneSpec(
        room=RoomSpec(width=4.0, depth=4.0),
        receptacles=[
            ReceptacleSpec(label="table", center=(1.0, 1.2), size=(0.8, 0.6, 0.75)),
            ReceptacleSpec(label="counter", center=(3.0, 2.9), size=(1.0, 0.5, 0.9)),
        ],
        objects=[
            ObjectSpec(label="mug", position=(1.1, 1.2, 0.80), size=(0.08, 0.08, 0.10)),
            ObjectSpec(label="bottle", position=(2.9, 2.9, 0.97), size=(0.07, 0.07, 0.14)),
        ],
        camera=CameraPathSpec(frames=frames),
        extra_words=["sofa"],
    )


@pytest.fixture(scope="session")
def scene():
    return gen_synthetic_scene(room_spec(), seed=7)


@pytest.fixture(scope="session")
def built(scene):
    """(voxel_map, grid) for the session scene"""
    return build_map(scene.archive)


@pytest.fixture
def providers(scene):
    return synthetic_providers(scene)
