"""
Deterministic synthetic scenes: axis-aligned boxes on a floor plane,
ray-cast into posed depth frames with detections, plus the synthetic
observation, segmentation and grasp providers driven by the same world.
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

from app.errors import SceneSpecError
from app.models.geometry import CameraIntrinsics, Pose
from app.models.grasp import GraspProposal
from app.models.scan import PosedFrame, ScanArchive, ScanManifest
from app.models.scene import (
    CameraPathSpec,
    EntityTruth,
    ObjectSpec,
    ReceptacleSpec,
    RoomSpec,
    SceneSpec,
    SceneTruth,
)
from app.models.semantic import Detection
from app.services.memory_service import DEFAULT_VOXEL_SIZE, voxel_of
from app.services.providers import (
    CameraView,
    EmbeddingProvider,
    Providers,
    SyntheticEmbeddingProvider,
    SyntheticVocabulary,
    embed_text_synthetic,
)
from app.services.scan_service import load_scan, save_scan
from app.utils.geometry import look_at as look_at_pose
from app.utils.geometry import pixel_rays, project
from app.utils.mask_utils import mask_bbox

logger = logging.getLogger(__name__)

SCENE_FILE = "scene.json"
FLOOR = -1
WALL = -2
NOTHING = -3
MIN_DETECTION_PIXELS = 20
MAX_RANGE = 12.0
HEAD_CAMERA_HEIGHT = 1.2
# obstacle band used for ground-truth footprints
_BAND = (0.10, 1.80)


@dataclass(frozen=True)
class Box:
    lo: Tuple[float, float, float]
    hi: Tuple[float, float, float]
    entity: int


class SyntheticWorld:
    """Boxes plus the z = 0 floor; entity ids index `labels`, walls use WALL"""

    def __init__(self, boxes: List[Box], labels: List[str], kinds: List[str]):
        self.boxes = boxes
        self.labels = labels
        self.kinds = kinds

    @classmethod
    def from_spec(cls, spec: SceneSpec) -> "SyntheticWorld":
        room = spec.room
        t, h = room.wall_thickness, room.wall_height
        boxes = [
            Box((-t, -t, 0.0), (room.width + t, 0.0, h), WALL),
            Box((-t, room.depth, 0.0), (room.width + t, room.depth + t, h), WALL),
            Box((-t, 0.0, 0.0), (0.0, room.depth, h), WALL),
            Box((room.width, 0.0, 0.0), (room.width + t, room.depth, h), WALL),
        ]
        labels, kinds = [], []
        for receptacle in spec.receptacles:
            entity = len(labels)
            labels.append(receptacle.label)
            kinds.append("receptacle")
            boxes.extend(_receptacle_boxes(receptacle, entity))
        for obj in spec.objects:
            entity = len(labels)
            labels.append(obj.label)
            kinds.append("object")
            lo, hi = _object_extent(obj)
            boxes.append(Box(lo, hi, entity))
        return cls(boxes, labels, kinds)

    def entity_extent(self, entity: int) -> Tuple[np.ndarray, np.ndarray]:
        parts = [b for b in self.boxes if b.entity == entity]
        lo = np.min([b.lo for b in parts], axis=0)
        hi = np.max([b.hi for b in parts], axis=0)
        return lo, hi

    def render(self, intr: CameraIntrinsics, pose: Pose) -> Tuple[np.ndarray, np.ndarray]:
        """Float32 depth (0 where nothing is hit) and the entity id of every pixel"""
        rays = pixel_rays(intr).reshape(-1, 3)
        # camera rays have unit z, so the ray parameter is the depth
        dirs = rays @ pose.rotation.T
        origin = pose.translation
        best_t = np.full(dirs.shape[0], np.inf)
        best_id = np.full(dirs.shape[0], NOTHING, dtype=np.int32)

        with np.errstate(divide="ignore", invalid="ignore"):
            t_floor = np.where(dirs[:, 2] < 0, -origin[2] / dirs[:, 2], np.inf)
        hit = (t_floor > 0) & (t_floor < best_t)
        best_t[hit] = t_floor[hit]
        best_id[hit] = FLOOR

        safe = np.where(np.abs(dirs) < 1e-12, 1e-12, dirs)
        inv = 1.0 / safe
        for box in self.boxes:
            t1 = (np.asarray(box.lo) - origin) * inv
            t2 = (np.asarray(box.hi) - origin) * inv
            t_near = np.minimum(t1, t2).max(axis=1)
            t_far = np.maximum(t1, t2).min(axis=1)
            hit = (t_far >= t_near) & (t_near > 1e-9) & (t_near < best_t)
            best_t[hit] = t_near[hit]
            best_id[hit] = box.entity

        best_t[best_t > MAX_RANGE] = np.inf
        best_id[~np.isfinite(best_t)] = NOTHING
        depth = np.where(np.isfinite(best_t), best_t, 0.0).astype(np.float32)
        return depth.reshape(intr.height, intr.width), best_id.reshape(intr.height, intr.width)


def _receptacle_boxes(receptacle: ReceptacleSpec, entity: int) -> List[Box]:
    (cx, cy), (sx, sy, sz) = receptacle.center, receptacle.size
    x0, x1, y0, y1 = cx - sx / 2, cx + sx / 2, cy - sy / 2, cy + sy / 2
    if not receptacle.concave:
        return [Box((x0, y0, 0.0), (x1, y1, sz), entity)]
    r = receptacle.rim_thickness
    base = max(sz - receptacle.basin_depth, 0.0)
    return [
        Box((x0, y0, 0.0), (x1, y1, base), entity),
        Box((x0, y0, base), (x0 + r, y1, sz), entity),
        Box((x1 - r, y0, base), (x1, y1, sz), entity),
        Box((x0 + r, y0, base), (x1 - r, y0 + r, sz), entity),
        Box((x0 + r, y1 - r, base), (x1 - r, y1, sz), entity),
    ]


def _object_extent(obj: ObjectSpec) -> Tuple[Tuple[float, float, float], Tuple[float, float, float]]:
    center, half = np.asarray(obj.position), np.asarray(obj.size) / 2
    lo, hi = center - half, center + half
    return tuple(float(v) for v in lo), tuple(float(v) for v in hi)


def _check_spec(spec: SceneSpec) -> None:
    room = spec.room

    def inside(label: str, lo, hi) -> None:
        if lo[0] < 0 or lo[1] < 0 or hi[0] > room.width or hi[1] > room.depth or lo[2] < 0 or hi[2] > room.wall_height:
            raise SceneSpecError(
                f"'{label}' spans {tuple(round(v, 3) for v in lo)}..{tuple(round(v, 3) for v in hi)}, "
                f"outside the {room.width} x {room.depth} m room"
            )

    for receptacle in spec.receptacles:
        (cx, cy), (sx, sy, sz) = receptacle.center, receptacle.size
        if sx <= 0 or sy <= 0 or sz <= 0:
            raise SceneSpecError(f"receptacle '{receptacle.label}' has a non-positive size")
        if receptacle.concave and 2 * receptacle.rim_thickness >= min(sx, sy):
            raise SceneSpecError(f"rim of '{receptacle.label}' is thicker than the receptacle")
        inside(receptacle.label, (cx - sx / 2, cy - sy / 2, 0.0), (cx + sx / 2, cy + sy / 2, sz))
    for obj in spec.objects:
        if min(obj.size) <= 0:
            raise SceneSpecError(f"object '{obj.label}' has a non-positive size")
        lo, hi = _object_extent(obj)
        inside(obj.label, lo, hi)


def scene_intrinsics(camera: CameraPathSpec) -> CameraIntrinsics:
    return CameraIntrinsics(
        fx=camera.focal_length,
        fy=camera.focal_length,
        cx=(camera.image_width - 1) / 2,
        cy=(camera.image_height - 1) / 2,
        width=camera.image_width,
        height=camera.image_height,
    )


def camera_poses(spec: SceneSpec, rng: np.random.Generator) -> List[Pose]:
    """Ring of cameras at a fixed height, rotating between three aims so the whole floor gets seen"""
    room, camera = spec.room, spec.camera
    center = np.array([room.width / 2, room.depth / 2])
    radius = 0.3 * min(room.width, room.depth)
    poses = []
    for i in range(camera.frames):
        angle = 2 * math.pi * i / max(camera.frames, 1) + rng.uniform(-0.05, 0.05)
        direction = np.array([math.cos(angle), math.sin(angle)])
        eye_xy = center + radius * direction
        if i % 3 == 0:
            target_xy, target_z = center, 0.0
        elif i % 3 == 1:
            target_xy, target_z = center - radius * direction, 0.3
        else:
            target_xy, target_z = eye_xy + 2.0 * radius * direction, 0.2
        eye = (float(eye_xy[0]), float(eye_xy[1]), camera.height)
        target = (float(target_xy[0]), float(target_xy[1]), target_z)
        poses.append(look_at_pose(eye, target))
    return poses


def scene_vocabulary(spec: SceneSpec, seed: int) -> SyntheticVocabulary:
    words = [r.label for r in spec.receptacles] + [o.label for o in spec.objects] + list(spec.extra_words)
    return SyntheticVocabulary(words, spec.embedding_dim, seed)


def scene_truth(spec: SceneSpec, world: SyntheticWorld, voxel_size: float) -> SceneTruth:
    entities = []
    for entity, (label, kind) in enumerate(zip(world.labels, world.kinds)):
        lo, hi = world.entity_extent(entity)
        if kind == "object":
            position = tuple(float(v) for v in spec.objects[entity - len(spec.receptacles)].position)
        else:
            position = tuple(float(v) for v in (lo + hi) / 2)
        entities.append(EntityTruth(
            label=label,
            kind=kind,
            position=position,
            voxel=voxel_of(position, voxel_size),
            box_min=tuple(float(v) for v in lo),
            box_max=tuple(float(v) for v in hi),
        ))
    footprints = [
        (b.lo[0], b.lo[1], b.hi[0], b.hi[1])
        for b in world.boxes
        if b.entity != WALL and b.hi[2] > _BAND[0] and b.lo[2] < _BAND[1]
    ]
    return SceneTruth(voxel_size=voxel_size, entities=entities, footprints=footprints, room=spec.room)


@dataclass
class SyntheticScene:
    spec: SceneSpec
    seed: int
    archive: ScanArchive
    truth: SceneTruth
    vocabulary: SyntheticVocabulary
    world: SyntheticWorld


def gen_synthetic_scene(spec: SceneSpec, seed: int = 0, voxel_size: float = DEFAULT_VOXEL_SIZE) -> SyntheticScene:
    """Posed depth frames with detections for a box world; same (spec, seed) gives the same archive"""
    _check_spec(spec)
    rng = np.random.default_rng(seed)
    world = SyntheticWorld.from_spec(spec)
    vocab = scene_vocabulary(spec, seed)
    intr = scene_intrinsics(spec.camera)
    # stored embeddings are float32 in the archive; generate them that way
    label_vectors = {
        label: embed_text_synthetic(vocab, label).astype(np.float32).astype(np.float64)
        for label in world.labels
    }
    lift = np.array([0.0, 0.0, spec.floor_z])

    frames = []
    for index, pose in enumerate(camera_poses(spec, rng)):
        depth, ids = world.render(intr, pose)
        detections = []
        for entity in np.unique(ids[ids >= 0]).tolist():
            mask = ids == entity
            if int(mask.sum()) < MIN_DETECTION_PIXELS:
                continue
            label = world.labels[entity]
            detections.append(Detection(
                label=label,
                bbox=mask_bbox(mask),
                mask=mask,
                embedding=label_vectors[label],
                confidence=float(rng.uniform(0.5, 1.0)),
            ))
        frames.append(PosedFrame(
            index=index,
            intrinsics=intr,
            pose=Pose(rotation=pose.rotation, translation=pose.translation + lift),
            depth=depth,
            detections=detections,
        ))

    manifest = ScanManifest(
        frame_count=len(frames),
        intrinsics=intr,
        embedding_dim=spec.embedding_dim,
        floor_z=spec.floor_z,
    )
    truth = scene_truth(spec, world, voxel_size)
    logger.info(f"Generated scene with {len(world.labels)} entities and {len(frames)} frames (seed {seed})")
    return SyntheticScene(spec, seed, ScanArchive(manifest=manifest, frames=frames), truth, vocab, world)


def save_scene(scene: SyntheticScene, directory: Union[str, Path]) -> Path:
    directory = save_scan(scene.archive, directory)
    record = {
        "seed": scene.seed,
        "spec": scene.spec.model_dump(mode="json"),
        "vocabulary": scene.vocabulary.to_dict(),
        "truth": scene.truth.model_dump(mode="json"),
    }
    (directory / SCENE_FILE).write_text(json.dumps(record, indent=1), encoding="utf-8")
    return directory


def load_scene(directory: Union[str, Path]) -> SyntheticScene:
    directory = Path(directory)
    try:
        record = json.loads((directory / SCENE_FILE).read_text(encoding="utf-8"))
        spec = SceneSpec(**record["spec"])
        truth = SceneTruth(**record["truth"])
    except FileNotFoundError:
        raise SceneSpecError(f"{directory} has no {SCENE_FILE}")
    except (KeyError, TypeError, ValueError) as e:
        raise SceneSpecError(f"invalid {SCENE_FILE}: {e}")
    return SyntheticScene(
        spec=spec,
        seed=int(record["seed"]),
        archive=load_scan(directory),
        truth=truth,
        vocabulary=SyntheticVocabulary.from_dict(record["vocabulary"]),
        world=SyntheticWorld.from_spec(spec),
    )


def load_scene_spec(path: Union[str, Path]) -> SceneSpec:
    try:
        return SceneSpec(**json.loads(Path(path).read_text(encoding="utf-8")))
    except FileNotFoundError:
        raise SceneSpecError(f"scene spec {path} does not exist")
    except (json.JSONDecodeError, ValidationError, TypeError) as e:
        raise SceneSpecError(f"invalid scene spec {path}: {e}")


_OBJECT_LABELS = ["mug", "bottle", "apple", "book", "sponge", "bowl", "toy", "can"]
_SURFACES = [("table", 0.75, (0.9, 0.6)), ("counter", 0.9, (1.0, 0.5)),
             ("desk", 0.72, (0.8, 0.6)), ("shelf", 0.6, (0.8, 0.4))]
_CONCAVE = [("sink", 0.85, (0.6, 0.5)), ("bin", 0.5, (0.4, 0.4))]


def random_apartment_spec(seed: int = 0, frames: int = 32) -> SceneSpec:
    """A furnished room: two or three surfaces, one concave receptacle, objects on the surfaces"""
    rng = np.random.default_rng(seed)
    width, depth = float(rng.uniform(5.0, 6.0)), float(rng.uniform(4.0, 5.0))
    slots = [(0.25, 0.25), (0.75, 0.25), (0.25, 0.78), (0.75, 0.78)]
    order = rng.permutation(len(slots))
    surfaces = [_SURFACES[i] for i in rng.permutation(len(_SURFACES))[: int(rng.integers(2, 4))]]
    concave = _CONCAVE[int(rng.integers(len(_CONCAVE)))]

    receptacles = []
    for (label, height, (sx, sy)), slot in zip(surfaces + [concave], order):
        fx, fy = slots[int(slot)]
        center = (width * fx + float(rng.uniform(-0.15, 0.15)), depth * fy + float(rng.uniform(-0.15, 0.15)))
        receptacles.append(ReceptacleSpec(
            label=label, center=center, size=(sx, sy, height), concave=label == concave[0],
        ))

    objects = []
    labels = list(rng.permutation(_OBJECT_LABELS)[: int(rng.integers(2, 5))])
    for i, label in enumerate(labels):
        surface = receptacles[i % len(surfaces)]
        (cx, cy), (sx, sy, sz) = surface.center, surface.size
        size = (0.08, 0.08, float(rng.uniform(0.08, 0.14)))
        position = (
            cx + float(rng.uniform(-0.3, 0.3)) * sx,
            cy + float(rng.uniform(-0.3, 0.3)) * sy,
            sz + size[2] / 2,
        )
        objects.append(ObjectSpec(label=str(label), position=position, size=size))

    return SceneSpec(
        room=RoomSpec(width=width, depth=depth),
        receptacles=receptacles,
        objects=objects,
        camera=CameraPathSpec(frames=frames),
    )


def apartment_task(spec: SceneSpec) -> Tuple[str, str]:
    """(pick, drop) queries: the first object, dropped on a receptacle it is not standing on"""
    if not spec.objects or len(spec.receptacles) < 2:
        raise SceneSpecError("scene needs an object and two receptacles for a task")
    obj = spec.objects[0]
    for receptacle in spec.receptacles:
        (cx, cy), (sx, sy, _) = receptacle.center, receptacle.size
        if not (abs(obj.position[0] - cx) <= sx / 2 and abs(obj.position[1] - cy) <= sy / 2):
            return obj.label, receptacle.label
    raise SceneSpecError("every receptacle holds the object")


class SyntheticObservationProvider:
    """Renders the head camera at a fixed height, aimed at the requested point"""

    def __init__(self, world: SyntheticWorld, intrinsics: CameraIntrinsics, camera_height: float = HEAD_CAMERA_HEIGHT):
        self.world = world
        self.intrinsics = intrinsics
        self.camera_height = camera_height

    def capture(self, position, heading, look_at) -> CameraView:
        eye = (float(position[0]), float(position[1]), self.camera_height)
        target = tuple(float(v) for v in look_at)
        if math.hypot(target[0] - eye[0], target[1] - eye[1]) < 1e-6:
            target = (eye[0] + float(heading[0]), eye[1] + float(heading[1]), target[2])
        pose = look_at_pose(eye, target)
        depth, _ = self.world.render(self.intrinsics, pose)
        return CameraView(intrinsics=self.intrinsics, pose=pose, depth=depth)


class SyntheticSegmentationProvider:
    """Mask of the visible entity whose label best matches the text"""

    def __init__(self, world: SyntheticWorld, embedder: EmbeddingProvider, min_similarity: float = 0.5):
        self.world = world
        self.embedder = embedder
        self.min_similarity = min_similarity

    def segment(self, view: CameraView, text: str) -> Optional[np.ndarray]:
        _, ids = self.world.render(view.intrinsics, view.pose)
        query = self.embedder.embed_text(text)
        best, best_score = None, self.min_similarity
        for entity in np.unique(ids[ids >= 0]).tolist():
            if int((ids == entity).sum()) < MIN_DETECTION_PIXELS:
                continue
            similarity = float(self.embedder.embed_text(self.world.labels[entity]) @ query)
            if similarity > best_score:
                best, best_score = entity, similarity
        if best is None:
            logger.warning(f"Nothing visible matches '{text}'")
            return None
        return ids == best


class SyntheticGraspProvider:
    """Side and top grasps on every object in view, plus surface grasps on receptacles"""

    def __init__(self, world: SyntheticWorld, seed: int = 0):
        self.world = world
        self.seed = seed

    def propose(self, view: CameraView) -> List[GraspProposal]:
        proposals = []
        camera_xy = view.pose.translation[:2]
        for entity, kind in enumerate(self.world.kinds):
            lo, hi = self.world.entity_extent(entity)
            center = (lo + hi) / 2
            if project(center, view.intrinsics, view.pose) is None:
                continue
            rng = np.random.default_rng([self.seed, entity])
            top = (float(center[0]), float(center[1]), float(hi[2]))
            if kind == "receptacle":
                proposals.append(GraspProposal(point=top, approach=(0.0, 0.0, -1.0),
                                               width=0.08, height=0.02, depth=0.02,
                                               score=float(rng.uniform(0.1, 0.4))))
                continue
            toward = center[:2] - camera_xy
            norm = float(np.hypot(*toward))
            if norm > 1e-9:
                approach = (float(toward[0] / norm), float(toward[1] / norm), 0.0)
                proposals.append(GraspProposal(point=tuple(float(v) for v in center), approach=approach,
                                               width=float(hi[0] - lo[0]), height=0.02, depth=0.02,
                                               score=float(rng.uniform(0.5, 0.95))))
            proposals.append(GraspProposal(point=top, approach=(0.0, 0.0, -1.0),
                                           width=float(hi[1] - lo[1]), height=0.02, depth=0.02,
                                           score=float(rng.uniform(0.5, 0.95))))
        return proposals


def synthetic_providers(scene: SyntheticScene, min_similarity: float = 0.5) -> Providers:
    embedder = SyntheticEmbeddingProvider(scene.vocabulary)
    return Providers(
        embedder=embedder,
        observer=SyntheticObservationProvider(scene.world, scene.archive.manifest.intrinsics),
        segmenter=SyntheticSegmentationProvider(scene.world, embedder, min_similarity),
        grasper=SyntheticGraspProvider(scene.world, scene.seed),
    )


def describe(scene: SyntheticScene) -> Dict[str, object]:
    return {
        "seed": scene.seed,
        "frames": len(scene.archive.frames),
        "entities": [{"label": e.label, "kind": e.kind, "voxel": list(e.voxel)} for e in scene.truth.entities],
    }


def load_vocabulary(directory: Union[str, Path]) -> SyntheticVocabulary:
    """Just the vocabulary of a saved scene, without reading its frames"""
    path = Path(directory) / SCENE_FILE
    try:
        return SyntheticVocabulary.from_dict(json.loads(path.read_text(encoding="utf-8"))["vocabulary"])
    except FileNotFoundError:
        raise SceneSpecError(f"{directory} has no {SCENE_FILE}")
    except (KeyError, TypeError, ValueError) as e:
        raise SceneSpecError(f"invalid {SCENE_FILE}: {e}")
