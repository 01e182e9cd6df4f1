"""
Scan archive I/O and map building.

An archive is a directory holding `manifest.json` (UTF-8 metadata) and
`frames.bin` (little-endian float32 payloads: row-major depth blocks and
detection embeddings, referenced from the manifest by byte offset). Masks
are run-length encoded inside the manifest.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np
from pydantic import ValidationError

from app.errors import InvalidInputError, ScanFormatError
from app.models.geometry import CameraIntrinsics, Pose
from app.models.scan import SCAN_FORMAT_VERSION, PosedFrame, ScanArchive, ScanManifest
from app.models.semantic import Detection
from app.services.memory_service import DEFAULT_VOXEL_SIZE, VoxelMap
from app.services.navigation_service import (
    DEFAULT_CELL_SIZE,
    DEFAULT_INFLATION_RADIUS,
    ObstacleGrid,
    build_grid,
    inflate,
)
from app.utils.mask_utils import decode_rle, encode_rle

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
PAYLOAD_NAME = "frames.bin"


class _PayloadWriter:
    def __init__(self):
        self.chunks: List[bytes] = []
        self.offset = 0

    def add(self, array: np.ndarray) -> Dict[str, int]:
        data = np.ascontiguousarray(array, dtype="<f4").tobytes()
        ref = {"offset": self.offset, "nbytes": len(data)}
        self.chunks.append(data)
        self.offset += len(data)
        return ref


def save_scan(scan: ScanArchive, directory: Union[str, Path]) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    payload = _PayloadWriter()
    frames = []
    for frame in scan.frames:
        detections = []
        for det in frame.detections:
            detections.append({
                "label": det.label,
                "bbox": list(det.bbox),
                "mask": encode_rle(det.mask) if det.mask is not None else None,
                "embedding": payload.add(det.embedding),
                "confidence": det.confidence,
            })
        frames.append({
            "index": frame.index,
            "pose": frame.pose.to_dict(),
            "color": frame.color,
            "depth": payload.add(frame.depth),
            "detections": detections,
        })
    manifest = scan.manifest.model_dump()
    manifest["frame_count"] = len(scan.frames)
    manifest["frames"] = frames
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    (directory / PAYLOAD_NAME).write_bytes(b"".join(payload.chunks))
    logger.info(f"Saved scan with {len(frames)} frames to {directory}")
    return directory


def _read_block(blob: bytes, ref: Dict[str, Any], count: int, frame_index: int, what: str) -> np.ndarray:
    try:
        offset = int(ref["offset"])
    except (KeyError, TypeError, ValueError):
        raise ScanFormatError(f"{what} has no valid payload offset", frame_index)
    nbytes = count * 4
    if "nbytes" in ref and int(ref["nbytes"]) != nbytes:
        raise ScanFormatError(f"{what} holds {ref['nbytes']} bytes, expected {nbytes}", frame_index)
    if offset < 0 or offset + nbytes > len(blob):
        raise ScanFormatError(f"{what} payload is truncated", frame_index)
    return np.frombuffer(blob, dtype="<f4", count=count, offset=offset)


def _parse_frame(raw: Dict[str, Any], manifest: ScanManifest, blob: bytes, position: int) -> PosedFrame:
    intr = manifest.intrinsics
    try:
        index = int(raw.get("index", position))
        pose = Pose.from_dict(raw["pose"])
    except (KeyError, TypeError, ValueError) as e:
        raise ScanFormatError(f"invalid pose: {e}", position)
    depth = _read_block(blob, raw.get("depth") or {}, intr.width * intr.height, position, "depth")
    depth = depth.reshape(intr.height, intr.width).copy()
    if not np.all(np.isfinite(depth)):
        raise ScanFormatError("depth holds non-finite values", position)

    detections = []
    for d_index, raw_det in enumerate(raw.get("detections", [])):
        what = f"detection {d_index}"
        embedding = _read_block(blob, raw_det.get("embedding") or {}, manifest.embedding_dim, position, what)
        try:
            mask = decode_rle(raw_det["mask"]) if raw_det.get("mask") is not None else None
            if mask is not None and mask.shape != (intr.height, intr.width):
                raise ScanFormatError(f"{what} mask is {mask.shape}, image is {(intr.height, intr.width)}", position)
            detections.append(Detection(
                label=raw_det["label"],
                bbox=tuple(raw_det["bbox"]),
                mask=mask,
                embedding=embedding.astype(np.float64),
                confidence=raw_det["confidence"],
            ))
        except ScanFormatError:
            raise
        except (KeyError, TypeError, ValueError, InvalidInputError) as e:
            raise ScanFormatError(f"{what} is invalid: {e}", position)
    return PosedFrame(
        index=index,
        intrinsics=intr,
        pose=pose,
        depth=depth,
        color=raw.get("color"),
        detections=detections,
    )


def load_scan(directory: Union[str, Path]) -> ScanArchive:
    directory = Path(directory)
    try:
        raw = json.loads((directory / MANIFEST_NAME).read_text(encoding="utf-8"))
        blob = (directory / PAYLOAD_NAME).read_bytes()
    except FileNotFoundError as e:
        raise ScanFormatError(f"scan archive is incomplete: {e.filename} is missing")
    except json.JSONDecodeError as e:
        raise ScanFormatError(f"manifest is not valid JSON: {e}")

    version = raw.get("format_version")
    if version != SCAN_FORMAT_VERSION:
        raise ScanFormatError(f"unsupported scan format version {version}")
    try:
        manifest = ScanManifest(
            format_version=version,
            frame_count=raw["frame_count"],
            intrinsics=CameraIntrinsics(**raw["intrinsics"]),
            embedding_dim=raw["embedding_dim"],
            floor_z=raw.get("floor_z", 0.0),
        )
    except (KeyError, TypeError, ValidationError) as e:
        raise ScanFormatError(f"invalid manifest: {e}")

    raw_frames = raw.get("frames", [])
    if len(raw_frames) != manifest.frame_count:
        raise ScanFormatError(f"manifest declares {manifest.frame_count} frames but lists {len(raw_frames)}")
    frames = [_parse_frame(raw_frame, manifest, blob, i) for i, raw_frame in enumerate(raw_frames)]
    logger.info(f"Loaded scan with {len(frames)} frames from {directory}")
    return ScanArchive(manifest=manifest, frames=frames)


def build_map(
    scan: ScanArchive,
    voxel_size: float = DEFAULT_VOXEL_SIZE,
    floor_height: float = 0.10,
    ceiling_height: float = 1.80,
    cell_size: float = DEFAULT_CELL_SIZE,
    inflation_radius: float = DEFAULT_INFLATION_RADIUS,
    workers: int = 1,
) -> Tuple[VoxelMap, ObstacleGrid]:
    """Finalized voxel map and inflated obstacle grid for a scan"""
    voxel_map = VoxelMap(voxel_size, scan.manifest.embedding_dim)
    floor_z = scan.manifest.floor_z
    if workers > 1:
        # back-projection runs in parallel, accumulation stays in frame order
        with ThreadPoolExecutor(max_workers=workers) as pool:
            contributions = list(pool.map(lambda f: voxel_map.prepare_frame(f, floor_z), scan.frames))
        for contribution in contributions:
            voxel_map.merge(contribution)
    else:
        for frame in scan.frames:
            voxel_map.ingest_frame(frame, floor_z)
    voxel_map.finalize()
    grid = inflate(build_grid(voxel_map, floor_height, ceiling_height, cell_size), inflation_radius)
    return voxel_map, grid
