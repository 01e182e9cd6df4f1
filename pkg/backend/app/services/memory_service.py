"""
Semantic voxel memory.

Detections are back-projected into the world, voxelized, and each voxel keeps
a confidence-weighted sum of detection embeddings plus the confidence mass.
Finalizing turns the sums into weighted averages (not renormalized) and
freezes the map. Language queries rank voxels by raw dot product.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from app.errors import EmptyMapError, InvalidInputError, MapStateError, ScanFormatError
from app.models.scan import PosedFrame
from app.models.semantic import QueryResult
from app.utils.geometry import backproject

logger = logging.getLogger(__name__)

MAP_MAGIC = b"VXMP"
MAP_FORMAT_VERSION = 1
DEFAULT_VOXEL_SIZE = 0.05

# voxel indices are packed into one int64 (21 bits per axis); packed order is
# lexicographic index order
_INDEX_BITS = 21
_INDEX_BIAS = 1 << (_INDEX_BITS - 1)
_INDEX_MASK = (1 << _INDEX_BITS) - 1

_HEADER_DTYPE = np.dtype([
    ("magic", "S4"),
    ("version", "<u4"),
    ("voxel_size", "<f8"),
    ("dim", "<u4"),
    ("entries", "<u8"),
    ("occupancy", "<u8"),
])


def voxel_indices(points: np.ndarray, voxel_size: float) -> np.ndarray:
    """floor(p / voxel_size) per axis for an N x 3 array"""
    if voxel_size <= 0:
        raise InvalidInputError("voxel_size must be positive")
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if not np.all(np.isfinite(points)):
        raise InvalidInputError("points must be finite")
    return np.floor(points / voxel_size).astype(np.int64)


def voxel_of(point, voxel_size: float = DEFAULT_VOXEL_SIZE) -> Tuple[int, int, int]:
    i, j, k = voxel_indices(np.asarray(point, dtype=np.float64).reshape(1, 3), voxel_size)[0]
    return int(i), int(j), int(k)


def pack_keys(indices: np.ndarray) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64).reshape(-1, 3)
    if indices.size and (indices.min() < -_INDEX_BIAS or indices.max() >= _INDEX_BIAS):
        raise InvalidInputError("voxel index outside the addressable range")
    biased = indices + _INDEX_BIAS
    return (biased[:, 0] << (2 * _INDEX_BITS)) | (biased[:, 1] << _INDEX_BITS) | biased[:, 2]


def unpack_keys(keys: np.ndarray) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64)
    return np.stack([
        (keys >> (2 * _INDEX_BITS)) & _INDEX_MASK,
        (keys >> _INDEX_BITS) & _INDEX_MASK,
        keys & _INDEX_MASK,
    ], axis=-1) - _INDEX_BIAS


@dataclass
class FrameContribution:
    """What one frame adds to the map; computing it touches no shared state"""

    keys: np.ndarray
    sums: np.ndarray
    masses: np.ndarray
    occupancy_keys: np.ndarray


def _reduce_by_key(keys: np.ndarray, *columns: np.ndarray):
    order = np.argsort(keys, kind="stable")
    keys = keys[order]
    starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]]) if keys.size else np.zeros(0, dtype=np.int64)
    reduced = [np.add.reduceat(column[order], starts, axis=0) if keys.size else column for column in columns]
    return (keys[starts] if keys.size else keys, *reduced)


class VoxelMap:
    """Sparse voxel index -> (confidence-weighted embedding sum, confidence mass)"""

    def __init__(self, voxel_size: float = DEFAULT_VOXEL_SIZE, embedding_dim: Optional[int] = None):
        if voxel_size <= 0:
            raise InvalidInputError("voxel_size must be positive")
        self.voxel_size = float(voxel_size)
        self.embedding_dim = embedding_dim
        self.finalized = False
        self._keys = np.zeros(0, dtype=np.int64)
        self._sums = np.zeros((0, embedding_dim or 0), dtype=np.float64)
        self._masses = np.zeros(0, dtype=np.float64)
        self._vectors: Optional[np.ndarray] = None
        self._vectors64: Optional[np.ndarray] = None
        self._occupancy = np.zeros(0, dtype=np.int64)
        self._pending: List[FrameContribution] = []

    # ---- build phase -------------------------------------------------

    def _check_dim(self, dim: int) -> None:
        if self.embedding_dim is None:
            self.embedding_dim = dim
            self._sums = np.zeros((0, dim), dtype=np.float64)
        elif dim != self.embedding_dim:
            raise InvalidInputError(f"embedding has dimension {dim}, map expects {self.embedding_dim}")

    def prepare_frame(self, frame: PosedFrame, floor_z: float = 0.0) -> FrameContribution:
        """Back-project and voxelize one frame without touching the map"""
        height, width = frame.intrinsics.height, frame.intrinsics.width
        dim = self.embedding_dim
        key_parts, sum_parts, mass_parts = [], [], []
        for detection in frame.detections:
            if dim is None:
                dim = detection.embedding.size
            elif detection.embedding.size != dim:
                raise InvalidInputError(
                    f"detection '{detection.label}' has embedding dimension {detection.embedding.size}, expected {dim}"
                )
            points = backproject(frame.depth, frame.intrinsics, frame.pose,
                                 detection.pixel_mask(height, width))
            if points.shape[0] == 0:
                continue
            points[:, 2] -= floor_z
            keys, counts = np.unique(pack_keys(voxel_indices(points, self.voxel_size)), return_counts=True)
            weights = counts.astype(np.float64) * detection.confidence
            key_parts.append(keys)
            sum_parts.append(weights[:, None] * detection.embedding[None, :])
            mass_parts.append(weights)

        cloud = backproject(frame.depth, frame.intrinsics, frame.pose)
        cloud[:, 2] -= floor_z
        occupancy = np.unique(pack_keys(voxel_indices(cloud, self.voxel_size)))

        if not key_parts:
            return FrameContribution(
                keys=np.zeros(0, dtype=np.int64),
                sums=np.zeros((0, dim or 0), dtype=np.float64),
                masses=np.zeros(0, dtype=np.float64),
                occupancy_keys=occupancy,
            )
        return FrameContribution(
            keys=np.concatenate(key_parts),
            sums=np.concatenate(sum_parts),
            masses=np.concatenate(mass_parts),
            occupancy_keys=occupancy,
        )

    def merge(self, contribution: FrameContribution) -> "VoxelMap":
        if self.finalized:
            raise MapStateError("cannot ingest into a finalized map")
        if contribution.keys.size:
            self._check_dim(contribution.sums.shape[1])
        self._pending.append(contribution)
        return self

    def ingest_frame(self, frame: PosedFrame, floor_z: float = 0.0) -> "VoxelMap":
        if self.finalized:
            raise MapStateError("cannot ingest into a finalized map")
        return self.merge(self.prepare_frame(frame, floor_z))

    def add_points(self, points: np.ndarray, embedding: np.ndarray, confidence: float) -> "VoxelMap":
        """Accumulate one embedding over world points (one detection's back-projection)"""
        if self.finalized:
            raise MapStateError("cannot ingest into a finalized map")
        embedding = np.asarray(embedding, dtype=np.float64).reshape(-1)
        self._check_dim(embedding.size)
        if confidence <= 0:
            raise InvalidInputError("confidence must be positive")
        keys, counts = np.unique(pack_keys(voxel_indices(points, self.voxel_size)), return_counts=True)
        weights = counts.astype(np.float64) * confidence
        self._pending.append(FrameContribution(
            keys=keys,
            sums=weights[:, None] * embedding[None, :],
            masses=weights,
            occupancy_keys=np.zeros(0, dtype=np.int64),
        ))
        return self

    def add_occupancy(self, points: np.ndarray) -> "VoxelMap":
        if self.finalized:
            raise MapStateError("cannot ingest into a finalized map")
        keys = np.unique(pack_keys(voxel_indices(points, self.voxel_size)))
        dim = self.embedding_dim or 0
        self._pending.append(FrameContribution(
            keys=np.zeros(0, dtype=np.int64),
            sums=np.zeros((0, dim), dtype=np.float64),
            masses=np.zeros(0, dtype=np.float64),
            occupancy_keys=keys,
        ))
        return self

    def _consolidate(self) -> None:
        if not self._pending:
            return
        self._occupancy = np.unique(np.concatenate([self._occupancy] + [p.occupancy_keys for p in self._pending]))
        if self.embedding_dim is None:
            # no detection has fixed the dimension yet, so only occupancy arrived
            self._pending = []
            return
        dim = self.embedding_dim
        keys = np.concatenate([self._keys] + [p.keys for p in self._pending])
        sums = np.concatenate([self._sums.reshape(-1, dim)] + [p.sums.reshape(-1, dim) for p in self._pending])
        masses = np.concatenate([self._masses] + [p.masses for p in self._pending])
        self._keys, self._sums, self._masses = _reduce_by_key(keys, sums, masses)
        self._pending = []

    def accumulated(self, index: Tuple[int, int, int]) -> Tuple[np.ndarray, float]:
        """(embedding sum, confidence mass) of a voxel before finalize"""
        if self.finalized:
            raise MapStateError("sums are discarded once the map is finalized")
        self._consolidate()
        row = self._row(index)
        return self._sums[row].copy(), float(self._masses[row])

    def finalize(self) -> "VoxelMap":
        if self.finalized:
            return self
        self._consolidate()
        if self._keys.size == 0:
            raise EmptyMapError("no detections were ingested; nothing to finalize")
        self._vectors = (self._sums / self._masses[:, None]).astype(np.float32)
        self._vectors64 = self._vectors.astype(np.float64)
        self._masses = self._masses.astype(np.float32)
        self._sums = np.zeros((0, self.embedding_dim or 0), dtype=np.float64)
        self.finalized = True
        logger.info(f"Finalized voxel map with {self._keys.size} semantic voxels "
                    f"and {self._occupancy.size} occupancy voxels")
        return self

    # ---- read access -------------------------------------------------

    def _row(self, index: Tuple[int, int, int]) -> int:
        key = pack_keys(np.asarray(index, dtype=np.int64).reshape(1, 3))[0]
        row = int(np.searchsorted(self._keys, key))
        if row >= self._keys.size or self._keys[row] != key:
            raise KeyError(f"voxel {tuple(index)} is not in the map")
        return row

    def __len__(self) -> int:
        self._consolidate()
        return int(self._keys.size)

    def __contains__(self, index) -> bool:
        self._consolidate()
        try:
            self._row(index)
        except KeyError:
            return False
        return True

    @property
    def indices(self) -> np.ndarray:
        """Voxel indices in lexicographic order"""
        self._consolidate()
        return unpack_keys(self._keys)

    @property
    def centers(self) -> np.ndarray:
        return (self.indices + 0.5) * self.voxel_size

    @property
    def vectors(self) -> np.ndarray:
        self._require_finalized()
        return self._vectors

    @property
    def masses(self) -> np.ndarray:
        self._consolidate()
        return self._masses

    def vector(self, index: Tuple[int, int, int]) -> np.ndarray:
        self._require_finalized()
        return self._vectors[self._row(index)]

    def occupied_indices(self) -> np.ndarray:
        """Every voxel holding geometry: semantic entries and raw depth occupancy"""
        self._consolidate()
        return unpack_keys(np.union1d(self._keys, self._occupancy))

    def _require_finalized(self) -> None:
        if not self.finalized:
            raise MapStateError("map must be finalized first")

    # ---- queries -----------------------------------------------------

    def _check_query(self, embedding) -> np.ndarray:
        self._require_finalized()
        if self._keys.size == 0:
            raise EmptyMapError("map has no voxels")
        query = np.asarray(embedding, dtype=np.float64).reshape(-1)
        if query.size != self.embedding_dim:
            raise InvalidInputError(f"query has dimension {query.size}, map has {self.embedding_dim}")
        if abs(np.linalg.norm(query) - 1.0) > 1e-6:
            raise InvalidInputError("query embedding must have unit norm")
        return query

    def _ranked(self, query: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
        scores = self._vectors64 @ query
        # stable sort keeps lexicographic voxel order among equal scores
        order = np.argsort(-scores, kind="stable")[:k]
        return order, scores[order]

    def _result(self, row: int, score: float) -> QueryResult:
        index = unpack_keys(self._keys[row:row + 1])[0]
        center = (index + 0.5) * self.voxel_size
        return QueryResult(
            voxel_index=(int(index[0]), int(index[1]), int(index[2])),
            position=(float(center[0]), float(center[1]), float(center[2])),
            score=float(score),
        )

    def query(self, embedding, k: int = 1) -> List[QueryResult]:
        """Top-k voxels by dot product, best first"""
        if k < 1:
            raise InvalidInputError("k must be at least 1")
        query = self._check_query(embedding)
        rows, scores = self._ranked(query, k)
        return [self._result(int(r), float(s)) for r, s in zip(rows, scores)]

    def query_near(self, embedding_a, embedding_b, top_a: int = 10, top_b: int = 50) -> QueryResult:
        """'A near B': the top-A voxel closest to any top-B voxel"""
        if top_a < 1 or top_b < 1:
            raise InvalidInputError("candidate counts must be at least 1")
        query_a = self._check_query(embedding_a)
        query_b = self._check_query(embedding_b)
        rows_a, scores_a = self._ranked(query_a, top_a)
        rows_b, _ = self._ranked(query_b, top_b)
        centers = (unpack_keys(self._keys) + 0.5) * self.voxel_size
        distances = np.linalg.norm(centers[rows_a][:, None, :] - centers[rows_b][None, :, :], axis=-1)
        # row-major argmin: ties resolve by (A rank, B rank)
        best = int(np.argmin(distances))
        a_rank = best // distances.shape[1]
        logger.debug(f"Near query picked A rank {a_rank} at distance {distances.flat[best]:.3f} m")
        return self._result(int(rows_a[a_rank]), float(scores_a[a_rank]))

    # ---- persistence -------------------------------------------------

    def _record_dtype(self) -> np.dtype:
        return np.dtype([("index", "<i8", (3,)), ("vector", "<f4", (self.embedding_dim,)), ("mass", "<f4")])

    def to_bytes(self) -> bytes:
        self._require_finalized()
        header = np.zeros(1, dtype=_HEADER_DTYPE)
        header["magic"] = MAP_MAGIC
        header["version"] = MAP_FORMAT_VERSION
        header["voxel_size"] = self.voxel_size
        header["dim"] = self.embedding_dim
        header["entries"] = self._keys.size
        header["occupancy"] = self._occupancy.size
        records = np.zeros(self._keys.size, dtype=self._record_dtype())
        records["index"] = unpack_keys(self._keys)
        records["vector"] = self._vectors
        records["mass"] = self._masses
        occupancy = unpack_keys(self._occupancy).astype("<i8")
        return header.tobytes() + records.tobytes() + occupancy.tobytes()

    @classmethod
    def from_bytes(cls, payload: bytes) -> "VoxelMap":
        if len(payload) < _HEADER_DTYPE.itemsize:
            raise ScanFormatError("map file is shorter than its header")
        header = np.frombuffer(payload, dtype=_HEADER_DTYPE, count=1)[0]
        if bytes(header["magic"]) != MAP_MAGIC:
            raise ScanFormatError("not a voxel map file")
        if int(header["version"]) != MAP_FORMAT_VERSION:
            raise ScanFormatError(f"unsupported map format version {int(header['version'])}")
        voxel_map = cls(float(header["voxel_size"]), int(header["dim"]))
        entries, occupancy = int(header["entries"]), int(header["occupancy"])
        record_dtype = voxel_map._record_dtype()
        offset = _HEADER_DTYPE.itemsize
        expected = offset + entries * record_dtype.itemsize + occupancy * 24
        if len(payload) != expected:
            raise ScanFormatError(f"map file has {len(payload)} bytes, header implies {expected}")
        records = (np.frombuffer(payload, dtype=record_dtype, count=entries, offset=offset)
                   if entries else np.zeros(0, dtype=record_dtype))
        offset += entries * record_dtype.itemsize
        occupancy_indices = (np.frombuffer(payload, dtype="<i8", count=occupancy * 3, offset=offset).reshape(-1, 3)
                             if occupancy else np.zeros((0, 3), dtype=np.int64))
        voxel_map._keys = pack_keys(records["index"])
        voxel_map._vectors = np.array(records["vector"], dtype=np.float32).reshape(entries, -1)
        voxel_map._vectors64 = voxel_map._vectors.astype(np.float64)
        voxel_map._masses = np.array(records["mass"], dtype=np.float32)
        voxel_map._occupancy = pack_keys(occupancy_indices)
        if entries > 1 and np.any(np.diff(voxel_map._keys) <= 0):
            raise ScanFormatError("map entries are not sorted by voxel index")
        voxel_map.finalized = True
        return voxel_map

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_bytes(self.to_bytes())
        logger.info(f"Saved voxel map ({len(self)} voxels) to {path}")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "VoxelMap":
        return cls.from_bytes(Path(path).read_bytes())


def ply_points(voxel_map: VoxelMap) -> str:
    """ASCII PLY of semantic voxel centers with their confidence mass"""
    centers = voxel_map.centers
    masses = voxel_map.masses
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {centers.shape[0]}",
        "property float x",
        "property float y",
        "property float z",
        "property float mass",
        "end_header",
    ]
    lines.extend(f"{x:.6f} {y:.6f} {z:.6f} {m:.6f}" for (x, y, z), m in zip(centers.tolist(), masses.tolist()))
    return "\n".join(lines) + "\n"
