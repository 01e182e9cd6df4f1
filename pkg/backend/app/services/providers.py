"""
Model-facing provider interfaces and their file-backed implementations.

The pipeline only talks to these protocols: text embeddings (CLIP's role),
head-camera observations, open-vocabulary segmentation (LangSam's role) and
grasp generation (AnyGrasp's role). Synthetic implementations backed by a
ray-cast scene live in scene_generator; the precomputed ones here replay
outputs produced offline by external model tooling.
"""

import hashlib
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Protocol, Tuple, Union, runtime_checkable

import numpy as np
from pydantic import BaseModel, ConfigDict

from app.errors import InvalidInputError
from app.models.geometry import CameraIntrinsics, Pose
from app.models.grasp import GraspProposal
from app.models.scan import ScanArchive
from app.services.grasp_service import read_proposals

logger = logging.getLogger(__name__)

_TOKEN = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> List[str]:
    return _TOKEN.findall(text.lower())


class CameraView(BaseModel):
    """One head-camera RGB-D capture (color omitted: no consumer needs it)"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    intrinsics: CameraIntrinsics
    pose: Pose
    depth: np.ndarray
    frame_index: Optional[int] = None


@runtime_checkable
class EmbeddingProvider(Protocol):
    dim: int

    def embed_text(self, text: str) -> np.ndarray:
        ...


@runtime_checkable
class ObservationProvider(Protocol):
    def capture(self, position: Tuple[float, float], heading: Tuple[float, float],
                look_at: Tuple[float, float, float]) -> CameraView:
        ...


@runtime_checkable
class SegmentationProvider(Protocol):
    def segment(self, view: CameraView, text: str) -> Optional[np.ndarray]:
        ...


@runtime_checkable
class GraspProvider(Protocol):
    def propose(self, view: CameraView) -> List[GraspProposal]:
        ...


@dataclass
class Providers:
    embedder: EmbeddingProvider
    observer: ObservationProvider
    segmenter: SegmentationProvider
    grasper: GraspProvider


def _normalize(vector: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vector)
    if norm == 0 or not np.isfinite(norm):
        raise InvalidInputError("cannot normalize a zero embedding")
    return vector / norm


class SyntheticVocabulary:
    """Seeded word vectors: the first `dim` words are exactly orthonormal"""

    def __init__(self, words: Iterable[str], dim: int = 64, seed: int = 0):
        if dim < 2:
            raise InvalidInputError("embedding dimension must be at least 2")
        self.dim = int(dim)
        self.seed = int(seed)
        self.words = sorted({token for word in words for token in tokenize(word)})
        rng = np.random.default_rng(self.seed)
        basis, _ = np.linalg.qr(rng.standard_normal((self.dim, self.dim)))
        self._vectors: Dict[str, np.ndarray] = {}
        for i, word in enumerate(self.words):
            if i < self.dim:
                self._vectors[word] = basis[:, i].copy()
            else:
                self._vectors[word] = self._hashed_vector(word)
        if len(self.words) > self.dim:
            logger.warning(f"Vocabulary has {len(self.words)} words for dimension {self.dim}; "
                           f"{len(self.words) - self.dim} words are only approximately orthogonal")

    def _hashed_vector(self, word: str) -> np.ndarray:
        digest = hashlib.sha256(f"{self.seed}:{word}".encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        return _normalize(rng.standard_normal(self.dim))

    def word_vector(self, word: str) -> np.ndarray:
        vector = self._vectors.get(word)
        return vector if vector is not None else self._hashed_vector(word)

    def to_dict(self) -> Dict[str, object]:
        return {"words": self.words, "dim": self.dim, "seed": self.seed}

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "SyntheticVocabulary":
        return cls(data["words"], int(data["dim"]), int(data["seed"]))


def embed_text_synthetic(vocab: SyntheticVocabulary, text: str) -> np.ndarray:
    """Normalized sum of the word vectors of a phrase"""
    tokens = tokenize(text or "")
    if not tokens:
        raise InvalidInputError("text to embed is empty")
    return _normalize(np.sum([vocab.word_vector(token) for token in tokens], axis=0))


class SyntheticEmbeddingProvider:
    def __init__(self, vocab: SyntheticVocabulary):
        self.vocab = vocab
        self.dim = vocab.dim

    def embed_text(self, text: str) -> np.ndarray:
        return embed_text_synthetic(self.vocab, text)


class PrecomputedEmbeddingProvider:
    """Text embeddings computed offline: JSON {"dim": d, "embeddings": {text: [...]}}"""

    def __init__(self, embeddings: Dict[str, List[float]], dim: Optional[int] = None):
        self._table = {text.strip().lower(): _normalize(np.asarray(vec, dtype=np.float64))
                       for text, vec in embeddings.items()}
        dims = {vec.size for vec in self._table.values()}
        if dim is None:
            if len(dims) != 1:
                raise InvalidInputError("precomputed embeddings must share one dimension")
            dim = dims.pop()
        elif dims - {dim}:
            raise InvalidInputError(f"precomputed embeddings do not all have dimension {dim}")
        self.dim = int(dim)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "PrecomputedEmbeddingProvider":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(data["embeddings"], data.get("dim"))

    def embed_text(self, text: str) -> np.ndarray:
        key = (text or "").strip().lower()
        if key not in self._table:
            raise InvalidInputError(f"no precomputed embedding for '{text}'")
        return self._table[key]


class PrecomputedObservationProvider:
    """Replays recorded head-camera frames; returns the one taken nearest the requested spot"""

    def __init__(self, views: ScanArchive):
        if not views.frames:
            raise InvalidInputError("observation archive has no frames")
        self.views = views

    def capture(self, position, heading, look_at) -> CameraView:
        # nearest camera position, earliest frame on ties
        _, index = min(
            (float(np.hypot(f.pose.translation[0] - position[0], f.pose.translation[1] - position[1])), i)
            for i, f in enumerate(self.views.frames)
        )
        frame = self.views.frames[index]
        return CameraView(intrinsics=frame.intrinsics, pose=frame.pose, depth=frame.depth, frame_index=index)


class PrecomputedSegmentationProvider:
    """Masks from the detections recorded with each replayed frame, matched on their stored embeddings"""

    def __init__(self, views: ScanArchive, embedder: EmbeddingProvider, min_similarity: float = 0.5):
        self.views = views
        self.embedder = embedder
        self.min_similarity = min_similarity

    def segment(self, view: CameraView, text: str) -> Optional[np.ndarray]:
        if view.frame_index is None or not 0 <= view.frame_index < len(self.views.frames):
            return None
        query = self.embedder.embed_text(text)
        best, best_score = None, self.min_similarity
        for det in self.views.frames[view.frame_index].detections:
            if det.embedding.size != query.size:
                raise InvalidInputError(
                    f"detection '{det.label}' has embedding dimension {det.embedding.size}, query has {query.size}"
                )
            similarity = float(det.embedding @ query)
            if similarity > best_score:
                best, best_score = det, similarity
        if best is None:
            return None
        return best.pixel_mask(view.intrinsics.height, view.intrinsics.width)


class PrecomputedGraspProvider:
    """Grasp proposal files per replayed frame: grasps_<frame>.txt, or one shared file"""

    def __init__(self, source: Union[str, Path]):
        self.source = Path(source)

    def propose(self, view: CameraView) -> List[GraspProposal]:
        if self.source.is_file():
            return read_proposals(self.source)
        path = self.source / f"grasps_{view.frame_index}.txt"
        if not path.exists():
            logger.warning(f"No grasp proposals recorded for frame {view.frame_index}")
            return []
        return read_proposals(path)


def precomputed_providers(
    embeddings_path: Union[str, Path],
    views: ScanArchive,
    grasps_source: Union[str, Path],
    min_similarity: float = 0.5,
) -> Providers:
    """Replay providers over offline model outputs"""
    embedder = PrecomputedEmbeddingProvider.from_file(embeddings_path)
    return Providers(
        embedder=embedder,
        observer=PrecomputedObservationProvider(views),
        segmenter=PrecomputedSegmentationProvider(views, embedder, min_similarity),
        grasper=PrecomputedGraspProvider(grasps_source),
    )
