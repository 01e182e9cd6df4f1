"""
Language-conditioned grasp selection over externally generated proposals.
"""

import io
import logging
import math
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
import pandas as pd

from app.errors import InvalidInputError, NoGraspError
from app.models.geometry import CameraIntrinsics, Pose
from app.models.grasp import (
    PREGRASP_OFFSETS,
    GraspProposal,
    GraspRanking,
    GraspTrajectory,
    RankedGrasp,
)
from app.utils.geometry import project_points

logger = logging.getLogger(__name__)

PROPOSAL_COLUMNS = ["px", "py", "pz", "ax", "ay", "az", "width", "height", "depth", "score"]
FLOOR_NORMAL = (0.0, 0.0, 1.0)


def filter_by_mask(
    proposals: Sequence[GraspProposal],
    mask: np.ndarray,
    intr: CameraIntrinsics,
    pose: Pose,
) -> List[GraspProposal]:
    """Keep proposals whose grasp point projects onto a set mask pixel, in input order"""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (intr.height, intr.width):
        raise InvalidInputError(f"mask shape {mask.shape} does not match camera {(intr.height, intr.width)}")
    if not proposals:
        return []
    points = np.array([p.point for p in proposals], dtype=np.float64)
    pixels, in_view = project_points(points, intr, pose)
    cols = np.floor(pixels[:, 0] + 0.5).astype(np.int64)
    rows = np.floor(pixels[:, 1] + 0.5).astype(np.int64)
    keep = in_view.copy()
    keep[in_view] = mask[rows[in_view], cols[in_view]]
    kept = [p for p, k in zip(proposals, keep) if k]
    logger.info(f"{len(kept)} of {len(proposals)} grasp proposals fall inside the object mask")
    return kept


def approach_tilt(approach, floor_normal=FLOOR_NORMAL) -> float:
    """Deviation of the approach vector from the horizontal plane, radians in [0, pi/2]"""
    a = np.asarray(approach, dtype=np.float64)
    n = np.asarray(floor_normal, dtype=np.float64)
    cosine = float(np.clip(a @ n / (np.linalg.norm(a) * np.linalg.norm(n)), -1.0, 1.0))
    return abs(math.pi / 2 - math.acos(cosine))


def heuristic_score(graspness: float, theta: float) -> float:
    return graspness - theta ** 4 / 10.0


def rank_grasps(proposals: Sequence[GraspProposal], floor_normal=FLOOR_NORMAL) -> GraspRanking:
    """Rank by graspness minus a quartic tilt penalty; ties keep input order"""
    if not proposals:
        raise NoGraspError("no grasp proposals to rank")
    ranked = []
    for i, proposal in enumerate(proposals):
        theta = approach_tilt(proposal.approach, floor_normal)
        ranked.append(RankedGrasp(
            proposal=proposal,
            theta=theta,
            heuristic_score=heuristic_score(proposal.score, theta),
            input_index=i,
        ))
    ranked.sort(key=lambda r: (-r.heuristic_score, r.input_index))
    return GraspRanking(best=ranked[0], ranking=ranked)


def pregrasp_trajectory(grasp: GraspProposal) -> GraspTrajectory:
    p = np.asarray(grasp.point, dtype=np.float64)
    a = np.asarray(grasp.approach, dtype=np.float64)
    if not np.all(np.isfinite(a)) or abs(np.linalg.norm(a) - 1.0) > 1e-6:
        raise InvalidInputError("approach vector must have unit norm")
    waypoints = []
    for k in PREGRASP_OFFSETS:
        w = p - k * a
        waypoints.append((float(w[0]), float(w[1]), float(w[2])))
    return GraspTrajectory(waypoints=waypoints)


def read_proposals(source: Union[str, Path, io.StringIO]) -> List[GraspProposal]:
    """Parse line-delimited 'px py pz ax ay az width height depth score' records"""
    try:
        frame = pd.read_csv(
            source,
            sep=r"[\s,]+",
            engine="python",
            header=None,
            names=PROPOSAL_COLUMNS,
            comment="#",
            dtype=np.float64,
        )
    except pd.errors.EmptyDataError:
        return []
    except ValueError as e:
        raise InvalidInputError(f"malformed grasp proposal file: {e}")
    if frame.isna().any().any():
        raise InvalidInputError("grasp proposal records must have 10 numeric fields")
    proposals = []
    for line_no, row in enumerate(frame.itertuples(index=False), start=1):
        try:
            proposals.append(GraspProposal(
                point=(row.px, row.py, row.pz),
                approach=(row.ax, row.ay, row.az),
                width=row.width,
                height=row.height,
                depth=row.depth,
                score=row.score,
            ))
        except ValueError as e:
            raise InvalidInputError(f"grasp record {line_no}: {e}")
    return proposals


def format_proposals(proposals: Sequence[GraspProposal]) -> str:
    lines = []
    for p in proposals:
        fields = [*p.point, *p.approach, p.width, p.height, p.depth, p.score]
        lines.append(" ".join(repr(float(v)) for v in fields))
    return "".join(line + "\n" for line in lines)
