import io
import math

import numpy as np
import pytest

from app.errors import InvalidInputError, NoGraspError
from app.models.geometry import CameraIntrinsics
from app.models.grasp import GraspProposal
from app.services.grasp_service import (
    approach_tilt,
    filter_by_mask,
    format_proposals,
    heuristic_score,
    pregrasp_trajectory,
    rank_grasps,
    read_proposals,
)
from app.utils.geometry import look_at

HORIZONTAL = (1.0, 0.0, 0.0)
DOWN = (0.0, 0.0, -1.0)


def _proposal(point=(0.0, 0.0, 0.0), approach=HORIZONTAL, score=0.5) -> GraspProposal:
    return GraspProposal(point=point, approach=approach, width=0.05, height=0.02, depth=0.03, score=score)


def _random_direction(rng):
    v = rng.standard_normal(3)
    return tuple(v / np.linalg.norm(v))


def _in_mask(point, mask, intr, pose) -> bool:
    c = pose.rotation.T @ (np.asarray(point) - pose.translation)
    if c[2] <= 0:
        return False
    col = math.floor(intr.fx * c[0] / c[2] + intr.cx + 0.5)
    row = math.floor(intr.fy * c[1] / c[2] + intr.cy + 0.5)
    return 0 <= col < intr.width and 0 <= row < intr.height and bool(mask[row, col])


@pytest.mark.parametrize("approach,expected", [
    (HORIZONTAL, 0.0),
    ((0.0, -1.0, 0.0), 0.0),
    (DOWN, math.pi / 2),
    ((0.0, 0.0, 1.0), math.pi / 2),
    ((math.sqrt(0.5), 0.0, -math.sqrt(0.5)), math.pi / 4),
])
def test_approach_tilt(approach, expected):
    assert approach_tilt(approach) == pytest.approx(expected, abs=1e-12)


def test_heuristic_spot_values():
    assert heuristic_score(0.9, 0.0) == 0.9
    assert heuristic_score(0.9, math.pi / 2) == pytest.approx(0.29119, abs=1e-5)
    assert heuristic_score(0.9, math.pi / 2) == pytest.approx(0.9 - (math.pi / 2) ** 4 / 10, abs=1e-9)


def test_penalty_grows_with_tilt():
    thetas = np.linspace(0.0, math.pi / 2, 50)
    scores = [heuristic_score(0.7, t) for t in thetas]
    assert all(a >= b for a, b in zip(scores, scores[1:]))


def test_horizontal_beats_vertical_at_equal_graspness(rng):
    for _ in range(100):
        graspness = float(rng.uniform(0.0, 1.0))
        pair = [_proposal(approach=DOWN, score=graspness),
                _proposal(approach=HORIZONTAL, score=graspness)]
        if rng.random() < 0.5:
            pair.reverse()
        best = rank_grasps(pair).best
        assert best.proposal.approach == HORIZONTAL
        assert best.theta == 0.0


def test_ranking_order_and_ties():
    proposals = [
        _proposal(approach=DOWN, score=0.95),
        _proposal(score=0.4),
        _proposal(score=0.6),
        _proposal(score=0.6),
    ]
    ranking = rank_grasps(proposals)
    assert [r.input_index for r in ranking.ranking] == [2, 3, 1, 0]
    assert ranking.best.input_index == 2
    assert ranking.ranking[-1].heuristic_score == pytest.approx(0.95 - (math.pi / 2) ** 4 / 10)


def test_ranking_nothing_is_an_error():
    with pytest.raises(NoGraspError):
        rank_grasps([])


def test_filter_matches_per_proposal_projection(rng):
    intr = CameraIntrinsics(fx=120.0, fy=120.0, cx=40.0, cy=30.0, width=80, height=60)
    pose = look_at((0.0, 0.0, 1.5), (1.5, 0.2, 0.5))
    mask = np.zeros((60, 80), dtype=bool)
    mask[15:45, 20:60] = rng.random((30, 40)) < 0.7
    proposals = [
        _proposal(point=tuple(rng.uniform([-0.5, -1.5, -0.5], [3.0, 1.5, 2.0])), approach=_random_direction(rng))
        for _ in range(1000)
    ]
    kept = filter_by_mask(proposals, mask, intr, pose)
    expected = [p for p in proposals if _in_mask(p.point, mask, intr, pose)]
    assert kept == expected
    assert 0 < len(kept) < len(proposals)


def test_filter_edge_cases(intrinsics, identity_pose):
    mask = np.ones((48, 64), dtype=bool)
    assert filter_by_mask([], mask, intrinsics, identity_pose) == []
    behind = _proposal(point=(0.0, 0.0, -1.0))
    ahead = _proposal(point=(0.0, 0.0, 1.0))
    assert filter_by_mask([behind, ahead], mask, intrinsics, identity_pose) == [ahead]
    with pytest.raises(InvalidInputError):
        filter_by_mask([ahead], np.ones((10, 10), dtype=bool), intrinsics, identity_pose)


def test_pregrasp_waypoints():
    trajectory = pregrasp_trajectory(_proposal(point=(1.0, 0.0, 0.3), approach=HORIZONTAL))
    assert [w[0] for w in trajectory.waypoints] == pytest.approx([0.8, 0.92, 0.96, 1.0])
    assert all(w[1:] == (0.0, 0.3) for w in trajectory.waypoints)
    assert trajectory.terminal_action == "close_gripper"


def test_pregrasp_offsets_along_any_approach(rng):
    for _ in range(20):
        approach = np.array(_random_direction(rng))
        point = rng.uniform(-1, 1, 3)
        waypoints = np.array(pregrasp_trajectory(_proposal(tuple(point), tuple(approach))).waypoints)
        offsets = (point - waypoints) @ approach
        np.testing.assert_allclose(offsets, [0.2, 0.08, 0.04, 0.0], atol=1e-12)


def test_proposal_rejects_non_unit_approach():
    with pytest.raises(ValueError):
        _proposal(approach=(1.0, 1.0, 0.0))


def test_read_proposals_text():
    text = (
        "# px py pz ax ay az width height depth score\n"
        "0.1 0.2 0.3 1 0 0 0.05 0.02 0.03 0.7\n"
        "0.4,0.5,0.6,0,0,-1,0.05,0.02,0.03,0.9\n"
    )
    proposals = read_proposals(io.StringIO(text))
    assert len(proposals) == 2
    assert proposals[0].point == (0.1, 0.2, 0.3)
    assert proposals[1].approach == DOWN
    assert proposals[1].score == 0.9
    assert read_proposals(io.StringIO(format_proposals(proposals))) == proposals


def test_read_proposals_empty_file(tmp_path):
    path = tmp_path / "grasps.txt"
    path.write_text("")
    assert read_proposals(path) == []


@pytest.mark.parametrize("text", [
    "0.1 0.2 0.3 1 0 0 0.05 0.02 0.03\n",
    "0.1 0.2 0.3 1 1 0 0.05 0.02 0.03 0.7\n",
    "0.1 0.2 zero 1 0 0 0.05 0.02 0.03 0.7\n",
])
def test_read_proposals_rejects_bad_records(text):
    with pytest.raises(InvalidInputError):
        read_proposals(io.StringIO(text))
