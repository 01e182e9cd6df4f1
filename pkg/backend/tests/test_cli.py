import json

import numpy as np
import pytest

from app.services.drop_service import write_cloud
from app.services.scene_generator import save_scene
from app.utils.mask_utils import encode_rle
from cli import main
from tests.conftest import room_spec


@pytest.fixture
def workspace_files(scene, tmp_path):
    """Saved session scene plus the map and grid built from it by the CLI"""
    scene_dir = save_scene(scene, tmp_path / "scene")
    map_path, grid_path = tmp_path / "map.vxm", tmp_path / "grid.npz"
    assert main(["build-map", "--scan", str(scene_dir), "--out", str(map_path), "--grid-out", str(grid_path)]) == 0
    return scene_dir, map_path, grid_path


def _stdout_json(capsys):
    return json.loads(capsys.readouterr().out)


def test_gen_scene_from_spec_file(tmp_path):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(room_spec(frames=4).model_dump_json())
    out = tmp_path / "scene"
    assert main(["gen-scene", "--spec", str(spec_path), "--seed", "5", "--out", str(out)]) == 0
    assert (out / "scene.json").exists()
    assert (out / "manifest.json").exists()


def test_query_prints_results(workspace_files, capsys):
    scene_dir, map_path, _ = workspace_files
    capsys.readouterr()
    assert main(["query", "--map", str(map_path), "--text", "bottle", "-k", "2", "--scene", str(scene_dir)]) == 0
    results = _stdout_json(capsys)
    assert len(results) == 2
    assert results[0]["score"] == pytest.approx(1.0, abs=1e-3)


def test_plan_nav_writes_the_path(workspace_files, tmp_path, capsys):
    _, _, grid_path = workspace_files
    path_out = tmp_path / "path.txt"
    capsys.readouterr()
    code = main(["plan-nav", "--grid", str(grid_path), "--target", "1.1,1.2",
                 "--start", "2.0,2.0", "--path-out", str(path_out)])
    assert code == 0
    output = _stdout_json(capsys)
    lines = path_out.read_text().splitlines()
    assert lines[-1] == " ".join(str(v) for v in output["target"]["cell"])


def test_run_task_success_and_failure(workspace_files, tmp_path):
    scene_dir, map_path, grid_path = workspace_files
    report_path = tmp_path / "report.json"
    common = ["run-task", "--map", str(map_path), "--grid", str(grid_path), "--scene", str(scene_dir),
              "--start", "2.0,2.0", "--report", str(report_path)]
    assert main(common + ["--pick", "mug", "--drop", "counter"]) == 0
    assert len(json.loads(report_path.read_text())["stages"]) == 4
    assert main(common + ["--pick", "mug", "--drop", "sofa"]) == 1
    assert json.loads(report_path.read_text())["failed_stage"] is not None


def test_run_task_needs_providers(workspace_files):
    _, map_path, grid_path = workspace_files
    assert main(["run-task", "--map", str(map_path), "--grid", str(grid_path),
                 "--pick", "mug", "--drop", "counter"]) == 2


def test_export_formats(workspace_files, tmp_path):
    _, map_path, grid_path = workspace_files
    grid_out, ply_out = tmp_path / "grid.txt", tmp_path / "map.ply"
    assert main(["export", "--map", str(map_path), "--grid", str(grid_path),
                 "--format", "grid-text", "--out", str(grid_out)]) == 0
    assert set(grid_out.read_text()) <= set(".#?+\n")
    assert main(["export", "--map", str(map_path), "--format", "ply-points", "--out", str(ply_out)]) == 0
    assert ply_out.read_text().startswith("ply\n")


def test_filter_grasps(intrinsics, tmp_path, capsys):
    proposals = tmp_path / "grasps.txt"
    proposals.write_text("0 0 1 1 0 0 0.05 0.02 0.03 0.6\n0 0 1 0 0 -1 0.05 0.02 0.03 0.9\n5 0 1 1 0 0 0.05 0.02 0.03 0.99\n")
    mask = np.zeros((48, 64), dtype=bool)
    mask[20:28, 28:36] = True
    (tmp_path / "mask.json").write_text(json.dumps(encode_rle(mask)))
    camera = {"intrinsics": intrinsics.model_dump(), "pose": {"rotation": np.eye(3).ravel().tolist(),
                                                               "translation": [0.0, 0.0, 0.0]}}
    (tmp_path / "camera.json").write_text(json.dumps(camera))
    capsys.readouterr()
    code = main(["filter-grasps", "--proposals", str(proposals), "--mask", str(tmp_path / "mask.json"),
                 "--camera", str(tmp_path / "camera.json")])
    assert code == 0
    output = _stdout_json(capsys)
    assert output["kept"] == 2
    assert output["best"]["proposal"]["approach"] == [1.0, 0.0, 0.0]
    assert output["trajectory"]["waypoints"][0] == pytest.approx([-0.2, 0.0, 1.0])


def test_plan_drop(tmp_path, capsys):
    cloud = tmp_path / "cloud.bin"
    write_cloud(cloud, np.array([(0.2, 0.0, 0.7), (0.4, 0.0, 0.75), (0.6, 0.0, 0.8)]))
    capsys.readouterr()
    assert main(["plan-drop", "--cloud", str(cloud), "--robot", "0,0,1,0"]) == 0
    assert _stdout_json(capsys)["z_max"] == pytest.approx(0.95, abs=1e-6)
    assert main(["plan-drop", "--cloud", str(cloud), "--robot", "0,0,1,0", "--max-release-height", "0.5"]) == 2


@pytest.mark.parametrize("argv", [
    ["plan-nav", "--target", "1,2"],
    ["plan-drop", "--cloud", "missing.bin", "--robot", "0,0,1,0"],
    ["build-map", "--scan", "no/such/scan", "--out", "x.vxm"],
])
def test_bad_input_exits_with_two(argv):
    assert main(argv) == 2
