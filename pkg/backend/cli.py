"""
Command-line entry point: scene generation, map building, queries, planning
and full pick-and-drop tasks.

    python cli.py gen-scene --seed 3 --out scenes/apt3
    python cli.py build-map --scan scenes/apt3 --out apt3.vxm --grid-out apt3_grid.npz
    python cli.py run-task --map apt3.vxm --grid apt3_grid.npz --scene scenes/apt3 \
        --pick mug --drop counter --report report.json

Exit status: 0 on success, 1 when a task report records a failed stage,
2 on invalid input or a pipeline error.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence, Tuple

from app.config import get_settings
from app.errors import InvalidInputError, PickDropError
from app.models.geometry import CameraIntrinsics, Pose
from app.models.task import TaskSpec
from app.services.drop_service import align_cloud, compute_drop, read_cloud
from app.services.grasp_service import filter_by_mask, pregrasp_trajectory, rank_grasps, read_proposals
from app.services.memory_service import VoxelMap, ply_points
from app.services.navigation_service import (
    ObstacleGrid,
    build_grid,
    inflate,
    nearest_free_cell,
    path_to_text,
    plan_path,
    select_nav_target,
)
from app.services.providers import (
    PrecomputedEmbeddingProvider,
    Providers,
    SyntheticEmbeddingProvider,
    precomputed_providers,
)
from app.services.scan_service import build_map, load_scan
from app.services.scene_generator import (
    describe,
    gen_synthetic_scene,
    load_scene,
    load_scene_spec,
    load_vocabulary,
    random_apartment_spec,
    save_scene,
    synthetic_providers,
)
from app.services.task_service import run_task
from app.utils.logging_utils import configure_logging
from app.utils.mask_utils import decode_rle


def _floats(text: str, count: int, name: str) -> Tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise InvalidInputError(f"{name} must be {count} comma-separated numbers, got '{text}'")
    if len(values) != count:
        raise InvalidInputError(f"{name} must be {count} comma-separated numbers, got '{text}'")
    return values


def _print_json(data) -> None:
    print(json.dumps(data, indent=2))


def _load_grid(args) -> ObstacleGrid:
    settings = get_settings()
    if getattr(args, "grid", None):
        return ObstacleGrid.load(args.grid)
    if not getattr(args, "map", None):
        raise InvalidInputError("either --grid or --map is required")
    grid = build_grid(VoxelMap.load(args.map), settings.floor_height, settings.ceiling_height,
                      settings.grid_cell_size)
    return inflate(grid, settings.inflation_radius)


def _providers(args) -> Providers:
    if args.scene:
        return synthetic_providers(load_scene(args.scene))
    if args.embeddings and args.views and args.grasps:
        return precomputed_providers(args.embeddings, load_scan(args.views), args.grasps)
    raise InvalidInputError("pass --scene, or --embeddings with --views and --grasps")


def cmd_gen_scene(args) -> int:
    spec = load_scene_spec(args.spec) if args.spec else random_apartment_spec(args.seed, args.frames)
    scene = gen_synthetic_scene(spec, args.seed)
    save_scene(scene, args.out)
    print(f"✅ Scene written to {args.out}")
    _print_json(describe(scene))
    return 0


def cmd_build_map(args) -> int:
    settings = get_settings()
    scan = load_scan(args.scan)
    voxel_map, grid = build_map(
        scan,
        voxel_size=args.voxel_size or settings.voxel_size,
        floor_height=settings.floor_height,
        ceiling_height=settings.ceiling_height,
        cell_size=settings.grid_cell_size,
        inflation_radius=settings.inflation_radius,
        workers=args.workers,
    )
    voxel_map.save(args.out)
    print(f"✅ Map with {len(voxel_map)} voxels written to {args.out}")
    if args.grid_out:
        grid.save(args.grid_out)
        print(f"✅ Grid {grid.shape[0]}x{grid.shape[1]} written to {args.grid_out}")
    return 0


def cmd_query(args) -> int:
    voxel_map = VoxelMap.load(args.map)
    if args.scene:
        embedder = SyntheticEmbeddingProvider(load_vocabulary(args.scene))
    elif args.embeddings:
        embedder = PrecomputedEmbeddingProvider.from_file(args.embeddings)
    else:
        raise InvalidInputError("pass --scene or --embeddings to embed the query")
    settings = get_settings()
    embedding = embedder.embed_text(args.text)
    if args.near:
        results = [voxel_map.query_near(embedding, embedder.embed_text(args.near),
                                        settings.near_top_a, settings.near_top_b)]
    else:
        results = voxel_map.query(embedding, args.k)
    _print_json([r.model_dump(mode="json") for r in results])
    return 0


def cmd_plan_nav(args) -> int:
    grid = _load_grid(args)
    target = select_nav_target(grid, _floats(args.target, 2, "--target"))
    output = {"target": target.model_dump(mode="json")}
    if args.start:
        x, y = _floats(args.start, 2, "--start")
        start = grid.cell_of(x, y)
        if not grid.is_free(start):
            start = nearest_free_cell(grid, x, y)
        path = plan_path(grid, start, target.cell, get_settings().path_obstacle_weight)
        output["path"] = path.model_dump(mode="json")
        if args.path_out:
            Path(args.path_out).write_text(path_to_text(path), encoding="utf-8")
    _print_json(output)
    return 0


def cmd_filter_grasps(args) -> int:
    camera = json.loads(Path(args.camera).read_text(encoding="utf-8"))
    intr = CameraIntrinsics(**camera["intrinsics"])
    pose = Pose.from_dict(camera["pose"])
    mask = decode_rle(json.loads(Path(args.mask).read_text(encoding="utf-8")))
    kept = filter_by_mask(read_proposals(args.proposals), mask, intr, pose)
    ranking = rank_grasps(kept)
    _print_json({
        "kept": len(kept),
        "best": ranking.best.model_dump(mode="json"),
        "trajectory": pregrasp_trajectory(ranking.best.proposal).model_dump(mode="json"),
        "ranking": [r.model_dump(mode="json") for r in ranking.ranking],
    })
    return 0


def cmd_plan_drop(args) -> int:
    x, y, hx, hy = _floats(args.robot, 4, "--robot")
    aligned = align_cloud(read_cloud(args.cloud), (x, y), (hx, hy), args.floor_z)
    limit = args.max_release_height if args.max_release_height is not None else get_settings().max_release_height
    _print_json(compute_drop(aligned, limit).model_dump(mode="json"))
    return 0


def cmd_run_task(args) -> int:
    settings = get_settings()
    voxel_map = VoxelMap.load(args.map)
    grid = _load_grid(args)
    task = TaskSpec(pick_query=args.pick, drop_query=args.drop, from_query=args.from_query)
    start = _floats(args.start, 2, "--start") if args.start else None
    report = run_task(
        voxel_map,
        grid,
        task,
        _providers(args),
        start=start,
        similarity_floor=settings.similarity_floor,
        near_top_a=settings.near_top_a,
        near_top_b=settings.near_top_b,
        obstacle_weight=settings.path_obstacle_weight,
        max_release_height=settings.max_release_height,
    )
    payload = report.model_dump_json(indent=2)
    if args.report:
        Path(args.report).write_text(payload + "\n", encoding="utf-8")
    else:
        print(payload)
    if report.failed_stage is not None:
        failed = report.stages[-1]
        print(f"❌ Task failed at stage {report.failed_stage.value}: {failed.error}", file=sys.stderr)
        return 1
    print("✅ Task planned through all stages", file=sys.stderr)
    return 0


def cmd_export(args) -> int:
    if args.format == "grid-text":
        text = _load_grid(args).to_text()
    else:
        text = ply_points(VoxelMap.load(args.map))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from app.services.workspace_service import MapWorkspace, load_providers, set_workspace

    settings = get_settings()
    if args.map:
        settings.map_path = args.map
    if args.grid:
        settings.grid_path = args.grid
    if args.scene:
        settings.scene_dir = args.scene
    if settings.map_path and settings.grid_path:
        set_workspace(MapWorkspace(VoxelMap.load(settings.map_path), ObstacleGrid.load(settings.grid_path),
                                   load_providers(settings), settings))
    from main import app

    uvicorn.run(app, host=args.host, port=args.port or settings.port, reload=False)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cli.py", description="Pick-and-drop planning over a scanned home")
    parser.add_argument("--log-level", default=None, help="overrides LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scene", help="generate a synthetic scene and its scan archive")
    p.add_argument("--spec", help="scene spec JSON; a random apartment when omitted")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=32, help="frames for the random apartment")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_scene)

    p = sub.add_parser("build-map", help="build the voxel map and obstacle grid from a scan")
    p.add_argument("--scan", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid-out")
    p.add_argument("--voxel-size", type=float)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_build_map)

    p = sub.add_parser("query", help="retrieve voxels for a text query")
    p.add_argument("--map", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--near")
    p.add_argument("-k", type=int, default=1)
    p.add_argument("--scene")
    p.add_argument("--embeddings")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("plan-nav", help="select a navigation target and optionally a path to it")
    p.add_argument("--map")
    p.add_argument("--grid")
    p.add_argument("--target", required=True, help="X,Y of the object")
    p.add_argument("--start", help="X,Y of the robot")
    p.add_argument("--path-out")
    p.set_defaults(func=cmd_plan_nav)

    p = sub.add_parser("filter-grasps", help="filter and rank grasp proposals with an object mask")
    p.add_argument("--proposals", required=True)
    p.add_argument("--mask", required=True, help="run-length encoded mask JSON")
    p.add_argument("--camera", required=True, help="JSON with intrinsics and pose")
    p.set_defaults(func=cmd_filter_grasps)

    p = sub.add_parser("plan-drop", help="compute the drop point over a receptacle cloud")
    p.add_argument("--cloud", required=True)
    p.add_argument("--robot", required=True, help="X,Y,HX,HY")
    p.add_argument("--floor-z", type=float, default=0.0)
    p.add_argument("--max-release-height", type=float)
    p.set_defaults(func=cmd_plan_drop)

    p = sub.add_parser("run-task", help="plan a full pick-and-drop task")
    p.add_argument("--map", required=True)
    p.add_argument("--grid")
    p.add_argument("--pick", required=True)
    p.add_argument("--from", dest="from_query")
    p.add_argument("--drop", required=True)
    p.add_argument("--start", help="X,Y of the robot")
    p.add_argument("--report")
    p.add_argument("--scene")
    p.add_argument("--embeddings")
    p.add_argument("--views")
    p.add_argument("--grasps")
    p.set_defaults(func=cmd_run_task)

    p = sub.add_parser("export", help="export the grid as text or voxel centers as PLY")
    p.add_argument("--map", required=True)
    p.add_argument("--grid")
    p.add_argument("--format", choices=["grid-text", "ply-points"], required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--map")
    p.add_argument("--grid")
    p.add_argument("--scene")
    p.add_argument("--host", default="0.0.0.0")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level or get_settings().log_level)
    try:
        return args.func(args)
    except PickDropError as e:
        print(f"❌ {args.command}: {e}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as e:
        print(f"❌ {args.command}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
