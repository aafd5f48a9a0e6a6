"""``graspcomplete`` command line: one binary, one subcommand per stage.

Exit codes: 0 success, 1 domain error or missing file, 2 usage error or
malformed config. Summaries go to stdout as key=value lines.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from dataclasses import replace

import numpy as np

from . import __version__
from .completion.fit import CompletionProblem, FitConfig, extract_mesh, fit, write_telemetry_csv
from .completion.model import FORMAT_VERSION
from .errors import ConfigError, GraspCompleteError
from .geometry.io import read_cloud, read_free_space, read_mesh, read_ply, write_cloud_ply, write_mesh
from .geometry.sampling import estimate_normals
from .grasp.planner import DISTANCES, PlannerConfig, candidates_to_csv, generate_candidates
from .grasp.simulate import ObjectProps
from .metrics.core import F1_RADIUS, VOXEL_DIMS, chamfer, evaluate_meshes, hausdorff, precision_recall_f1
from .pipeline.experiment import parse_config, resolve_scene, run_experiment, write_experiment
from .pipeline.run import VARIANTS, run
from .registration.icp import IcpConfig, icp_align, write_rmse_csv
from .sim.camera import render_depth_cloud
from .sim.scene import library_mesh


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def emit(**kv):
    for k, v in kv.items():
        if isinstance(v, (float, np.floating)):
            v = f"{float(v):.6f}" if k in _FIXED else repr(float(v))
        elif isinstance(v, (list, tuple, np.ndarray)):
            v = " ".join(repr(float(x)) for x in v)
        print(f"{k}={v}")


_FIXED = {"chamfer", "hausdorff", "jaccard", "precision", "recall", "f1"}


def _need(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    return path


def _mesh_arg(spec):
    """A mesh file or a library spec such as sphere:0.03."""
    if os.path.exists(spec) or spec.lower().endswith((".obj", ".ply")):
        return read_mesh(_need(spec))
    return library_mesh(spec)


def _is_mesh_file(path):
    if path.lower().endswith(".obj"):
        return True
    _, faces, _ = read_ply(_need(path))
    return faces is not None and len(faces) > 0


def _points_of(path):
    if path.lower().endswith(".obj"):
        return read_mesh(path).vertices
    return read_cloud(_need(path)).points


def cmd_complete(a):
    cloud = read_cloud(_need(a.cloud))
    if not cloud.has_normals:
        if a.viewpoint is None:
            raise GraspCompleteError(f"{a.cloud}: cloud has no normals; pass --viewpoint to estimate them")
        cloud = estimate_normals(cloud, viewpoint=a.viewpoint)
    fs = read_free_space(_need(a.free_space)) if a.free_space else None
    problem = CompletionProblem.from_data(cloud, fs, a.padding)
    cfg = FitConfig(iterations=a.iterations, step_size=a.step_size, seed=a.seed)
    tele = [] if a.telemetry else None
    model = fit(problem, cfg, telemetry=tele)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mesh, touched = extract_mesh(model, problem.domain, a.resolution, return_touches=True)
    write_mesh(mesh, a.out)
    if a.model:
        model.save(a.model)
    if tele is not None:
        write_telemetry_csv(tele, a.telemetry)
    emit(points=len(cloud), free_space=len(problem.free_space), iterations=cfg.iterations,
         final_loss=model.final_loss, vertices=len(mesh.vertices), faces=len(mesh.faces),
         watertight=int(mesh.is_watertight), boundary_touched=int(touched), out=a.out)


def cmd_grasp(a):
    mesh = _mesh_arg(a.mesh)
    cfg = PlannerConfig(a.samples, tuple(a.distances), a.seed, not a.no_top_term, a.ground_z)
    cands = generate_candidates(mesh, a.location, a.gripper, cfg, ObjectProps(a.mass, a.mu), a.jobs, a.keep_pruned)
    candidates_to_csv(cands, a.out)
    best = cands[0]
    emit(candidates=len(cands), successes=sum(c.success for c in cands), best_q=best.quality,
         best_success=int(best.success), best_position=best.position, best_orientation=best.orientation,
         out=a.out)


def cmd_icp(a):
    src, dst = _points_of(_need(a.src)), _points_of(_need(a.dst))
    cfg = IcpConfig(a.max_iterations, a.tol, a.rejection_distance, a.seed)
    hist = []
    res = icp_align(src, dst, config=cfg, history=hist)
    if a.rmse_csv:
        write_rmse_csv(hist, a.rmse_csv)
    if a.out:
        with open(a.out, "w") as fh:
            json.dump(res.transform.as_dict(), fh, indent=2)
    emit(rmse=res.rmse, iterations=res.iterations, rotation_wxyz=res.transform.rotation,
         translation=res.transform.translation, angle_deg=np.degrees(res.transform.rotation_angle()))


def cmd_metrics(a):
    if _is_mesh_file(a.pred) and _is_mesh_file(a.gt):
        m = evaluate_meshes(read_mesh(a.pred), read_mesh(a.gt), a.points, a.r, a.voxel_dims, a.seed)
        emit(chamfer=m.chamfer, hausdorff=m.hausdorff, jaccard=m.jaccard, precision=m.precision,
             recall=m.recall, f1=m.f1, r=a.r)
        return
    p, g = _points_of(a.pred), _points_of(a.gt)
    P, R, F = precision_recall_f1(p, g, a.r)
    emit(chamfer=chamfer(p, g), hausdorff=hausdorff(p, g), precision=P, recall=R, f1=F, r=a.r)


def cmd_render(a):
    scene, cam = resolve_scene(_need(a.scene) if not _is_spec(a.scene) else a.scene)
    cloud = render_depth_cloud(scene, cam, a.seed, label=a.label)
    write_cloud_ply(cloud, a.out)
    gt = scene.world_mesh
    if a.gt_out:
        write_mesh(gt, a.gt_out)
    emit(points=len(cloud), label=a.label, out=a.out)


def _is_spec(s):
    return ":" in s or s == "mug"


def _overrides(config, a):
    kw = {}
    if a.seed is not None:
        kw["seed"] = a.seed
    if getattr(a, "variant", None):
        kw["variant"] = a.variant
    return replace(config, **kw) if kw else config


def cmd_run(a):
    config, _ = parse_config(_need(a.config)) if a.config else (None, None)
    if config is None:
        from .pipeline.run import PipelineConfig

        config = PipelineConfig()
    config = _overrides(config, a)
    scene, cam = resolve_scene(a.scene if _is_spec(a.scene) else _need(a.scene))
    rep = run(scene, config, cam)
    write_experiment([rep], [config.variant], a.out, config)
    fm = rep.final_metrics
    emit(scene=rep.scene, variant=rep.variant, seed=rep.seed, grasped=int(rep.grasped), attempts=rep.attempts,
         iterations=len(rep.records), error=rep.error_kind or "none",
         chamfer=fm.chamfer if fm else float("nan"), jaccard=fm.jaccard if fm else float("nan"), out=a.out)


def cmd_experiment(a):
    config, exp = parse_config(_need(a.config))
    scenes = exp["scenes"]
    variants = exp["variants"] or [config.variant]
    seeds = exp["seeds"]
    if not scenes:
        raise ConfigError("[experiment] scenes is required", a.config)
    if seeds is None:
        seeds = [a.seed if a.seed is not None else config.seed]
    jobs = a.jobs if a.jobs is not None else (exp["jobs"] or 1)
    out = run_experiment(scenes, variants, seeds, a.out, config, jobs)
    emit(runs=len(out["reports"]), completed=len(out["rows"]),
         grasped=sum(r.grasped for r in out["reports"]), aggregate_rows=len(out["aggregate"]), out=a.out)


def build_parser():
    p = _Parser(prog="graspcomplete", description="Shape completion and grasp planning from partial views.")
    p.add_argument("--version", action="version",
                   version=f"graspcomplete {__version__} (model format {FORMAT_VERSION})")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("complete", help="fit an implicit surface to a cloud and extract a mesh")
    c.add_argument("--cloud", required=True)
    c.add_argument("--free-space")
    c.add_argument("--out", required=True)
    c.add_argument("--iterations", type=int, default=2000)
    c.add_argument("--step-size", type=float, default=1e-3)
    c.add_argument("--resolution", type=int, default=64)
    c.add_argument("--padding", type=float, default=0.2)
    c.add_argument("--viewpoint", type=float, nargs=3, help="orient estimated normals toward this point")
    c.add_argument("--model", help="also save the fitted model")
    c.add_argument("--telemetry", help="per-iteration loss CSV")
    c.set_defaults(func=cmd_complete)

    g = sub.add_parser("grasp", help="rank grasp candidates on a mesh")
    g.add_argument("--mesh", required=True, help="mesh file or library spec (e.g. sphere:0.03)")
    g.add_argument("--gripper", default="parallel-jaw")
    g.add_argument("--out", required=True)
    g.add_argument("--samples", type=int, default=50)
    g.add_argument("--distances", type=float, nargs="+", default=list(DISTANCES))
    g.add_argument("--location", type=float, nargs=3, default=(0.0, 0.0, 0.0))
    g.add_argument("--ground-z", type=float)
    g.add_argument("--mass", type=float, default=0.1)
    g.add_argument("--mu", type=float, default=0.5)
    g.add_argument("--no-top-term", action="store_true")
    g.add_argument("--keep-pruned", action="store_true")
    g.add_argument("--jobs", type=int, default=1)
    g.set_defaults(func=cmd_grasp)

    i = sub.add_parser("icp", help="rigid alignment of two clouds")
    i.add_argument("--src", required=True)
    i.add_argument("--dst", required=True)
    i.add_argument("--max-iterations", type=int, default=50)
    i.add_argument("--tol", type=float, default=1e-6)
    i.add_argument("--rejection-distance", type=float, default=0.05)
    i.add_argument("--out", help="transform JSON")
    i.add_argument("--rmse-csv")
    i.set_defaults(func=cmd_icp)

    m = sub.add_parser("metrics", help="shape metrics between a prediction and ground truth")
    m.add_argument("--pred", required=True)
    m.add_argument("--gt", required=True)
    m.add_argument("--r", type=float, default=F1_RADIUS)
    m.add_argument("--points", type=int, default=5000)
    m.add_argument("--voxel-dims", type=int, default=VOXEL_DIMS)
    m.set_defaults(func=cmd_metrics)

    r = sub.add_parser("render", help="simulated depth capture of a scene")
    r.add_argument("--scene", required=True, help="scene file or library spec")
    r.add_argument("--out", required=True)
    r.add_argument("--label", default="visual")
    r.add_argument("--gt-out", help="also write the posed ground-truth mesh")
    r.set_defaults(func=cmd_render)

    u = sub.add_parser("run", help="one closed-loop run")
    u.add_argument("--scene", required=True)
    u.add_argument("--config")
    u.add_argument("--variant", choices=sorted(VARIANTS))
    u.add_argument("--out", required=True)
    u.set_defaults(func=cmd_run)

    e = sub.add_parser("experiment", help="factorial runs over scenes, variants and seeds")
    e.add_argument("--config", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--jobs", type=int)
    e.set_defaults(func=cmd_experiment)

    for sp in (c, g, i, m, r, u, e):
        sp.add_argument("--seed", type=int, default=None if sp in (u, e) else 0)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (GraspCompleteError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
