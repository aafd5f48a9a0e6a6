"""The grasp-and-complete loop and factorial experiments over it."""
from __future__ import annotations

import time
import warnings
from dataclasses import asdict, dataclass, field, is_dataclass, replace

import numpy as np

from ..completion.fit import CompletionProblem, FitConfig, SurfaceClippedWarning, extract_mesh, fit
from ..errors import DegenerateAlignmentError, FitDivergedError, NoCandidatesError, NotVisibleError
from ..geometry.types import FreeSpaceSet, OrientedPointCloud, RigidTransform
from ..grasp.gripper import gripper_free_space, resolve_gripper
from ..grasp.planner import PlannerConfig, generate_candidates
from ..grasp.simulate import COLLISION_MARGIN, LIFT_HEIGHT, PRE_OFFSET, ObjectProps, simulate_grasp
from ..metrics.core import MetricsReport, evaluate_meshes
from ..registration.icp import IcpConfig, icp_align
from ..sim.camera import camera_for_scene, look_at, render_depth_cloud
from ..sim.tactile import TactileConfig, perturb_pose_on_failure, synth_tactile

# variant -> (tactile, free space, second view)
VARIANTS = {
    "visual-only": (False, False, False),
    "free-space": (False, True, False),
    "tactile": (True, False, False),
    "visuo-haptic": (True, True, False),
    "second-view": (False, False, True),
    "second-view-tactile": (True, False, True),
}
FAILURE_KINDS = ("no-feasible-candidate", "approach-collision", "no-contact", "slip-on-lift", "pose-lost")
# swap: an object too wide for the jaw replaces the target after planning and
# whatever the sensors report about it is thrown away; drop: the real grasp
# runs and is sensed, then the object slips out during the lift
INJECT_MODES = ("swap", "drop")
SWAP_MARGIN = 1.1
_STAGE_TAGS = {"render": 1, "fit": 2, "plan": 3, "perturb": 4, "wrist": 5, "metrics": 6}


def stage_seed(seed, stage, r=0):
    """Independent, reproducible seed for one stage of one iteration."""
    return int(np.random.SeedSequence([int(seed), _STAGE_TAGS[stage], int(r)]).generate_state(1)[0])


@dataclass(frozen=True)
class PipelineConfig:
    R: int = 3
    variant: str = "visuo-haptic"
    fit: FitConfig = FitConfig()
    refit_iterations: int = 1000
    planner: PlannerConfig = PlannerConfig(sample_count=30)
    icp: IcpConfig = IcpConfig()
    # second ICP pass with a tight rejection radius, 0 disables it
    icp_refine_distance: float = 0.01
    icp_rmse_threshold: float = 0.01
    tactile: TactileConfig = TactileConfig()
    gripper: str = "parallel-jaw"
    resolution: int = 64
    padding: float = 0.2
    second_view_offset: float = 0.15
    inject_failures: tuple = ()
    inject_mode: str = "swap"
    metrics_points: int = 5000
    voxel_dims: int = 40
    seed: int = 0

    def __post_init__(self):
        if self.R < 1:
            raise ValueError("R must be >= 1")
        if self.inject_mode not in INJECT_MODES:
            raise ValueError(f"inject_mode must be one of {INJECT_MODES}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {sorted(VARIANTS)}")
        if self.refit_iterations < 0:
            raise ValueError("refit_iterations must be >= 0")

    @property
    def uses(self):
        t, f, w = VARIANTS[self.variant]
        return {"tactile": t, "free_space": f, "second_view": w}

    def as_dict(self):
        return _jsonable(asdict(self))


def _jsonable(x):
    if is_dataclass(x):
        x = asdict(x)
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return str(x)
    return x


@dataclass(eq=False)
class IterationRecord:
    iteration: int
    pose_estimate: RigidTransform
    true_pose: RigidTransform
    icp_rmse: float | None
    candidate: object
    n_candidates: int
    success: bool
    failure_kind: str | None
    added: dict
    metrics: MetricsReport | None
    timings: dict
    injected: bool = False

    def as_dict(self):
        c = self.candidate
        cand = None
        if c is not None:
            cand = {
                "sample_id": c.sample_id, "d": c.distance, "quality": c.quality,
                "position": c.position.tolist(), "orientation_wxyz": c.orientation.tolist(),
                "components": dict(zip(("dh_r", "dl", "dh", "S", "F", "T"), c.components)),
            }
        return _jsonable({
            "iteration": self.iteration,
            "pose_estimate": self.pose_estimate.as_dict(),
            "true_pose": self.true_pose.as_dict(),
            "icp_rmse": self.icp_rmse,
            "candidate": cand,
            "n_candidates": self.n_candidates,
            "success": self.success,
            "failure_kind": self.failure_kind,
            "added": self.added,
            "metrics": None if self.metrics is None else self.metrics.as_dict(),
            "timings": self.timings,
            "injected": self.injected,
        })


@dataclass(eq=False)
class RunReport:
    scene: str
    variant: str
    seed: int
    records: list
    initial_metrics: MetricsReport | None
    final_model: object
    final_mesh: object
    grasped: bool
    attempts: int
    cloud: OrientedPointCloud
    free_space: FreeSpaceSet
    config: dict
    error: str | None = None
    error_kind: str | None = None
    initial_pose: RigidTransform = field(default_factory=RigidTransform.identity)

    @property
    def final_metrics(self):
        for r in reversed(self.records):
            if r.metrics is not None:
                return r.metrics
        return self.initial_metrics

    def as_dict(self):
        fm = self.final_metrics
        return _jsonable({
            "scene": self.scene,
            "variant": self.variant,
            "seed": self.seed,
            "grasped": self.grasped,
            "attempts": self.attempts,
            "error": self.error,
            "error_kind": self.error_kind,
            "initial_metrics": None if self.initial_metrics is None else self.initial_metrics.as_dict(),
            "final_metrics": None if fm is None else fm.as_dict(),
            "cloud_counts": self.cloud.count_by_label(),
            "free_space_count": len(self.free_space),
            "initial_pose": self.initial_pose.as_dict(),
            "records": [r.as_dict() for r in self.records],
            "config": self.config,
        })


def wrist_camera(base_cam, pose, offset, approach_axis=(0.0, 0.0, 1.0)):
    """Camera at the pre-grasp pose looking along the approach direction."""
    T = pose.transform
    a = T.rotate(approach_axis)
    eye = T.translation - offset * a
    return replace(base_cam, pose=look_at(eye, eye + a))


def oversized(mesh, stroke):
    """``mesh`` scaled about its centroid until its narrowest extent exceeds the jaw stroke."""
    ext = mesh.vertices.max(axis=0) - mesh.vertices.min(axis=0)
    return mesh.scaled(max(1.0, SWAP_MARGIN * stroke / float(ext.min())), about=mesh.volume_centroid)


def free_sweep_offset(mesh, pose, gripper, ground_z, pre_offset=PRE_OFFSET):
    """How far the open gripper can advance from the pre-grasp position
    before any body sample comes within the collision margin."""
    T = pose.transform
    a = T.rotate(gripper.approach_axis)
    start = T.apply(gripper.body_samples) - pre_offset * a
    q = mesh.query
    if np.any(q.unsigned_distance(start, COLLISION_MARGIN) < COLLISION_MARGIN) or np.any(q.contains(start)):
        return None
    limit = pre_offset
    t, _ = q.caster(a).first_hit(start, t_max=pre_offset)
    if np.any(np.isfinite(t)):
        limit = min(limit, float(t.min()) - COLLISION_MARGIN)
    if ground_z is not None and a[2] < 0:
        limit = min(limit, float((start[:, 2].min() - ground_z - COLLISION_MARGIN) / -a[2]))
    return max(0.0, limit)


def _fit_and_mesh(cloud, free_space, config, fit_cfg, init=None):
    problem = CompletionProblem.from_data(cloud, free_space, config.padding)
    model = fit(problem, fit_cfg, init=init)
    with warnings.catch_warnings():
        # a capped mesh is still a valid estimate for planning and metrics
        warnings.simplefilter("ignore", SurfaceClippedWarning)
        mesh = extract_mesh(model, problem.domain, config.resolution)
    return model, mesh


def initial_stage(scene, config, camera=None):
    """Initial capture and completion; depends only on the scene, seed and fit settings."""
    cam = camera if camera is not None else camera_for_scene(scene)
    v_init = render_depth_cloud(scene, cam, stage_seed(config.seed, "render", 0))
    fit_cfg = replace(config.fit, seed=stage_seed(config.seed, "fit", 0))
    model, mesh = _fit_and_mesh(v_init, None, config, fit_cfg)
    gt0 = scene.world_mesh
    m0 = evaluate_meshes(mesh, gt0, config.metrics_points, voxel_dims=config.voxel_dims,
                         seed=stage_seed(config.seed, "metrics", 0))
    return {"camera": cam, "v_init": v_init, "model": model, "mesh": mesh, "metrics": m0}


def initial_key(scene, config):
    return (scene.name, config.seed, config.fit, config.resolution, config.padding, config.metrics_points,
            config.voxel_dims, tuple(scene.pose.rotation), tuple(scene.pose.translation))


def run(scene, config=PipelineConfig(), camera=None, cache=None) -> RunReport:
    """Capture, complete, plan, grasp, fuse and regrasp until success or R attempts.

    Typed errors (fit divergence, no candidates, degenerate ICP, object not
    visible) end the run early and are recorded in the report.
    ``cache`` (a dict) shares the initial completion between variants.
    """
    gripper = resolve_gripper(config.gripper)
    uses = config.uses
    obj = ObjectProps(scene.mass, scene.mu)
    P0 = scene.pose
    gt_canonical = scene.world_mesh
    records = []
    report = RunReport(scene.name, config.variant, config.seed, records, None, None, None, False, 0,
                       OrientedPointCloud(np.zeros((0, 3)), np.zeros((0, 3))), FreeSpaceSet(np.zeros((0, 3))),
                       config.as_dict(), initial_pose=P0)
    try:
        key = initial_key(scene, config)
        if cache is not None and key in cache:
            init = cache[key]
        else:
            init = initial_stage(scene, config, camera)
            if cache is not None:
                cache[key] = init
    except (FitDivergedError, NotVisibleError) as exc:
        report.error, report.error_kind = str(exc), type(exc).__name__
        return report
    cam = init["camera"]
    v_init = init["v_init"]
    model, mesh = init["model"], init["mesh"]
    report.initial_metrics = init["metrics"]
    cloud = v_init
    fs = FreeSpaceSet(np.zeros((0, 3)))
    A = RigidTransform.identity()
    for r in range(1, config.R + 1):
        timings = {}
        added = {"visual": 0, "tactile": 0, "second-view": 0, "free-space": 0}
        rmse = None

        def record(cand, n_cand, success, kind, metrics, injected=False):
            records.append(IterationRecord(r, A, scene.pose, rmse, cand, n_cand, success, kind, dict(added),
                                           metrics, dict(timings), injected))

        try:
            if r > 1:
                t0 = time.perf_counter()
                cur = render_depth_cloud(scene, cam, stage_seed(config.seed, "render", r))
                res = icp_align(cur, v_init, A, config.icp)
                if config.icp_refine_distance > 0:
                    res = icp_align(cur, v_init, res.transform, replace(config.icp, rejection_distance=config.icp_refine_distance))
                A, rmse = res.transform, res.rmse
                timings["pose"] = time.perf_counter() - t0
                if rmse > config.icp_rmse_threshold:
                    record(None, 0, False, "pose-lost", None)
                    continue
            t0 = time.perf_counter()
            mesh_world = mesh.transformed(A.inverse())
            planner = replace(config.planner, seed=stage_seed(config.seed, "plan", r), ground_z=scene.ground_height)
            try:
                cands = generate_candidates(mesh_world, gripper=gripper, config=planner, obj=obj)
            except NoCandidatesError:
                timings["plan"] = time.perf_counter() - t0
                record(None, 0, False, "no-feasible-candidate", None)
                raise
            timings["plan"] = time.perf_counter() - t0
            best = cands[0]
            injected = r in config.inject_failures
            true_world = scene.world_mesh
            swapped = injected and config.inject_mode == "swap"
            target = oversized(true_world, gripper.stroke) if swapped else true_world
            t0 = time.perf_counter()
            result = simulate_grasp(target, best.pose, gripper, obj, ground_z=scene.ground_height)
            report.attempts += 1
            timings["grasp"] = time.perf_counter() - t0
            if injected and result.success:
                result = replace(result, success=False, dh_r=LIFT_HEIGHT)
            if result.success:
                kind = None
            elif result.collided:
                kind = "approach-collision"
            elif not result.contacts:
                kind = "no-contact"
            else:
                kind = "slip-on-lift"
            new_clouds = [cloud]
            if uses["second_view"]:
                try:
                    wcam = wrist_camera(cam, best.pose, config.second_view_offset, gripper.approach_axis)
                    v = render_depth_cloud(scene, wcam, stage_seed(config.seed, "wrist", r), label="second-view")
                    new_clouds.append(v.transformed(A))
                    added["second-view"] = len(v)
                except NotVisibleError:
                    pass
            if uses["free_space"] and not swapped:
                if result.collided:
                    s = free_sweep_offset(true_world, best.pose, gripper, scene.ground_height)
                    fs_world = None
                    if s is not None:
                        a = best.pose.transform.rotate(gripper.approach_axis)
                        shifted = RigidTransform(best.pose.orientation, best.pose.position - (PRE_OFFSET - s) * a)
                        fs_world = gripper_free_space(gripper, shifted)
                else:
                    fs_world = gripper_free_space(gripper, best.pose, result.closing_state)
                if fs_world is not None:
                    fs = FreeSpaceSet.concatenate([fs, fs_world.transformed(A)])
                    added["free-space"] = len(fs_world)
            if uses["tactile"] and result.contacts and not swapped:
                sites = result.tactile_sites or result.contacts
                tac = synth_tactile(sites, true_world, config.tactile)
                new_clouds.append(tac.transformed(A))
                added["tactile"] = len(tac)
            cloud = OrientedPointCloud.concatenate(new_clouds)
            t0 = time.perf_counter()
            refit_cfg = replace(config.fit, iterations=config.refit_iterations, seed=stage_seed(config.seed, "fit", r))
            model, mesh = _fit_and_mesh(cloud, fs, config, refit_cfg, init=model)
            timings["fit"] = time.perf_counter() - t0
            t0 = time.perf_counter()
            metrics = evaluate_meshes(mesh, gt_canonical, config.metrics_points, voxel_dims=config.voxel_dims,
                                      seed=stage_seed(config.seed, "metrics", r))
            timings["metrics"] = time.perf_counter() - t0
            record(best, len(cands), result.success, kind, metrics, injected)
            if result.success:
                report.grasped = True
                break
            scene = scene.with_pose(perturb_pose_on_failure(scene, result, stage_seed(config.seed, "perturb", r)))
        except (FitDivergedError, NoCandidatesError, DegenerateAlignmentError, NotVisibleError) as exc:
            report.error, report.error_kind = str(exc), type(exc).__name__
            break
    report.final_model, report.final_mesh = model, mesh
    report.cloud, report.free_space = cloud, fs
    return report

