import json
import os

import numpy as np
import pytest

from graspcomplete.completion.fit import FitConfig
from graspcomplete.errors import ConfigError
from graspcomplete.grasp.planner import PlannerConfig
from graspcomplete.pipeline import (
    VARIANTS,
    PipelineConfig,
    pairwise_tests,
    parse_config,
    run,
    run_experiment,
)
from graspcomplete.sim import object_library


def tiny(**kw):
    base = dict(fit=FitConfig(iterations=150), refit_iterations=40, planner=PlannerConfig(sample_count=10),
                resolution=32, metrics_points=800, voxel_dims=20)
    base.update(kw)
    return PipelineConfig(**base)


@pytest.fixture(scope="module")
def sphere():
    return object_library("sphere:0.03")


@pytest.fixture(scope="module")
def injected_run(sphere):
    return run(sphere, tiny(variant="visuo-haptic", inject_failures=(1,)))


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(R=0)
    with pytest.raises(ValueError):
        PipelineConfig(variant="audio")
    with pytest.raises(ValueError):
        PipelineConfig(inject_mode="later")
    assert set(VARIANTS) == {"visual-only", "free-space", "tactile", "visuo-haptic", "second-view",
                             "second-view-tactile"}


def test_visual_only_adds_nothing(sphere):
    rep = run(sphere, tiny(variant="visual-only", inject_failures=(1,)))
    assert all(r.added["tactile"] == 0 and r.added["free-space"] == 0 and r.added["second-view"] == 0
               for r in rep.records)
    assert len(rep.free_space) == 0 and rep.cloud.count_by_label()["tactile"] == 0


def test_injected_failure_then_regrasp(injected_run, sphere):
    rep = injected_run
    first, second = rep.records[0], rep.records[1]
    assert first.injected and not first.success and first.failure_kind is not None
    assert second.icp_rmse is not None and second.icp_rmse <= 0.01
    assert rep.grasped and rep.records[-1].success and 1 <= rep.attempts <= 3
    assert len(rep.records) <= 3
    # the sphere is symmetric, so judge the estimate by where it puts the observed surface
    gt0 = sphere.gt_mesh.transformed(rep.initial_pose)
    seen = second.true_pose.apply(sphere.gt_mesh.vertices)
    assert np.abs(gt0.query.signed_distance(second.pose_estimate.apply(seen))).max() <= 2e-3


def test_fused_data_lies_on_the_object(injected_run, sphere):
    rep = injected_run
    start = rep.cloud.count_by_label()["visual"]
    n_tac = 0
    for rec in rep.records:
        start += rec.added["second-view"]
        pts = rep.cloud.points[start : start + rec.added["tactile"]]
        start += rec.added["tactile"]
        n_tac += len(pts)
        if len(pts):
            world = rec.pose_estimate.inverse().apply(pts)
            assert np.abs(sphere.gt_mesh.transformed(rec.true_pose).query.signed_distance(world)).max() <= 1e-3
    assert n_tac > 0
    if len(rep.free_space):
        # canonical frame: off by at most the registration error
        gt0 = sphere.gt_mesh.transformed(rep.initial_pose)
        assert gt0.query.signed_distance(rep.free_space.points).min() >= -2e-3 - 3e-3


def test_swap_injection_discards_its_data(injected_run):
    first = injected_run.records[0]
    assert first.added["tactile"] == 0 and first.added["free-space"] == 0


def test_drop_injection_keeps_sensing(sphere):
    rep = run(sphere, tiny(variant="tactile", inject_failures=(1,), inject_mode="drop", R=1))
    rec = rep.records[0]
    assert not rec.success and rec.injected and rec.failure_kind == "slip-on-lift"
    assert rec.added["tactile"] > 0 and not rep.grasped


def test_monotone_information(injected_run):
    rep = injected_run
    total = sum(r.added["tactile"] + r.added["second-view"] for r in rep.records)
    assert len(rep.cloud) == rep.cloud.count_by_label()["visual"] + total
    assert len(rep.free_space) == sum(r.added["free-space"] for r in rep.records)


def test_report_serializes(injected_run):
    d = json.loads(json.dumps(injected_run.as_dict()))
    assert d["config"]["variant"] == "visuo-haptic" and len(d["records"]) == len(injected_run.records)


def test_run_is_deterministic(sphere):
    a = run(sphere, tiny(variant="tactile", R=1))
    b = run(sphere, tiny(variant="tactile", R=1))
    assert json.dumps(a.as_dict()["final_metrics"]) == json.dumps(b.as_dict()["final_metrics"])


def test_second_view_variant(sphere):
    rep = run(sphere, tiny(variant="second-view", R=1))
    assert rep.records[0].added["second-view"] > 0
    assert rep.records[0].added["tactile"] == 0


def test_experiment_outputs(tmp_path):
    out = run_experiment(["sphere:0.03", "capsule:0.025,0.06"], ["visual-only", "tactile"], [0, 1],
                         tmp_path, tiny(R=1))
    assert len(out["reports"]) == 8
    assert len(out["aggregate"]) == 4
    for sub in ("runs", "meshes", "clouds"):
        assert len(os.listdir(tmp_path / sub)) >= 8
    stats = json.loads((tmp_path / "stats.json").read_text())
    assert "visual-only vs tactile" in stats["pairwise"]
    lines = (tmp_path / "aggregate.csv").read_text().splitlines()
    assert len(lines) == 5 and lines[0].startswith("object,variant")


def test_self_comparison_has_no_pairs():
    rows = [{"object": f"o{i}", "seed": 0, "variant": v, "chamfer": float(i), "hausdorff": 1.0,
             "jaccard": 0.5, "f1": 0.5} for i in range(6) for v in ("a", "b")]
    res = pairwise_tests(rows, ["a", "b"])
    assert res["a vs b"]["chamfer"]["error"] == "insufficient pairs"


def test_parse_config(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("[pipeline]\nR = 2\nvariant = tactile\n[fit]\niterations = 10\n"
                 "[experiment]\nscenes = sphere:0.03 obj.txt\nseeds = 1 2\n")
    cfg, exp = parse_config(p)
    assert cfg.R == 2 and cfg.fit.iterations == 10 and cfg.variant == "tactile"
    assert exp["seeds"] == [1, 2] and exp["scenes"][1] == str(tmp_path / "obj.txt")
    p.write_text("[pipeline]\nR = 2\n\nvariant = nope\n")
    with pytest.raises(ConfigError):
        parse_config(p)
    p.write_text("[fit]\niterations = 10\nbogus = 1\n")
    with pytest.raises(ConfigError) as info:
        parse_config(p)
    assert info.value.line == 3
    p.write_text("[fit]\niterations = ten\n")
    with pytest.raises(ConfigError) as info:
        parse_config(p)
    assert info.value.line == 2
