import json
import subprocess
import sys

import numpy as np
import pytest

from graspcomplete.cli import main
from graspcomplete.geometry import read_cloud, read_mesh


def call(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    kv = dict(line.split("=", 1) for line in out.splitlines() if "=" in line)
    return code, kv, err


@pytest.fixture(scope="module")
def rendered(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["render", "--scene", "sphere:0.03", "--out", str(d / "v.ply"), "--gt-out", str(d / "gt.obj")]) == 0
    return d


def test_version(capsys):
    assert main(["--version"]) == 0
    assert "model format 1" in capsys.readouterr().out


def test_usage_error_exit_2(capsys):
    assert main(["complete"]) == 2
    assert main(["nonsense"]) == 2


def test_render_outputs(rendered):
    cloud = read_cloud(rendered / "v.ply")
    assert len(cloud) > 100 and cloud.has_normals
    assert read_mesh(rendered / "gt.obj").is_watertight


def test_metrics_identical_clouds_zero(capsys, rendered):
    code, kv, _ = call(capsys, "metrics", "--pred", rendered / "v.ply", "--gt", rendered / "v.ply")
    assert code == 0
    assert kv["chamfer"] == "0.000000" and kv["hausdorff"] == "0.000000" and kv["f1"] == "1.000000"


def test_metrics_meshes_has_jaccard(capsys, rendered):
    code, kv, _ = call(capsys, "metrics", "--pred", rendered / "gt.obj", "--gt", rendered / "gt.obj",
                       "--points", 500)
    assert code == 0 and kv["jaccard"] == "1.000000"


def test_missing_file_exit_1(capsys, tmp_path):
    code, _, err = call(capsys, "metrics", "--pred", tmp_path / "nope.ply", "--gt", tmp_path / "nope.ply")
    assert code == 1 and "nope.ply" in err


def test_complete_and_icp(capsys, rendered, tmp_path):
    code, kv, _ = call(capsys, "complete", "--cloud", rendered / "v.ply", "--out", tmp_path / "m.obj",
                       "--iterations", 60, "--resolution", 24, "--model", tmp_path / "m.bin",
                       "--telemetry", tmp_path / "t.csv")
    assert code == 0 and kv["watertight"] == "1"
    assert (tmp_path / "m.bin").read_bytes()[:4] == b"SGIM"
    assert len((tmp_path / "t.csv").read_text().splitlines()) == 61
    code, kv, _ = call(capsys, "icp", "--src", rendered / "v.ply", "--dst", rendered / "v.ply",
                       "--out", tmp_path / "T.json", "--rmse-csv", tmp_path / "r.csv")
    assert code == 0 and float(kv["rmse"]) < 1e-9
    assert json.loads((tmp_path / "T.json").read_text())["translation"] == pytest.approx([0, 0, 0], abs=1e-9)


def test_grasp_is_deterministic(capsys, tmp_path):
    outs = []
    for i, jobs in enumerate((1, 2)):
        code, kv, _ = call(capsys, "grasp", "--mesh", "sphere:0.03", "--out", tmp_path / f"c{i}.csv",
                           "--samples", 8, "--jobs", jobs)
        assert code == 0 and kv["best_success"] == "1"
        outs.append((tmp_path / f"c{i}.csv").read_bytes())
    assert outs[0] == outs[1]


def test_bad_config_reports_line(capsys, tmp_path):
    cfg = tmp_path / "bad.txt"
    cfg.write_text("[pipeline]\nR = 3\nwhat = 1\n")
    code, _, err = call(capsys, "run", "--scene", "sphere:0.03", "--config", cfg, "--out", tmp_path / "o")
    assert code == 2 and "3" in err


def test_run_subcommand(capsys, tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("[pipeline]\nR = 1\nresolution = 24\nmetrics_points = 500\nvoxel_dims = 16\n"
                   "refit_iterations = 20\n[fit]\niterations = 80\n[planner]\nsample_count = 8\n")
    code, kv, _ = call(capsys, "run", "--scene", "sphere:0.03", "--config", cfg, "--variant", "tactile",
                       "--out", tmp_path / "o")
    assert code == 0 and kv["variant"] == "tactile" and kv["iterations"] == "1"
    code, _, _ = call(capsys, "run", "--scene", "sphere:0.03", "--config", cfg, "--variant", "tactile",
                      "--out", tmp_path / "o2")
    assert code == 0
    assert (tmp_path / "o" / "aggregate.csv").read_bytes() == (tmp_path / "o2" / "aggregate.csv").read_bytes()


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "graspcomplete.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("graspcomplete")
