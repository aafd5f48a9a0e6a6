"""Config files, factorial experiments and their on-disk outputs.

Experiment/run config (INI)::

    [pipeline]
    R = 3
    variant = tactile
    seed = 0
    gripper = parallel-jaw      # bundled name or description file
    inject_failures = 1         # iterations whose grasp is forced to fail
    inject_mode = swap          # swap (oversized stand-in, data discarded) or drop

    [fit]
    iterations = 2000

    [planner]
    sample_count = 30
    distances = 0.10 0.11 0.12

    [icp]
    rejection_distance = 0.05

    [tactile]
    patch_edge = 0.005

    [experiment]
    scenes = sphere:0.03 mug scenes/bottle.txt
    variants = visual-only tactile
    seeds = 0 1 2
    jobs = 1

Every key is optional; unknown sections or keys are errors.
"""
from __future__ import annotations

import csv
import itertools
import json
import os
import re
from dataclasses import fields, replace

import numpy as np
from joblib import Parallel, delayed

from ..completion.fit import FitConfig
from ..errors import ConfigError, InsufficientPairsError
from ..geometry.io import write_cloud_ply, write_obj
from ..grasp.gripper import BUNDLED
from ..grasp.planner import PlannerConfig
from ..metrics.core import REPORT_FIELDS, aggregate, gsr, wilcoxon_signed_rank, write_json, write_rows_csv
from ..registration.icp import IcpConfig
from ..sim.camera import camera_for_scene
from ..sim.scene import key_line, load_scene, object_library, read_config
from ..sim.tactile import TactileConfig
from .run import VARIANTS, PipelineConfig, run

_SECTIONS = {"fit": FitConfig, "planner": PlannerConfig, "icp": IcpConfig, "tactile": TactileConfig}
_NESTED = {"fit", "planner", "icp", "tactile"}
_EXPERIMENT_KEYS = {"scenes", "variants", "seeds", "jobs"}
SCENE_EXTENSIONS = (".txt", ".ini", ".cfg")


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(s)


def _caster(default):
    if isinstance(default, bool):
        return _bool
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    if isinstance(default, tuple):
        kind = type(default[0]) if default else int
        return lambda s: tuple(kind(x) for x in s.replace(",", " ").split())
    if default is None:
        return lambda s: None if s.strip().lower() == "none" else float(s)
    return str


def _section_values(cp, path, section, cls, skip=()):
    out = {}
    # option names come back lower-cased
    known = {f.name.lower(): f.name for f in fields(cls) if f.name not in skip}
    for key in cp[section]:
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in [{section}]", path, key_line(path, section, key))
        raw = cp.get(section, key)
        name = known[key]
        try:
            out[name] = _caster(getattr(cls(), name))(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"[{section}] {name}: cannot parse {raw!r}", path, key_line(path, section, key)) from None
    return out


def _build(cls, values, path, section):
    try:
        return cls(**values)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {exc}", path) from None


def parse_config(path, text=None):
    """(PipelineConfig, experiment dict) from a config file.

    The experiment dict has ``scenes``, ``variants``, ``seeds`` (lists) and
    ``jobs``; missing entries are None.
    """
    cp = read_config(path, text)
    base = os.path.dirname(os.path.abspath(path))
    for sec in cp.sections():
        if sec not in _NESTED | {"pipeline", "experiment"}:
            raise ConfigError(f"unknown section [{sec}]", path, key_line(path, sec, "") or _section_line(path, sec))
    nested = {}
    for sec, cls in _SECTIONS.items():
        vals = _section_values(cp, path, sec, cls) if cp.has_section(sec) else {}
        nested[sec] = _build(cls, vals, path, sec)
    top = {}
    if cp.has_section("pipeline"):
        top = _section_values(cp, path, "pipeline", PipelineConfig, skip=_NESTED)
    g = top.get("gripper")
    if g is not None and g not in BUNDLED and not os.path.isabs(g):
        top["gripper"] = os.path.join(base, g)
    config = _build(PipelineConfig, {**top, **nested}, path, "pipeline")
    exp = {"scenes": None, "variants": None, "seeds": None, "jobs": None}
    if cp.has_section("experiment"):
        for key in cp["experiment"]:
            if key not in _EXPERIMENT_KEYS:
                raise ConfigError(f"unknown key {key!r} in [experiment]", path, key_line(path, "experiment", key))
            raw = cp.get("experiment", key)
            line = key_line(path, "experiment", key)
            try:
                if key == "scenes":
                    exp[key] = [_scene_path(s, base) for s in raw.split()]
                elif key == "variants":
                    exp[key] = raw.split()
                    bad = [v for v in exp[key] if v not in VARIANTS]
                    if bad:
                        raise ConfigError(f"[experiment] unknown variant {bad[0]!r}", path, line)
                elif key == "seeds":
                    exp[key] = [int(s) for s in raw.replace(",", " ").split()]
                else:
                    exp[key] = int(raw)
            except ValueError:
                raise ConfigError(f"[experiment] {key}: cannot parse {raw!r}", path, line) from None
    return config, exp


def _section_line(path, section):
    try:
        with open(path) as fh:
            for i, line in enumerate(fh, 1):
                if line.strip() == f"[{section}]":
                    return i
    except OSError:
        pass
    return None


def _scene_path(spec, base):
    if ":" in spec or spec == "mug" or os.path.isabs(spec):
        return spec
    return os.path.join(base, spec)


def resolve_scene(spec):
    """(scene, camera) from a library spec, a mesh file or a scene file."""
    if str(spec).lower().endswith(SCENE_EXTENSIONS):
        return load_scene(spec)
    scene = object_library(spec)
    return scene, camera_for_scene(scene)


def slug(text):
    name = os.path.splitext(os.path.basename(text))[0] if os.sep in text else text
    return re.sub(r"[^A-Za-z0-9.-]+", "_", name).strip("_") or "scene"


def _group(spec, seed, variants, config):
    scene, cam = resolve_scene(spec)
    cache = {}
    return [run(scene, replace(config, variant=v, seed=seed), cam, cache) for v in variants]


def run_name(report):
    return f"{slug(report.scene)}__{report.variant}__s{report.seed}"


def write_run(report, out_dir):
    """runs/<name>.json, meshes/<name>.obj and clouds/<name>.ply (fused cloud)."""
    name = run_name(report)
    for sub in ("runs", "meshes", "clouds"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    with open(os.path.join(out_dir, "runs", name + ".json"), "w") as fh:
        json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
    if report.final_mesh is not None:
        write_obj(report.final_mesh, os.path.join(out_dir, "meshes", name + ".obj"))
    if len(report.cloud):
        write_cloud_ply(report.cloud, os.path.join(out_dir, "clouds", name + ".ply"))
    if len(report.free_space):
        write_cloud_ply(report.free_space, os.path.join(out_dir, "clouds", name + ".free-space.ply"))
    return name


def iteration_rows(reports):
    """One row per (object, variant, seed, iteration); iteration 0 is the initial completion."""
    rows = []
    for rep in reports:
        key = {"object": rep.scene, "variant": rep.variant, "seed": rep.seed}
        if rep.initial_metrics is not None:
            rows.append({**key, "iteration": 0, "success": "", "failure_kind": "",
                         **{m: getattr(rep.initial_metrics, m) for m in REPORT_FIELDS}})
        for r in rep.records:
            met = {m: (getattr(r.metrics, m) if r.metrics is not None else "") for m in REPORT_FIELDS}
            rows.append({**key, "iteration": r.iteration, "success": int(r.success),
                         "failure_kind": r.failure_kind or "", **met})
    return rows


def final_rows(reports):
    """Per-run summary rows over completed runs (no typed error)."""
    rows = []
    for rep in reports:
        if rep.error is not None or rep.final_metrics is None:
            continue
        fm = rep.final_metrics
        rows.append({"object": rep.scene, "variant": rep.variant, "seed": rep.seed,
                     "grasped": int(rep.grasped), "attempts": rep.attempts,
                     "initial_chamfer": rep.initial_metrics.chamfer,
                     **{m: getattr(fm, m) for m in REPORT_FIELDS}})
    return rows


AGGREGATE_FIELDS = ["object", "variant", "n_runs", "n_completed", "gsr", "attempts_mean"] + [
    f"{m}_{s}" for m in REPORT_FIELDS for s in ("mean", "std")
]


def aggregate_rows(reports, rows):
    out = []
    keys = []
    for rep in reports:
        if (rep.scene, rep.variant) not in keys:
            keys.append((rep.scene, rep.variant))
    for obj, var in keys:
        mine = [r for r in rows if r["object"] == obj and r["variant"] == var]
        n_runs = sum(1 for rep in reports if rep.scene == obj and rep.variant == var)
        row = {"object": obj, "variant": var, "n_runs": n_runs, "n_completed": len(mine)}
        grasped = [r for r in mine if r["grasped"]]
        row["gsr"] = gsr([bool(r["grasped"]) for r in mine]) if mine else float("nan")
        row["attempts_mean"] = float(np.mean([r["attempts"] for r in grasped])) if grasped else float("nan")
        for m in REPORT_FIELDS:
            vals = np.array([r[m] for r in mine], float)
            row[f"{m}_mean"] = float(vals.mean()) if len(vals) else float("nan")
            row[f"{m}_std"] = float(vals.std()) if len(vals) else float("nan")
        out.append(row)
    return out


def pairwise_tests(rows, variants, metrics=("chamfer", "hausdorff", "jaccard", "f1")):
    """Wilcoxon signed-rank between every pair of variants, paired on (object, seed)."""
    out = {}
    for a, b in itertools.combinations(variants, 2):
        ra = {(r["object"], r["seed"]): r for r in rows if r["variant"] == a}
        rb = {(r["object"], r["seed"]): r for r in rows if r["variant"] == b}
        common = sorted(set(ra) & set(rb), key=str)
        entry = {"n_pairs": len(common)}
        for m in metrics:
            x = np.array([ra[k][m] for k in common], float)
            y = np.array([rb[k][m] for k in common], float)
            res = {"mean_a": float(x.mean()) if len(x) else None, "mean_b": float(y.mean()) if len(y) else None}
            try:
                p, w = wilcoxon_signed_rank(x, y, return_statistic=True)
                res.update(p=p, w_plus=w)
            except InsufficientPairsError as exc:
                res["error"] = str(exc)
            if len(x) and res["mean_b"]:
                res["relative_change"] = (res["mean_a"] - res["mean_b"]) / res["mean_b"]
            entry[m] = res
        out[f"{a} vs {b}"] = entry
    return out


def run_experiment(scenes, variants, seeds, out_dir, config=PipelineConfig(), n_jobs=1):
    """Full factorial (scene x variant x seed) over the pipeline.

    The initial completion is shared between the variants of one (scene, seed).
    Runs that end in a typed error are kept in runs/ but left out of the
    aggregates. Returns a dict with the reports, aggregate rows and stats.
    """
    scenes, variants, seeds = list(scenes), list(variants), list(seeds)
    if not scenes or not variants or not seeds:
        raise ValueError("scenes, variants and seeds must be non-empty")
    bad = [v for v in variants if v not in VARIANTS]
    if bad:
        raise ValueError(f"unknown variant {bad[0]!r}")
    jobs = [(s, seed) for s in scenes for seed in seeds]
    if n_jobs == 1:
        groups = [_group(s, seed, variants, config) for s, seed in jobs]
    else:
        groups = Parallel(n_jobs=n_jobs)(delayed(_group)(s, seed, variants, config) for s, seed in jobs)
    by_key = {}
    for (s, seed), grp in zip(jobs, groups):
        for rep in grp:
            by_key[(s, rep.variant, seed)] = rep
    # scene-major, then variant, then seed
    reports = [by_key[(s, v, seed)] for s in scenes for v in variants for seed in seeds]
    return write_experiment(reports, variants, out_dir, config)


def write_experiment(reports, variants, out_dir, config):
    os.makedirs(out_dir, exist_ok=True)
    for rep in reports:
        write_run(rep, out_dir)
    rows = final_rows(reports)
    agg = aggregate_rows(reports, rows)
    write_rows_csv(agg, os.path.join(out_dir, "aggregate.csv"), AGGREGATE_FIELDS)
    write_rows_csv(iteration_rows(reports), os.path.join(out_dir, "metrics.csv"))
    stats = {
        "variants": aggregate(rows, REPORT_FIELDS + ["attempts", "grasped"], by="variant", unit="object") if rows else {},
        "pairwise": pairwise_tests(rows, list(variants)),
        "runs": len(reports),
        "completed": len(rows),
        "errors": {run_name(r): r.error_kind for r in reports if r.error is not None},
        "config": config.as_dict(),
    }
    write_json(_clean(stats), os.path.join(out_dir, "stats.json"))
    return {"reports": reports, "aggregate": agg, "stats": stats, "rows": rows}


def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_clean(v) for v in x]
    if isinstance(x, float) and not np.isfinite(x):
        return None
    return x


def read_aggregate(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
