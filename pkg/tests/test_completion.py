import warnings

import numpy as np
import pytest
import torch
from sklearn.base import clone

from graspcomplete.completion import (
    CompletionProblem,
    FitConfig,
    ImplicitModel,
    ImplicitSurfaceEstimator,
    SurfaceClippedWarning,
    eval_f,
    extract_mesh,
    fit,
    grad_f,
    padded_domain,
)
from graspcomplete.completion.fit import Batch, loss_terms
from graspcomplete.errors import FitDivergedError, GeometryError, NoSurfaceError
from graspcomplete.geometry.types import FreeSpaceSet, OrientedPointCloud

from oracles import field_probe, param_probe, rel_err


def sphere_cloud(n=2000, r=1.0, seed=0):
    d = np.random.default_rng(seed).normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return OrientedPointCloud(r * d, d)


@pytest.fixture(scope="module")
def short_sphere_fit():
    problem = CompletionProblem.from_data(sphere_cloud())
    return problem, fit(problem, FitConfig(iterations=400, seed=0))


def test_zero_output_layer_is_constant():
    m = ImplicitModel.initialize((8, 8), 2, seed=0)
    m.weights[-1][:] = 0.0
    x = np.random.default_rng(0).normal(size=(20, 3))
    assert np.all(m.eval_f(x) == m.biases[-1][0])


def test_linear_model_gradient_is_exact():
    m = ImplicitModel.linear([0.3, -1.2, 2.0], 0.5)
    assert np.array_equal(grad_f(m, np.array([1.0, 2.0, 3.0])), np.array([0.3, -1.2, 2.0]))
    assert eval_f(m, np.zeros(3)) == 0.5


@pytest.mark.parametrize("seed", range(100))
def test_field_gradient_matches_finite_differences(seed):
    assert rel_err(*field_probe(seed)) <= 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_parameter_gradients_match_finite_differences(seed):
    assert rel_err(*param_probe(seed)) <= 1e-4


def test_exact_plane_sdf_has_zero_loss():
    m = ImplicitModel.linear([0.0, 0.0, 1.0], 0.0)
    rng = np.random.default_rng(0)
    surf = np.column_stack([rng.uniform(-1, 1, (50, 2)), np.zeros(50)])
    batch = Batch(surf, np.tile([0.0, 0, 1], (50, 1)), rng.uniform(-1, 1, (50, 3)), np.zeros((0, 3)))
    _, terms = loss_terms(m.torch_parameters(), batch, m, FitConfig())
    for k in ("surface", "normal", "eikonal", "free_space"):
        assert float(terms[k].detach()) <= 1e-9


def test_inactive_free_space_hinge():
    m = ImplicitModel.linear([0.0, 0.0, 1.0], 0.0)
    batch = Batch(np.zeros((1, 3)), np.array([[0.0, 0, 1]]), np.zeros((1, 3)), np.array([[0.0, 0, 0.1]]))
    _, terms = loss_terms(m.torch_parameters(), batch, m, FitConfig())
    assert float(terms["free_space"].detach()) == 0.0


def test_serialization_round_trip(tmp_path):
    m = ImplicitModel.initialize((8, 4), 3, center=(1, 2, 3), scale=0.2, seed=5)
    m.save(tmp_path / "m.sgim")
    back = ImplicitModel.load(tmp_path / "m.sgim")
    assert all(np.array_equal(a, b) for a, b in zip(m.parameters(), back.parameters()))
    assert np.array_equal(back.center, m.center) and back.scale == m.scale
    with pytest.raises(ValueError):
        ImplicitModel.from_bytes(b"XXXX" + m.to_bytes()[4:])


def test_non_finite_input_rejected():
    m = ImplicitModel.initialize((4,), 0, seed=0)
    with pytest.raises(GeometryError):
        m.eval_f(np.array([np.nan, 0, 0]))


def test_problem_validation():
    with pytest.raises(GeometryError):
        CompletionProblem.from_data(OrientedPointCloud(np.zeros((0, 3)), np.zeros((0, 3))))
    with pytest.raises(GeometryError):
        CompletionProblem.from_data(OrientedPointCloud(np.zeros((3, 3))))
    c = sphere_cloud(50)
    p = CompletionProblem.from_data(c, FreeSpaceSet(np.array([[100.0, 0, 0], [1.1, 0, 0]])))
    assert len(p.free_space) == 1
    lo, hi = padded_domain(c.points)
    assert np.all(hi - lo > 2.0)


def test_config_validation():
    with pytest.raises(ValueError):
        FitConfig(step_size=0)
    with pytest.raises(ValueError):
        FitConfig(iterations=-1)


def test_fit_is_deterministic():
    problem = CompletionProblem.from_data(sphere_cloud(300))
    cfg = FitConfig(iterations=15, seed=3)
    traj = [[], []]
    for k in range(2):
        fit(problem, cfg, callback=lambda it, p, k=k: traj[k].append(np.concatenate([q.ravel() for q in p])))
    assert all(np.array_equal(a, b) for a, b in zip(*traj))


def test_fit_divergence_is_reported():
    problem = CompletionProblem.from_data(sphere_cloud(300))
    with pytest.raises(FitDivergedError) as info:
        fit(problem, FitConfig(iterations=50, step_size=1e300))
    assert info.value.iteration >= 0


def test_short_sphere_fit_signs(short_sphere_fit):
    problem, model = short_sphere_fit
    assert model.eval_f(np.zeros(3)) < 0
    assert model.eval_f(np.array([0.0, 0, 2.0])) > 0
    pts = problem.surface.points[:200]
    assert np.mean(np.abs(model.eval_f(pts))) <= 0.02


def test_extract_mesh_errors_and_warning(short_sphere_fit):
    problem, model = short_sphere_fit
    with pytest.raises(NoSurfaceError):
        extract_mesh(lambda p: np.ones(len(p)), problem.domain, 16)
    with pytest.raises(ValueError):
        extract_mesh(model, problem.domain, 4)
    with pytest.warns(SurfaceClippedWarning):
        extract_mesh(lambda p: np.linalg.norm(p, axis=1) - 5.0, problem.domain, 16)


def test_estimator_api():
    est = ImplicitSurfaceEstimator(iterations=30, resolution=24)
    params = est.get_params()
    assert params["iterations"] == 30 and clone(est).get_params() == params
    c = sphere_cloud(400)
    X = np.hstack([c.points, c.normals])
    est.fit(X)
    assert est.predict(np.zeros((1, 3))).dtype == bool
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SurfaceClippedWarning)
        mesh = est.transform()
    assert mesh.is_watertight
    with pytest.raises(ValueError):
        est.fit(c.points)
    with pytest.raises(Exception):
        ImplicitSurfaceEstimator().predict(np.zeros((1, 3)))


def test_torch_defaults_untouched():
    # the package works in float64 without changing global torch state
    assert torch.get_default_dtype() == torch.float32
