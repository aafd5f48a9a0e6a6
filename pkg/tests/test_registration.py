import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation
from sklearn.base import clone

from graspcomplete.errors import DegenerateAlignmentError
from graspcomplete.geometry.primitives import cylinder
from graspcomplete.geometry.sampling import sample_surface
from graspcomplete.geometry.types import RigidTransform
from graspcomplete.registration import IcpConfig, IcpRegistration, icp_align, kabsch, write_rmse_csv


@pytest.fixture(scope="module")
def cloud():
    return sample_surface(cylinder(0.03, 0.1), 500, seed=3).points


def point_rmse(A, B, pts):
    return float(np.sqrt(np.mean(np.sum((A.apply(pts) - B.apply(pts)) ** 2, axis=1))))


@given(st.integers(0, 2**31))
def test_kabsch_recovers_exact_transform(seed):
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(20, 3))
    R = Rotation.random(random_state=seed).as_matrix()
    t = rng.normal(size=3)
    R2, t2 = kabsch(P, P @ R.T + t)
    assert np.allclose(R2, R, atol=1e-9) and np.allclose(t2, t, atol=1e-9)
    assert np.linalg.det(R2) > 0


def test_kabsch_reflection_is_corrected():
    P = np.random.default_rng(0).normal(size=(10, 3))
    Q = P * np.array([1.0, 1.0, -1.0])
    R, _ = kabsch(P, Q)
    assert np.isclose(np.linalg.det(R), 1.0)


def test_kabsch_degenerate():
    with pytest.raises(DegenerateAlignmentError):
        kabsch(np.zeros((2, 3)), np.zeros((2, 3)))
    line = np.outer(np.arange(5.0), [1, 0, 0])
    with pytest.raises(DegenerateAlignmentError):
        kabsch(line, line)


def test_identity_alignment(cloud):
    res = icp_align(cloud, cloud)
    assert res.rmse <= 1e-12 and res.iterations == 1
    assert np.allclose(res.transform.matrix, np.eye(3)) and np.allclose(res.transform.translation, 0)


def test_known_rotation_and_shift(cloud):
    T = RigidTransform.from_rotvec([0, 0, np.radians(15)], [0.02, 0, 0])
    res = icp_align(cloud, T.apply(cloud))
    assert point_rmse(res.transform, T, cloud) <= 1e-3


def test_pure_translation(cloud):
    res = icp_align(cloud, cloud + [0.05, 0, 0], config=IcpConfig(rejection_distance=0.1))
    assert np.allclose(res.transform.translation, [0.05, 0, 0], atol=1e-6)
    assert res.transform.rotation_angle() <= 1e-6


def test_rmse_history_non_increasing(cloud, tmp_path):
    rng = np.random.default_rng(4)
    for _ in range(10):
        T = RigidTransform.from_rotvec(rng.normal(size=3) * 0.2, rng.uniform(-0.03, 0.03, 3))
        hist = []
        icp_align(cloud, T.apply(cloud), history=hist)
        assert all(b <= a for a, b in zip(hist, hist[1:]))
    write_rmse_csv(hist, tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().startswith("iteration,rmse")


def test_estimator_api(cloud):
    est = IcpRegistration(rejection_distance=0.1)
    assert clone(est).get_params()["rejection_distance"] == 0.1
    T = RigidTransform.from_translation([0.01, 0, 0])
    est.fit(cloud, T.apply(cloud))
    assert np.allclose(est.transform(cloud), T.apply(cloud), atol=1e-6)
    assert est.history_[-1] <= est.history_[0]
