from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ..geometry.types import FreeSpaceSet, OrientedPointCloud
from .fit import CompletionProblem, FitConfig, extract_mesh, fit


class ImplicitSurfaceEstimator(BaseEstimator):
    """Fits an implicit surface to an oriented cloud.

    ``fit`` takes either an OrientedPointCloud or an (n, 6) array of points
    and unit normals. ``decision_function`` returns signed distances,
    ``predict`` returns inside/outside, ``transform`` returns the mesh.
    """

    def __init__(self, iterations=2000, step_size=1e-3, surface_batch=512, eikonal_batch=512,
                 free_space_batch=256, lambda_eik=0.1, lambda_fs=1.0, lambda_z=1e-3,
                 padding=0.2, resolution=64, seed=0):
        self.iterations = iterations
        self.step_size = step_size
        self.surface_batch = surface_batch
        self.eikonal_batch = eikonal_batch
        self.free_space_batch = free_space_batch
        self.lambda_eik = lambda_eik
        self.lambda_fs = lambda_fs
        self.lambda_z = lambda_z
        self.padding = padding
        self.resolution = resolution
        self.seed = seed

    def _config(self):
        return FitConfig(
            self.iterations, self.step_size, self.surface_batch, self.eikonal_batch,
            self.free_space_batch, self.lambda_eik, self.lambda_fs, self.lambda_z, self.seed,
        )

    def fit(self, X, y=None, free_space=None, warm_start=None):
        if not isinstance(X, OrientedPointCloud):
            X = check_array(X, dtype=np.float64)
            if X.shape[1] != 6:
                raise ValueError("expected (n, 6) array of points and normals")
            X = OrientedPointCloud(X[:, :3], X[:, 3:])
        if free_space is not None and not isinstance(free_space, FreeSpaceSet):
            free_space = FreeSpaceSet(check_array(free_space, dtype=np.float64))
        self.problem_ = CompletionProblem.from_data(X, free_space, self.padding)
        self.telemetry_ = []
        self.model_ = fit(self.problem_, self._config(), init=warm_start, telemetry=self.telemetry_)
        self.mesh_ = None
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return self.model_.eval_f(check_array(X, dtype=np.float64))

    def predict(self, X):
        return self.decision_function(X) < 0

    def transform(self, X=None):
        """Extracted zero-set mesh over the fit domain (X is ignored)."""
        check_is_fitted(self, "model_")
        if self.mesh_ is None:
            self.mesh_, self.boundary_touched_ = extract_mesh(
                self.model_, self.problem_.domain, self.resolution, return_touches=True
            )
        return self.mesh_
