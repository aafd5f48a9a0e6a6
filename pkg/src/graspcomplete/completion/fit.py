"""Per-object implicit surface fitting and zero-set extraction."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, fields

import numpy as np
import torch
from scipy.spatial import cKDTree

from ..errors import FitDivergedError, GeometryError
from ..geometry.marching import contour_function
from ..geometry.types import FreeSpaceSet, OrientedPointCloud
from .model import ImplicitModel, forward

TERMS = ("surface", "normal", "eikonal", "latent", "free_space")


class SurfaceClippedWarning(UserWarning):
    """The zero set reaches the extraction box; the mesh was capped there."""


def padded_domain(points, padding=0.2):
    """Axis-aligned cube around ``points`` with ``padding`` times the largest extent on every side."""
    pts = np.asarray(points, float).reshape(-1, 3)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    ext = max(float((hi - lo).max()), 1e-3)
    half = ext / 2 + padding * ext
    c = (lo + hi) / 2
    return c - half, c + half


@dataclass(frozen=True, eq=False)
class CompletionProblem:
    surface: OrientedPointCloud
    free_space: FreeSpaceSet
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        if len(self.surface) == 0:
            raise GeometryError("empty surface cloud")
        if not self.surface.has_normals:
            raise GeometryError("surface cloud needs normals")
        lo = np.asarray(self.lo, float)
        hi = np.asarray(self.hi, float)
        if np.any(hi <= lo):
            raise GeometryError("empty domain")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        inside = lambda p: np.all((p >= lo) & (p <= hi), axis=1)
        if not np.all(inside(self.surface.points)):
            raise GeometryError("surface points outside the domain")
        fs = self.free_space.points
        if len(fs) and not np.all(inside(fs)):
            raise GeometryError("free-space points outside the domain")

    @classmethod
    def from_data(cls, surface, free_space=None, padding=0.2, domain=None):
        """Builds the domain from the surface cloud; free-space points outside it are dropped."""
        if len(surface) == 0:
            raise GeometryError("empty surface cloud")
        lo, hi = padded_domain(surface.points, padding) if domain is None else map(np.asarray, domain)
        fs = np.zeros((0, 3)) if free_space is None else free_space.points
        keep = np.all((fs >= lo) & (fs <= hi), axis=1)
        return cls(surface, FreeSpaceSet(fs[keep]), lo, hi)

    @property
    def domain(self):
        return self.lo, self.hi

    @property
    def center(self):
        return (self.lo + self.hi) / 2

    @property
    def half_size(self):
        return float((self.hi - self.lo).max() / 2)


@dataclass(frozen=True)
class FitConfig:
    iterations: int = 2000
    step_size: float = 1e-3
    surface_batch: int = 512
    eikonal_batch: int = 512
    free_space_batch: int = 256
    lambda_eik: float = 0.1
    lambda_fs: float = 1.0
    lambda_z: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "seed":
                continue
            if f.name == "lambda_z":
                if v < 0:
                    raise ValueError("lambda_z must be >= 0")
            elif f.name == "iterations":
                if v < 0:
                    raise ValueError("iterations must be >= 0")
            elif not v > 0:
                raise ValueError(f"{f.name} must be positive")


def local_sigma(points, k=50):
    """Distance from each point to its k-th nearest neighbour (itself excluded)."""
    n = len(points)
    if n < 2:
        return np.full(n, 1e-2)
    k = min(k, n - 1)
    d, _ = cKDTree(points).query(points, k=k + 1)
    return np.maximum(d[:, -1], 1e-6)


@dataclass(frozen=True)
class Batch:
    surface: np.ndarray
    normals: np.ndarray
    eikonal: np.ndarray
    free_space: np.ndarray


def draw_batch(problem, config, rng, sigma=None):
    pts = problem.surface.points
    if sigma is None:
        sigma = local_sigma(pts)
    si = rng.integers(0, len(pts), config.surface_batch)
    n_uni = config.eikonal_batch // 2
    uni = rng.uniform(problem.lo, problem.hi, size=(n_uni, 3))
    gi = rng.integers(0, len(pts), config.eikonal_batch - n_uni)
    gauss = pts[gi] + rng.normal(size=(len(gi), 3)) * sigma[gi, None]
    fs = problem.free_space.points
    if len(fs):
        fs = fs[rng.integers(0, len(fs), config.free_space_batch)]
    return Batch(pts[si], problem.surface.normals[si], np.concatenate([uni, gauss]), fs)


def _leaf(a, requires_grad=True):
    # tensors passed in by the caller are used as-is so their gradients can be read back
    if isinstance(a, torch.Tensor):
        return a
    return torch.tensor(a, requires_grad=requires_grad)


def loss_terms(params, batch, model, config):
    """Loss terms as torch scalars, differentiable with respect to ``params``."""
    c, s, beta = model.center, model.scale, model.beta
    if len(batch.surface) == 0:
        raise GeometryError("empty surface batch")
    xs = _leaf(batch.surface)
    fx = forward(params, xs, c, s, beta)
    (gs,) = torch.autograd.grad(fx.sum(), xs, create_graph=True)
    normals = torch.tensor(batch.normals)
    out = {
        "surface": fx.abs().mean(),
        "normal": torch.linalg.vector_norm(gs - normals, dim=1).mean(),
    }
    xe = _leaf(batch.eikonal)
    fe = forward(params, xe, c, s, beta)
    (ge,) = torch.autograd.grad(fe.sum(), xe, create_graph=True)
    out["eikonal"] = ((torch.linalg.vector_norm(ge, dim=1) - 1.0) ** 2).mean()
    z = params[-1]
    out["latent"] = torch.linalg.vector_norm(z) if z.numel() else torch.zeros((), dtype=torch.float64)
    if len(batch.free_space):
        ff = forward(params, _leaf(batch.free_space, False), c, s, beta)
        out["free_space"] = torch.clamp(-ff, min=0.0).mean()
    else:
        out["free_space"] = torch.zeros((), dtype=torch.float64)
    total = (
        out["surface"]
        + out["normal"]
        + config.lambda_eik * out["eikonal"]
        + config.lambda_z * out["latent"]
        + config.lambda_fs * out["free_space"]
    )
    return total, out


def loss_and_gradients(model, problem, config, batch_seed=0, batch=None):
    """Total loss and its exact parameter gradients for one sampled batch.

    Gradients come back in ``model.parameters()`` order.
    """
    if batch is None:
        batch = draw_batch(problem, config, np.random.default_rng(batch_seed))
    params = model.torch_parameters()
    total, _ = loss_terms(params, batch, model, config)
    grads = torch.autograd.grad(total, params, allow_unused=True)
    grads = [np.zeros(p.shape) if g is None else g.detach().numpy() for g, p in zip(grads, params)]
    return float(total.detach()), grads


def loss_input_gradients(model, batch, config):
    """Total loss and its gradients with respect to the batch sample positions.

    Returns (loss, {"surface", "eikonal", "free_space"} -> (n, 3) arrays). The
    surface and eikonal parts differentiate through the spatial gradient of f.
    """
    pts = {k: torch.tensor(getattr(batch, k), requires_grad=True) for k in ("surface", "eikonal", "free_space")}
    b = Batch(pts["surface"], batch.normals, pts["eikonal"], pts["free_space"] if len(batch.free_space) else batch.free_space)
    total, _ = loss_terms(model.torch_parameters(requires_grad=False), b, model, config)
    leaves = [pts[k] for k in pts if k != "free_space" or len(batch.free_space)]
    grads = torch.autograd.grad(total, leaves, allow_unused=True)
    out = {k: np.zeros(getattr(batch, k).shape) for k in pts}
    for k, g in zip([k for k in pts if k != "free_space" or len(batch.free_space)], grads):
        if g is not None:
            out[k] = g.detach().numpy()
    return float(total.detach()), out


def init_model_for(problem, seed=0, hidden=(64, 64, 64, 64), latent_size=8, radius=0.5):
    return ImplicitModel.initialize(
        hidden=hidden, latent_size=latent_size, center=problem.center,
        scale=problem.half_size, radius=radius, seed=seed,
    )


def fit(problem, config=FitConfig(), init=None, telemetry=None, callback=None):
    """Adam on the full loss for ``config.iterations`` steps.

    ``init`` warm-starts from an existing model (its normalization is kept).
    ``telemetry`` (a list) receives one row per iteration: (iteration, total, *TERMS).
    ``callback(iteration, model_params)`` sees the parameters after each step.
    """
    model = init if init is not None else init_model_for(problem, seed=config.seed)
    rng = np.random.default_rng(config.seed)
    sigma = local_sigma(problem.surface.points)
    params = model.torch_parameters()
    opt = torch.optim.Adam(params, lr=config.step_size)
    loss = float("nan")
    for it in range(config.iterations):
        batch = draw_batch(problem, config, rng, sigma)
        opt.zero_grad()
        total, terms = loss_terms(params, batch, model, config)
        loss = float(total.detach())
        if not np.isfinite(loss):
            raise FitDivergedError(it, loss)
        total.backward()
        opt.step()
        if telemetry is not None:
            telemetry.append((it, loss, *(float(terms[k].detach()) for k in TERMS)))
        if callback is not None:
            callback(it, [p.detach().numpy() for p in params])
    out = model.with_parameters([p.detach().numpy().copy() for p in params])
    if not all(np.all(np.isfinite(p)) for p in out.parameters()):
        raise FitDivergedError(config.iterations, loss)
    out.final_loss = loss
    return out


def write_telemetry_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "total", *TERMS])
        for r in rows:
            w.writerow([r[0], *(repr(float(v)) for v in r[1:])])


def extract_mesh(model_or_fn, domain, resolution=64, return_touches=False):
    """Marching cubes on the zero set of a model (or any batched field ``fn``).

    When the zero set reaches the domain box a SurfaceClippedWarning is issued
    and the mesh is capped at the box.
    """
    if resolution < 8:
        raise ValueError("resolution must be >= 8")
    fn = model_or_fn.eval_f if hasattr(model_or_fn, "eval_f") else model_or_fn
    lo, hi = (np.asarray(a, float) for a in domain)
    mesh, touches = contour_function(fn, lo, hi, resolution)
    if touches:
        warnings.warn("zero set touches the domain boundary", SurfaceClippedWarning, stacklevel=2)
    return (mesh, touches) if return_touches else mesh
