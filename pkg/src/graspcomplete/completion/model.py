"""Softplus MLP signed-distance model with input normalization and a latent code."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from ..errors import GeometryError

MAGIC = b"SGIM"
FORMAT_VERSION = 1


@dataclass(eq=False)
class ImplicitModel:
    """f(x) = scale * W_L h(x_n, z) + b_L with x_n = (x - center) / scale.

    Hidden layers use softplus with sharpness ``beta``; the output bias is in
    meters, so ``f`` is a signed distance estimate in world units and its
    input gradient is unaffected by the normalization.
    """

    weights: list
    biases: list
    latent: np.ndarray
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0
    beta: float = 100.0
    final_loss: float = float("nan")

    def __post_init__(self):
        self.weights = [np.asarray(w, np.float64) for w in self.weights]
        self.biases = [np.asarray(b, np.float64).reshape(-1) for b in self.biases]
        self.latent = np.asarray(self.latent, np.float64).reshape(-1)
        self.center = np.asarray(self.center, np.float64).reshape(3)
        self.scale = float(self.scale)
        if self.weights[0].shape[1] != 3 + len(self.latent):
            raise ValueError("first layer input width must be 3 + latent length")
        for a, b in zip(self.weights[:-1], self.weights[1:]):
            if b.shape[1] != a.shape[0]:
                raise ValueError("layer sizes do not chain")
        if self.weights[-1].shape[0] != 1:
            raise ValueError("output layer must have width 1")
        params = self.weights + self.biases + [self.latent]
        if not all(np.all(np.isfinite(p)) for p in params):
            raise ValueError("non-finite parameters")

    @property
    def layer_sizes(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @classmethod
    def initialize(cls, hidden=(64, 64, 64, 64), latent_size=8, center=(0, 0, 0), scale=1.0,
                   radius=0.5, beta=100.0, seed=0):
        """Geometric initialization: f is close to |x_n| - radius (times scale)."""
        rng = np.random.default_rng(seed)
        sizes = [3 + latent_size, *hidden, 1]
        weights, biases = [], []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            if i == len(sizes) - 2:
                w = rng.normal(np.sqrt(np.pi) / np.sqrt(n_in), 1e-4, size=(n_out, n_in))
                b = np.array([-radius * scale])
            else:
                w = rng.normal(0.0, np.sqrt(2.0) / np.sqrt(n_out), size=(n_out, n_in))
                if i == 0 and latent_size:
                    w[:, 3:] = 0.0
                b = np.zeros(n_out)
            weights.append(w)
            biases.append(b)
        latent = rng.normal(0.0, 1e-2, size=latent_size)
        return cls(weights, biases, latent, np.asarray(center, float), scale, beta)

    @classmethod
    def linear(cls, a, b):
        """f(x) = a . x + b; handy for exact-gradient checks."""
        return cls([np.asarray(a, float).reshape(1, 3)], [np.array([b], float)], np.zeros(0))

    def copy(self):
        return replace(
            self,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            latent=self.latent.copy(),
            center=self.center.copy(),
        )

    # -- parameters as a flat list, in a fixed order --------------------------
    def parameters(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        out.append(self.latent)
        return out

    def with_parameters(self, params):
        params = [np.asarray(p, np.float64) for p in params]
        n = len(self.weights)
        return replace(
            self,
            weights=[params[2 * i] for i in range(n)],
            biases=[params[2 * i + 1] for i in range(n)],
            latent=params[-1],
        )

    def torch_parameters(self, requires_grad=True):
        return [torch.tensor(p, dtype=torch.float64, requires_grad=requires_grad) for p in self.parameters()]

    # -- evaluation -----------------------------------------------------------
    def _check(self, x):
        x = np.asarray(x, np.float64)
        single = x.ndim == 1
        x = x.reshape(-1, 3)
        if not np.all(np.isfinite(x)):
            raise GeometryError("non-finite input")
        return x, single

    def eval_f(self, x, chunk=65536):
        """Signed distance estimate at one point (float) or many (array)."""
        x, single = self._check(x)
        params = self.torch_parameters(requires_grad=False)
        out = []
        with torch.no_grad():
            for s in range(0, len(x), chunk):
                xt = torch.tensor(x[s : s + chunk])
                out.append(forward(params, xt, self.center, self.scale, self.beta).numpy())
        vals = np.concatenate(out) if out else np.zeros(0)
        return float(vals[0]) if single else vals

    def grad_f(self, x, chunk=65536):
        """Analytic input gradient via reverse-mode differentiation."""
        x, single = self._check(x)
        params = self.torch_parameters(requires_grad=False)
        out = []
        for s in range(0, len(x), chunk):
            xt = torch.tensor(x[s : s + chunk], requires_grad=True)
            f = forward(params, xt, self.center, self.scale, self.beta)
            (g,) = torch.autograd.grad(f.sum(), xt)
            out.append(g.numpy())
        g = np.concatenate(out) if out else np.zeros((0, 3))
        return g[0] if single else g

    # -- serialization ----------------------------------------------------------
    def to_bytes(self):
        sizes = self.layer_sizes
        head = MAGIC + struct.pack(
            "<IdIdI", FORMAT_VERSION, self.beta, len(self.latent), self.scale, len(sizes)
        )
        head += struct.pack(f"<{len(sizes)}I", *sizes)
        head += struct.pack("<3d", *self.center)
        body = b"".join(
            np.ascontiguousarray(w, "<f8").tobytes() + np.ascontiguousarray(b, "<f8").tobytes()
            for w, b in zip(self.weights, self.biases)
        )
        return head + body + np.ascontiguousarray(self.latent, "<f8").tobytes()

    @classmethod
    def from_bytes(cls, data):
        if data[:4] != MAGIC:
            raise ValueError("not an implicit model file (bad magic)")
        off = 4
        version, beta, latent_len, scale, n_sizes = struct.unpack_from("<IdIdI", data, off)
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {version}")
        off += struct.calcsize("<IdIdI")
        sizes = struct.unpack_from(f"<{n_sizes}I", data, off)
        off += 4 * n_sizes
        center = struct.unpack_from("<3d", data, off)
        off += 24
        weights, biases = [], []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            w = np.frombuffer(data, "<f8", n_in * n_out, off).reshape(n_out, n_in)
            off += 8 * n_in * n_out
            b = np.frombuffer(data, "<f8", n_out, off)
            off += 8 * n_out
            weights.append(w.copy())
            biases.append(b.copy())
        latent = np.frombuffer(data, "<f8", latent_len, off).copy()
        return cls(weights, biases, latent, np.array(center), scale, beta)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def forward(params, x, center, scale, beta):
    """Differentiable evaluation of f at points x (n, 3) given a flat parameter list."""
    n_layers = (len(params) - 1) // 2
    z = params[-1]
    h = (x - torch.as_tensor(center, dtype=x.dtype)) / scale
    if z.numel():
        h = torch.cat([h, z.expand(h.shape[0], z.numel())], dim=1)
    for i in range(n_layers - 1):
        h = torch.nn.functional.softplus(h @ params[2 * i].T + params[2 * i + 1], beta=beta)
    w, b = params[2 * (n_layers - 1)], params[2 * (n_layers - 1) + 1]
    return scale * (h @ w.T).squeeze(-1) + b
