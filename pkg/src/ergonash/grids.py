"""Discretizations of the flat torus and of a truncated velocity space."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid {0, h, ..., (n-1)h}^d on the unit torus, row-major node order."""

    d: int
    n: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ConfigurationError(f"torus dimension must be 1 or 2, got {self.d}")
        if self.n < 2:
            raise ConfigurationError(f"need at least 2 points per axis, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n ** self.d

    @cached_property
    def nodes(self) -> np.ndarray:
        """(size, d) array of node coordinates."""
        axes = [np.arange(self.n) * self.h] * self.d
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def flat_index(self, multi: np.ndarray) -> np.ndarray:
        """Row-major flat index of integer multi-indices (wrapped)."""
        multi = np.mod(np.asarray(multi), self.n)
        return np.ravel_multi_index(tuple(np.moveaxis(multi, -1, 0)), self.shape)

    def to_dict(self) -> dict:
        return {"d": self.d, "n": self.n}


@dataclass(frozen=True)
class VelocityGrid:
    """Box [-R, R]^d sampled with m points per axis; m odd so that 0 is a node."""

    R: float
    m: int
    d: int = 1

    def __post_init__(self):
        if self.R <= 0:
            raise ConfigurationError(f"velocity radius must be positive, got {self.R}")
        if self.m < 3 or self.m % 2 == 0:
            raise ConfigurationError(f"velocity points per axis must be odd and >= 3, got {self.m}")

    @property
    def hv(self) -> float:
        return 2.0 * self.R / (self.m - 1)

    @property
    def size(self) -> int:
        return self.m ** self.d

    @cached_property
    def axis(self) -> np.ndarray:
        # symmetric construction keeps +v and -v exact negatives of each other
        k = np.arange(self.m) - (self.m - 1) // 2
        return k * self.hv

    @cached_property
    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.axis] * self.d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @cached_property
    def on_boundary(self) -> np.ndarray:
        k = np.arange(self.m)
        edge = (k == 0) | (k == self.m - 1)
        mesh = np.meshgrid(*([edge] * self.d), indexing="ij")
        return np.logical_or.reduce([m.ravel() for m in mesh])

    @cached_property
    def zero_index(self) -> int:
        return int(np.flatnonzero(np.all(self.nodes == 0.0, axis=1))[0])

    def to_dict(self) -> dict:
        return {"R": self.R, "m": self.m, "d": self.d}


def torus_delta(a, b):
    """Componentwise signed torus displacement b - a folded into [-1/2, 1/2)."""
    return np.mod(np.asarray(b) - np.asarray(a) + 0.5, 1.0) - 0.5


def torus_distance(a, b):
    """Geodesic distance on the flat torus (Euclidean norm of folded displacements)."""
    delta = torus_delta(a, b)
    return np.sqrt(np.sum(delta * delta, axis=-1))


def periodic_interp(values: np.ndarray, grid: TorusGrid, x: np.ndarray) -> np.ndarray:
    """Multilinear periodic interpolation of a grid function at points x of shape (..., d)."""
    values = np.asarray(values).reshape(grid.shape)
    x = np.asarray(x, dtype=float)
    s = np.mod(x, 1.0) * grid.n
    i0 = np.floor(s).astype(int)
    frac = s - i0
    i0 = np.mod(i0, grid.n)
    out = np.zeros(x.shape[:-1])
    for corner in range(2 ** grid.d):
        w = np.ones(x.shape[:-1])
        idx = []
        for a in range(grid.d):
            bit = (corner >> a) & 1
            w = w * (frac[..., a] if bit else 1.0 - frac[..., a])
            idx.append(np.mod(i0[..., a] + bit, grid.n))
        out = out + w * values[tuple(idx)]
    return out


def interp_weights(grid: TorusGrid, x: np.ndarray):
    """Flat node indices and weights (each of shape (..., 2^d)) of the multilinear stencil."""
    x = np.asarray(x, dtype=float)
    s = np.mod(x, 1.0) * grid.n
    i0 = np.floor(s).astype(int)
    frac = s - i0
    idx_list, w_list = [], []
    for corner in range(2 ** grid.d):
        w = np.ones(x.shape[:-1])
        multi = []
        for a in range(grid.d):
            bit = (corner >> a) & 1
            w = w * (frac[..., a] if bit else 1.0 - frac[..., a])
            multi.append(np.mod(i0[..., a] + bit, grid.n))
        idx_list.append(np.ravel_multi_index(tuple(multi), grid.shape))
        w_list.append(w)
    return np.stack(idx_list, axis=-1), np.stack(w_list, axis=-1)


def central_gradient(values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Periodic central-difference gradient, shape (size, d)."""
    u = np.asarray(values).reshape(grid.shape)
    comps = [(np.roll(u, -1, axis=a) - np.roll(u, 1, axis=a)) / (2.0 * grid.h) for a in range(grid.d)]
    return np.stack([c.ravel() for c in comps], axis=-1)


def fourier_gradient(values: np.ndarray, grid: TorusGrid):
    """Return a callable x -> gradient of the trigonometric interpolant of a grid function.

    Exact for band-limited data such as the catalog's trigonometric potentials.
    """
    u = np.asarray(values, dtype=float).reshape(grid.shape)
    coef = np.fft.fftn(u) / grid.size
    freqs = np.fft.fftfreq(grid.n, d=1.0 / grid.n)
    kmesh = np.meshgrid(*([freqs] * grid.d), indexing="ij")
    # the Nyquist mode has no real-valued derivative; drop it
    keep = np.logical_and.reduce([np.abs(k) * 2 != grid.n for k in kmesh])
    ks = np.stack([k[keep] for k in kmesh], axis=-1)
    cs = coef[keep]

    def grad(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        phase = np.exp(2j * np.pi * x @ ks.T)
        return np.real((phase * cs) @ (2j * np.pi * ks))

    return grad
