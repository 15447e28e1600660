"""Closed catalog of Tonelli Lagrangians, their Hamiltonians and coupling functions.

Every Lagrangian has the split form

    L(x, v) = K(v) + 1 + U(x)

with a strictly convex kinetic part K, a constant offset 1 (so the lower Tonelli
bound holds with a concrete constant) and a trigonometric potential

    U(x) = a * sum_k (1 - cos 2 pi f (x_k - phase)) + w .

All entries are reversible, L(x, v) = L(x, -v).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, VelocityGridTooSmall
from .grids import TorusGrid, VelocityGrid

LAGRANGIAN_KINDS = ("quadratic", "anisotropic", "quartic")
COUPLING_KINDS = ("zero", "separable", "pairwise", "linear", "quadratic")

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class LagrangianSpec:
    kind: str = "quadratic"
    d: int = 1
    amplitude: float = 0.0
    phase: float = 0.0
    freq: int = 1
    offset: float = 0.0
    anisotropy: tuple = ()
    quartic: float = 0.0
    tonelli_constant: float = 4.0

    def __post_init__(self):
        if self.kind not in LAGRANGIAN_KINDS:
            raise ConfigurationError(f"unknown Lagrangian kind {self.kind!r}; expected one of {LAGRANGIAN_KINDS}")
        if self.d < 1:
            raise ConfigurationError("dimension must be positive")
        if self.amplitude < 0:
            raise ConfigurationError("potential amplitude must be >= 0")
        if self.tonelli_constant < 1:
            raise ConfigurationError("Tonelli constant must be >= 1")
        if self.freq < 1:
            raise ConfigurationError("potential frequency must be a positive integer")
        if self.kind == "anisotropic":
            A = self.matrix
            if A.shape != (self.d, self.d) or not np.allclose(A, A.T):
                raise ConfigurationError("anisotropy must be a symmetric d x d matrix")
            if np.linalg.eigvalsh(A).min() <= 0:
                raise ConfigurationError("anisotropy matrix must be positive definite")
        if self.kind == "quartic" and self.quartic < 0:
            raise ConfigurationError("quartic coefficient must be >= 0")

    @property
    def matrix(self) -> np.ndarray:
        if self.kind == "anisotropic":
            return np.atleast_2d(np.asarray(self.anisotropy, dtype=float))
        return np.eye(self.d)

    @property
    def curvature(self) -> float:
        """Lower bound of the smallest eigenvalue of D_vv L over all v."""
        return float(np.linalg.eigvalsh(self.matrix).min())

    def shifted(self, s: float) -> "LagrangianSpec":
        return LagrangianSpec(**{**self.__dict__, "offset": self.offset + s})


def _as_points(x, d):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != d:
        if d == 1:
            x = x[..., np.newaxis]
        else:
            raise ConfigurationError(f"expected trailing dimension {d}, got shape {x.shape}")
    return x


def potential(spec: LagrangianSpec, x) -> np.ndarray:
    x = _as_points(x, spec.d)
    arg = TWO_PI * spec.freq * (x - spec.phase)
    return spec.amplitude * np.sum(1.0 - np.cos(arg), axis=-1) + spec.offset


def potential_gradient(spec: LagrangianSpec, x) -> np.ndarray:
    x = _as_points(x, spec.d)
    arg = TWO_PI * spec.freq * (x - spec.phase)
    return spec.amplitude * TWO_PI * spec.freq * np.sin(arg)


def kinetic(spec: LagrangianSpec, v) -> np.ndarray:
    v = _as_points(v, spec.d)
    if spec.kind == "anisotropic":
        return 0.5 * np.einsum("...i,ij,...j->...", v, spec.matrix, v)
    sq = np.sum(v * v, axis=-1)
    if spec.kind == "quartic":
        return 0.5 * sq + 0.25 * spec.quartic * sq * sq
    return 0.5 * sq


def momentum(spec: LagrangianSpec, v) -> np.ndarray:
    """D_v L(x, v); independent of x for the whole catalog."""
    v = _as_points(v, spec.d)
    if spec.kind == "anisotropic":
        return v @ spec.matrix.T
    if spec.kind == "quartic":
        sq = np.sum(v * v, axis=-1, keepdims=True)
        return v * (1.0 + spec.quartic * sq)
    return v.copy()


def velocity_hessian(spec: LagrangianSpec, v) -> np.ndarray:
    v = _as_points(v, spec.d)
    eye = np.broadcast_to(np.eye(spec.d), v.shape[:-1] + (spec.d, spec.d))
    if spec.kind == "anisotropic":
        return np.broadcast_to(spec.matrix, v.shape[:-1] + (spec.d, spec.d)).copy()
    if spec.kind == "quartic":
        sq = np.sum(v * v, axis=-1)[..., None, None]
        outer = v[..., :, None] * v[..., None, :]
        return eye * (1.0 + spec.quartic * sq) + 2.0 * spec.quartic * outer
    return eye.copy()


def velocity_from_momentum(spec: LagrangianSpec, p) -> np.ndarray:
    """Invert p = D_v L(x, v)."""
    p = _as_points(p, spec.d)
    if spec.kind == "anisotropic":
        return p @ np.linalg.inv(spec.matrix).T
    if spec.kind == "quartic" and spec.quartic > 0:
        # v = s p with s (1 + q s^2 |p|^2) = 1; monotone scalar Newton on s
        pp = np.sum(p * p, axis=-1, keepdims=True)
        s = np.ones_like(pp)
        for _ in range(60):
            g = s + spec.quartic * pp * s ** 3 - 1.0
            s_new = s - g / (1.0 + 3.0 * spec.quartic * pp * s ** 2)
            if np.all(np.abs(s_new - s) <= 1e-15):
                s = s_new
                break
            s = s_new
        return s * p
    return p.copy()


def eval_lagrangian(spec: LagrangianSpec, x, v) -> np.ndarray:
    """L(x, v), broadcasting over leading axes; scalar inputs give a scalar."""
    scalar = np.ndim(x) == 0 and np.ndim(v) == 0
    out = kinetic(spec, v) + 1.0 + potential(spec, x)
    return float(out.reshape(-1)[0]) if scalar else out


def hamiltonian(spec: LagrangianSpec, x, p) -> np.ndarray:
    """Exact Legendre transform H(x, p) = <p, v*> - L(x, v*) with v* = (D_v L)^{-1}(p)."""
    p = _as_points(p, spec.d)
    v = velocity_from_momentum(spec, p)
    return np.sum(p * v, axis=-1) - kinetic(spec, v) - 1.0 - potential(spec, x)


@dataclass(frozen=True)
class HamiltonianView:
    """H = sup_v <p, v> - L(x, v) evaluated by search over a velocity grid."""

    spec: LagrangianSpec
    vgrid: VelocityGrid = field(default_factory=lambda: VelocityGrid(3.0, 33))


def legendre_transform(h: HamiltonianView, x, p):
    """Return (H(x, p), maximizing velocity) by grid search plus Newton polishing."""
    spec = h.spec
    p = np.asarray(p, dtype=float).reshape(spec.d)
    x = np.asarray(x, dtype=float).reshape(spec.d)
    V = h.vgrid.nodes
    if h.vgrid.d != spec.d:
        raise ConfigurationError("velocity grid dimension does not match the Lagrangian")
    if np.linalg.norm(p) >= spec.curvature * h.vgrid.R:
        raise VelocityGridTooSmall(
            f"|p| = {np.linalg.norm(p):.4g} exceeds curvature * R = {spec.curvature * h.vgrid.R:.4g}"
        )
    vals = V @ p - eval_lagrangian(spec, np.broadcast_to(x, V.shape), V)
    k = int(np.argmax(vals))
    if h.vgrid.on_boundary[k]:
        raise VelocityGridTooSmall("maximizing velocity on the boundary of the velocity grid; increase R")
    v = V[k].copy()
    best = float(vals[k])
    # Newton on the strictly concave map v -> <p, v> - K(v); one step is exact for quadratic kinds
    steps = 1 if spec.kind in ("quadratic", "anisotropic") else 30
    for _ in range(steps):
        g = p - momentum(spec, v[None])[0]
        v = v + np.linalg.solve(velocity_hessian(spec, v[None])[0], g)
        if np.max(np.abs(g)) < 1e-14:
            break
    polished = float(p @ v - eval_lagrangian(spec, x[None], v[None])[0])
    if polished >= best:
        return polished, v
    return best, V[k].copy()


@dataclass
class TonelliReport:
    ratio_min: float
    ratio_max: float
    hessian_min: float
    tonelli_constant: float
    passed: bool


def verify_tonelli(spec: LagrangianSpec, n: int = 32, vgrid: VelocityGrid | None = None) -> TonelliReport:
    """Sample L/(1+|v|^2) and the velocity-Hessian spectrum on a product grid."""
    vgrid = vgrid or VelocityGrid(3.0, 33, spec.d)
    xs = TorusGrid(spec.d, n).nodes
    vs = vgrid.nodes
    X = np.repeat(xs, len(vs), axis=0)
    Vv = np.tile(vs, (len(xs), 1))
    ratio = eval_lagrangian(spec, X, Vv) / (1.0 + np.sum(Vv * Vv, axis=-1))
    hess_min = float(np.linalg.eigvalsh(velocity_hessian(spec, vs)).min())
    c0 = spec.tonelli_constant
    rmin, rmax = float(ratio.min()), float(ratio.max())
    passed = rmin >= 1.0 / c0 and rmax <= c0 and hess_min >= 1.0 / c0
    return TonelliReport(rmin, rmax, hess_min, c0, passed)


@dataclass(frozen=True)
class CouplingSpec:
    """Interaction cost.

    ``separable``: f(x_i) = a * sum_k (1 - cos 2 pi (x_k - phase)).
    ``pairwise`` and ``linear``: kernel k(x, y) = a * mean_k cos 2 pi (x_k - y_k - phase),
    averaged over the other players (``linear`` is the mean-field reading of the same object).
    ``quadratic``: F(x, m) = a * (int mean_k cos 2 pi (x_k - y_k - phase) m(dy))^2.
    """

    kind: str = "zero"
    amplitude: float = 0.0
    phase: float = 0.0
    shift: float = 0.0

    def __post_init__(self):
        if self.kind not in COUPLING_KINDS:
            raise ConfigurationError(f"unknown coupling kind {self.kind!r}; expected one of {COUPLING_KINDS}")

    @property
    def linear_in_measure(self) -> bool:
        return self.kind in ("zero", "separable", "pairwise", "linear")

    def sup_bound(self, d: int = 1) -> float:
        a = abs(self.amplitude)
        return {"zero": 0.0, "separable": 2.0 * d * a}.get(self.kind, a) + abs(self.shift)

    def shifted(self, s: float) -> "CouplingSpec":
        return CouplingSpec(self.kind, self.amplitude, self.phase, self.shift + s)

    def base_kernel(self, x, y) -> np.ndarray:
        """Unscaled cos kernel mean_k cos 2 pi (x_k - y_k - phase)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.mean(np.cos(TWO_PI * (x - y - self.phase)), axis=-1)

    def separable(self, x) -> np.ndarray:
        """The separable cost f(x) (without the constant shift)."""
        x = np.asarray(x, dtype=float)
        return self.amplitude * np.sum(1.0 - np.cos(TWO_PI * (x - self.phase)), axis=-1)

    def kernel_matrix(self, grid: TorusGrid) -> np.ndarray:
        """K[a, b] = base kernel between grid nodes a and b."""
        X = grid.nodes
        return self.base_kernel(X[:, None, :], X[None, :, :])

    def mean_field(self, grid: TorusGrid, m_weights: np.ndarray) -> np.ndarray:
        """F(x, m) at every node for the mean-field kinds (and the trivial ones)."""
        w = np.asarray(m_weights, dtype=float).ravel()
        if self.kind == "zero":
            return np.full(grid.size, float(self.shift))
        if self.kind == "separable":
            return self.separable(grid.nodes) + self.shift
        inner = self.kernel_matrix(grid) @ w
        if self.kind == "quadratic":
            return self.amplitude * inner ** 2 + self.shift
        return self.amplitude * inner + self.shift

    def on_empirical(self, grid: TorusGrid, samples_idx: np.ndarray) -> np.ndarray:
        """F(x, (1/k) sum_j delta_{x_j}) for sample node indices of shape (..., k); returns (..., size)."""
        out_shape = samples_idx.shape[:-1] + (grid.size,)
        if self.kind == "zero":
            return np.full(out_shape, float(self.shift))
        if self.kind == "separable":
            return np.broadcast_to(self.separable(grid.nodes) + self.shift, out_shape).copy()
        K = self.kernel_matrix(grid)
        inner = np.moveaxis(np.mean(K[:, samples_idx], axis=-1), 0, -1)
        if self.kind == "quadratic":
            return self.amplitude * inner ** 2 + self.shift
        return self.amplitude * inner + self.shift


def player_cost(coupling: CouplingSpec, X, i: int) -> np.ndarray:
    """Pointwise F^i(x_1, ..., x_N) for joint positions X of shape (..., N, d)."""
    X = np.asarray(X, dtype=float)
    N = X.shape[-2]
    xi = X[..., i, :]
    if coupling.kind == "zero":
        return np.full(X.shape[:-2], float(coupling.shift))
    if coupling.kind == "separable":
        return coupling.separable(xi) + coupling.shift
    others = [j for j in range(N) if j != i]
    k = np.mean([coupling.base_kernel(xi, X[..., j, :]) for j in others], axis=0)
    if coupling.kind == "quadratic":
        return coupling.amplitude * k ** 2 + coupling.shift
    return coupling.amplitude * k + coupling.shift
