"""Discrete probability measures on the torus grid and on (x, v) phase space."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import ConfigurationError, SolverError
from .grids import TorusGrid, VelocityGrid, torus_delta, torus_distance

MASS_TOL = 1e-10


def _check_weights(w):
    if np.any(w < 0):
        raise ConfigurationError("measure weights must be nonnegative")
    if abs(w.sum() - 1.0) > MASS_TOL:
        raise ConfigurationError(f"measure weights sum to {w.sum():.12g}, expected 1")


@dataclass(frozen=True, eq=False)
class StateMeasure:
    grid: TorusGrid
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(self.grid.size)
        _check_weights(w)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, grid: TorusGrid) -> "StateMeasure":
        return cls(grid, np.full(grid.size, 1.0 / grid.size))

    @classmethod
    def dirac(cls, grid: TorusGrid, index: int) -> "StateMeasure":
        w = np.zeros(grid.size)
        w[index] = 1.0
        return cls(grid, w)

    def integrate(self, f_values) -> float:
        return float(np.dot(self.weights, np.asarray(f_values, dtype=float).ravel()))

    def mix(self, other: "StateMeasure", theta: float) -> "StateMeasure":
        """(1 - theta) * self + theta * other."""
        return StateMeasure(self.grid, (1.0 - theta) * self.weights + theta * other.weights)

    def to_dict(self) -> dict:
        return {"grid": self.grid.to_dict(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "StateMeasure":
        grid = TorusGrid(int(doc["grid"]["d"]), int(doc["grid"]["n"]))
        return cls(grid, np.asarray(doc["weights"], dtype=float))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "StateMeasure":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class PhaseMeasure:
    """Weights indexed by (x-node, v-node), stored as a (xgrid.size, vgrid.size) array."""

    xgrid: TorusGrid
    vgrid: VelocityGrid
    weights: np.ndarray

    def __post_init__(self):
        if self.vgrid.d != self.xgrid.d:
            raise ConfigurationError("state and velocity grids disagree on dimension")
        w = np.asarray(self.weights, dtype=float).reshape(self.xgrid.size, self.vgrid.size)
        _check_weights(w)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def resting(cls, m: StateMeasure, vgrid: VelocityGrid) -> "PhaseMeasure":
        """Lift a state measure to phase space at zero velocity."""
        w = np.zeros((m.grid.size, vgrid.size))
        w[:, vgrid.zero_index] = m.weights
        return cls(m.grid, vgrid, w)

    def mix(self, other: "PhaseMeasure", theta: float) -> "PhaseMeasure":
        return PhaseMeasure(self.xgrid, self.vgrid, (1.0 - theta) * self.weights + theta * other.weights)

    def integrate(self, f_values) -> float:
        return float(np.sum(self.weights * np.asarray(f_values, dtype=float).reshape(self.weights.shape)))

    def atoms(self, tol: float = 0.0):
        """List of (x, v, weight) with weight > tol."""
        ix, iv = np.nonzero(self.weights > tol)
        return [(self.xgrid.nodes[a], self.vgrid.nodes[b], float(self.weights[a, b])) for a, b in zip(ix, iv)]

    def to_dict(self) -> dict:
        return {
            "xgrid": self.xgrid.to_dict(),
            "vgrid": self.vgrid.to_dict(),
            "weights": self.weights.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PhaseMeasure":
        xg = TorusGrid(int(doc["xgrid"]["d"]), int(doc["xgrid"]["n"]))
        vd = doc["vgrid"]
        vg = VelocityGrid(float(vd["R"]), int(vd["m"]), int(vd.get("d", xg.d)))
        return cls(xg, vg, np.asarray(doc["weights"], dtype=float))


def marginal(mu: PhaseMeasure) -> StateMeasure:
    """Push forward under (x, v) -> x."""
    return StateMeasure(mu.xgrid, mu.weights.sum(axis=1))


def product_measure(ms) -> np.ndarray:
    """Tensor product of up to four state measures on a common grid.

    Returns an array of shape (size,) * len(ms).
    """
    ms = list(ms)
    if not ms:
        raise ConfigurationError("need at least one measure")
    if len(ms) > 4:
        raise ConfigurationError(
            f"product of {len(ms)} measures refused (memory guard, max 4); use the Monte Carlo coupling path"
        )
    grid = ms[0].grid
    if any(m.grid != grid for m in ms):
        raise ConfigurationError("all measures must live on the same grid")
    out = ms[0].weights
    for m in ms[1:]:
        out = np.multiply.outer(out, m.weights)
    return out


def empirical_measure(points, grid: TorusGrid) -> StateMeasure:
    """Mass 1/len at the nearest node of each point; ties go to the smaller node index."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        raise ConfigurationError("empirical measure of an empty sample")
    pts = pts.reshape(-1, grid.d)
    s = np.mod(pts, 1.0) * grid.n
    lo = np.floor(s).astype(int)
    frac = s - lo
    hi = lo + 1
    # per-axis choice; equal distance (frac == 0.5) resolves to the smaller wrapped index
    lo_w, hi_w = np.mod(lo, grid.n), np.mod(hi, grid.n)
    pick_hi = (frac > 0.5) | ((frac == 0.5) & (hi_w < lo_w))
    idx = np.where(pick_hi, hi_w, lo_w)
    flat = grid.flat_index(idx)
    w = np.bincount(flat, minlength=grid.size).astype(float) / len(pts)
    return StateMeasure(grid, w)


def _w1_circle(a: np.ndarray, b: np.ndarray, h: float) -> float:
    diff = np.cumsum(a - b)
    # the optimal shift is a median of the cumulative differences, so one of the n values
    costs = np.abs(diff[None, :] - diff[:, None]).sum(axis=1)
    return float(h * costs.min())


def transport_lp(a: np.ndarray, b: np.ndarray, points: np.ndarray) -> float:
    """Exact optimal transport cost by linear programming (torus ground distance)."""
    n = len(a)
    cost = torus_distance(points[:, None, :], points[None, :, :]).ravel()
    rows = np.zeros((2 * n, n * n))
    for i in range(n):
        rows[i, i * n:(i + 1) * n] = 1.0
        rows[n + i, i::n] = 1.0
    res = linprog(cost, A_eq=rows, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    if res.status != 0:
        raise SolverError(f"transport LP failed: {res.message}")
    return float(res.fun)


def wasserstein1(a: StateMeasure, b: StateMeasure) -> float:
    if a.grid != b.grid:
        raise ConfigurationError("Wasserstein distance between measures on different grids")
    if a.grid.d == 1:
        return max(_w1_circle(a.weights, b.weights, a.grid.h), 0.0)
    return transport_lp(a.weights, b.weights, a.grid.nodes)


__all__ = [
    "PhaseMeasure",
    "StateMeasure",
    "empirical_measure",
    "marginal",
    "product_measure",
    "torus_delta",
    "transport_lp",
    "wasserstein1",
]
