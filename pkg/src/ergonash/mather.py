"""Minimizing (Mather) measures as linear programs over closed phase-space measures.

Flow-invariant measures are relaxed to discretely closed ones: for every node y the
periodic hat function phi_y must satisfy  sum_{x,v} mu(x, v) <v, D phi_y(x)> = 0  with a
central-difference gradient. Point masses at rest are always feasible, and the minimizers
of this relaxation converge to Mather measures under grid refinement.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .catalog import LagrangianSpec, eval_lagrangian, verify_tonelli
from .errors import ConfigurationError, SolverError
from .grids import TorusGrid, VelocityGrid
from .measures import PhaseMeasure, marginal
from .simplex import simplex


@dataclass(frozen=True, eq=False)
class HolonomyConstraintSet:
    xgrid: TorusGrid
    vgrid: VelocityGrid
    A: np.ndarray  # (xgrid.size + 1, xgrid.size * vgrid.size); last row is the mass row
    b: np.ndarray

    @property
    def n_holonomy(self) -> int:
        return self.xgrid.size

    def residual(self, weights) -> np.ndarray:
        return self.A @ np.asarray(weights, dtype=float).ravel() - self.b


def assemble_constraints(xgrid: TorusGrid, vgrid: VelocityGrid) -> HolonomyConstraintSet:
    if xgrid.d != vgrid.d:
        raise ConfigurationError("state and velocity grids disagree on dimension")
    nx, nv = xgrid.size, vgrid.size
    A = np.zeros((nx + 1, nx * nv))
    V = vgrid.nodes
    multi = np.stack(np.unravel_index(np.arange(nx), xgrid.shape), axis=-1)
    cols = np.arange(nx)[:, None] * nv + np.arange(nv)[None, :]
    scale = 1.0 / (2.0 * xgrid.h)
    for k in range(xgrid.d):
        e = np.zeros(xgrid.d, dtype=int)
        e[k] = 1
        # hat at y has derivative +1/2h at x = y - h e_k and -1/2h at x = y + h e_k
        y_up = xgrid.flat_index(multi + e)
        y_dn = xgrid.flat_index(multi - e)
        for xi in range(nx):
            A[y_up[xi], cols[xi]] += V[:, k] * scale
            A[y_dn[xi], cols[xi]] -= V[:, k] * scale
    A[nx, :] = 1.0
    b = np.zeros(nx + 1)
    b[nx] = 1.0
    return HolonomyConstraintSet(xgrid, vgrid, A, b)


@dataclass(eq=False)
class MatherResult:
    measure: PhaseMeasure
    value: float
    support_nodes: list
    dual_certificate: np.ndarray
    dual_value: float
    min_reduced_cost: float
    slackness_residual: float
    feasibility_residual: float
    iterations: int
    unique: bool | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "dual_value": self.dual_value,
            "min_reduced_cost": self.min_reduced_cost,
            "slackness_residual": self.slackness_residual,
            "feasibility_residual": self.feasibility_residual,
            "iterations": self.iterations,
            "unique": self.unique,
            "support": [[list(map(float, x)), list(map(float, v)), w] for x, v, w in self.support_nodes],
            "dual_certificate": self.dual_certificate.tolist(),
            "measure": self.measure.to_dict(),
        }


_constraint_cache: dict = {}


def _constraints(xgrid, vgrid):
    key = (xgrid, vgrid)
    if key not in _constraint_cache:
        _constraint_cache[key] = assemble_constraints(xgrid, vgrid)
    return _constraint_cache[key]


def cost_field(spec: LagrangianSpec, W, xgrid: TorusGrid, vgrid: VelocityGrid) -> np.ndarray:
    """(x-node, v-node) array of L(x, v) + W(x)."""
    X = np.repeat(xgrid.nodes, vgrid.size, axis=0)
    Vv = np.tile(vgrid.nodes, (xgrid.size, 1))
    Lxv = eval_lagrangian(spec, X, Vv).reshape(xgrid.size, vgrid.size)
    W = np.zeros(xgrid.size) if W is None else np.asarray(W, dtype=float).ravel()
    return Lxv + W[:, None]


def _solve_lp(cost, cons):
    res = simplex(cost.ravel(), cons.A, cons.b)
    return res


def solve_mather(
    spec: LagrangianSpec,
    W,
    xgrid: TorusGrid,
    vgrid: VelocityGrid,
    support_tol: float = 1e-9,
    detect_multiplicity: bool = False,
    check_tonelli: bool = True,
) -> MatherResult:
    """Minimize sum (L + W) mu over discretely closed probability measures."""
    if check_tonelli:
        rep = verify_tonelli(spec, n=min(xgrid.n, 32), vgrid=vgrid)
        if not rep.passed:
            raise ConfigurationError(f"Lagrangian fails Tonelli bounds on this grid: {rep}")
    cons = _constraints(xgrid, vgrid)
    cost = cost_field(spec, W, xgrid, vgrid)
    res = _solve_lp(cost, cons)

    w = res.x / res.x.sum()
    mu = PhaseMeasure(xgrid, vgrid, w)
    value = float(np.sum(cost.ravel() * w))
    y = res.duals
    reduced = cost.ravel() - cons.A.T @ y
    out = MatherResult(
        measure=mu,
        value=value,
        support_nodes=mu.atoms(support_tol),
        dual_certificate=y,
        dual_value=float(y @ cons.b),
        min_reduced_cost=float(reduced.min()),
        slackness_residual=float(np.max(np.abs(w * reduced))),
        feasibility_residual=float(np.max(np.abs(cons.residual(w)))),
        iterations=res.iterations,
    )
    if detect_multiplicity:
        ramp = np.arange(cost.size, dtype=float)
        lo = _solve_lp(cost + 1e-9 * ramp.reshape(cost.shape), cons).x
        hi = _solve_lp(cost + 1e-9 * ramp[::-1].reshape(cost.shape), cons).x
        out.unique = bool(np.allclose(lo, hi, atol=1e-8) and np.allclose(lo, w, atol=1e-8))
    return out


def mather_value(spec: LagrangianSpec, W, xgrid: TorusGrid, vgrid: VelocityGrid) -> float:
    return solve_mather(spec, W, xgrid, vgrid).value


def mather_support(result: MatherResult, tol: float = 1e-9) -> list:
    """Projected support: x-nodes whose marginal mass exceeds tol."""
    m = marginal(result.measure)
    idx = np.flatnonzero(m.weights > tol)
    return [tuple(float(c) for c in m.grid.nodes[i]) for i in idx]


def phase_cost(spec: LagrangianSpec, W, mu: PhaseMeasure) -> float:
    """Integral of L + W against a phase measure."""
    return mu.integrate(cost_field(spec, W, mu.xgrid, mu.vgrid))


def _check_solution(result: MatherResult, tol: float = 1e-6):
    if result.slackness_residual > tol or result.min_reduced_cost < -tol:
        raise SolverError("LP optimality certificate failed", residual=result.slackness_residual)
