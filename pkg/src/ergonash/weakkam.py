"""Ergodic Hamilton-Jacobi equations  lambda + H(x, Du) = W(x)  by vanishing discount.

The discounted problem is discretized by the monotone semi-Lagrangian scheme

    u(x) = min_v  dt (L(x, v) + W(x)) + (1 - delta dt) I[u](x + dt v)

with periodic multilinear interpolation I. Its fixed point is computed exactly by
policy iteration (each evaluation is one sparse linear solve); value-iteration sweeps of
the same operator are exposed through :func:`bellman_operator`.

The corrector returned here is a cost-to-go: along optimal trajectories
u(x(a)) - u(x(b)) = int_a^b (L + W) dt - lambda (b - a). For the reversible catalog H is
even in p, so u solves the same equation as -u; the calibrated (dominated) function in
the forward-time sense is -u.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .catalog import LagrangianSpec, eval_lagrangian, hamiltonian
from .errors import ConfigurationError, SolverError, VelocityGridTooSmall
from .grids import TorusGrid, VelocityGrid, central_gradient, interp_weights

DEFAULT_SCHEDULE = (0.1, 0.05, 0.025)


class SemiLagrangian:
    """Precomputed stencil of the discounted Bellman operator for one (L, W, grids, dt)."""

    def __init__(self, spec: LagrangianSpec, W, xgrid: TorusGrid, vgrid: VelocityGrid, dt: float | None = None):
        if xgrid.d != spec.d or vgrid.d != spec.d:
            raise ConfigurationError("grid dimension does not match the Lagrangian")
        self.spec, self.xgrid, self.vgrid = spec, xgrid, vgrid
        self.dt = float(dt) if dt is not None else xgrid.h / vgrid.R
        W = np.zeros(xgrid.size) if W is None else np.asarray(W, dtype=float).ravel()
        if W.shape != (xgrid.size,):
            raise ConfigurationError("W must be a grid function on the state grid")
        self.W = W
        X, V = xgrid.nodes, vgrid.nodes
        Lxv = eval_lagrangian(spec, X[:, None, :], V[None, :, :])
        self.running = self.dt * (Lxv + W[:, None])
        self.idx, self.wts = interp_weights(xgrid, X[:, None, :] + self.dt * V[None, :, :])
        # tie-break order: smallest |v| first, then row-major (lexicographic) index
        norms = np.round(np.sum(V * V, axis=1), 12)
        self.order = np.lexsort((np.arange(len(V)), norms))

    def q_values(self, u: np.ndarray, delta: float) -> np.ndarray:
        beta = 1.0 - delta * self.dt
        return self.running + beta * np.sum(self.wts * u[self.idx], axis=-1)

    def greedy(self, Q: np.ndarray, incumbent: np.ndarray | None = None) -> np.ndarray:
        qmin = Q.min(axis=1)
        tol = 1e-12 * np.maximum(1.0, np.abs(qmin))
        if incumbent is not None:
            rows = np.arange(len(Q))
            keep = Q[rows, incumbent] <= qmin + tol
        Qs = Q[:, self.order]
        first = np.argmax(Qs <= (qmin + tol)[:, None], axis=1)
        policy = self.order[first]
        if incumbent is not None:
            policy = np.where(keep, incumbent, policy)
        return policy

    def evaluate(self, policy: np.ndarray, delta: float) -> np.ndarray:
        beta = 1.0 - delta * self.dt
        n = self.xgrid.size
        rows = np.repeat(np.arange(n), self.idx.shape[-1])
        P = sp.csr_matrix((self.wts[np.arange(n), policy].ravel(), (rows, self.idx[np.arange(n), policy].ravel())), shape=(n, n))
        M = sp.identity(n, format="csr") - beta * P
        return spsolve(M.tocsc(), self.running[np.arange(n), policy])


def bellman_operator(scheme: SemiLagrangian, u, delta: float) -> np.ndarray:
    """One Jacobi sweep of the discounted semi-Lagrangian operator."""
    return scheme.q_values(np.asarray(u, dtype=float).ravel(), delta).min(axis=1)


def solve_discounted(
    spec: LagrangianSpec,
    W,
    delta: float,
    dt: float | None = None,
    tol: float = 1e-9,
    xgrid: TorusGrid | None = None,
    vgrid: VelocityGrid | None = None,
    max_iter: int = 500,
    scheme: SemiLagrangian | None = None,
    return_policy: bool = False,
):
    """Fixed point u_delta of the discounted operator (sup-norm residual <= tol)."""
    if scheme is None:
        scheme = SemiLagrangian(spec, W, xgrid or TorusGrid(spec.d, 64), vgrid or VelocityGrid(3.0, 33, spec.d), dt)
    if not 0.0 < delta <= 1.0:
        raise ConfigurationError(f"discount must lie in (0, 1], got {delta}")
    if not 0.0 < delta * scheme.dt <= 1.0:
        raise ConfigurationError("need 0 < delta * dt <= 1")
    policy = np.full(scheme.xgrid.size, scheme.vgrid.zero_index)
    for _ in range(max_iter):
        u = scheme.evaluate(policy, delta)
        new = scheme.greedy(scheme.q_values(u, delta), incumbent=policy)
        if np.array_equal(new, policy):
            break
        policy = new
    else:
        raise SolverError("policy iteration did not stabilize", residual=float(np.max(np.abs(bellman_operator(scheme, u, delta) - u))))
    residual = float(np.max(np.abs(bellman_operator(scheme, u, delta) - u)))
    if residual > tol * max(1.0, float(np.max(np.abs(u)))):
        raise SolverError(f"discounted solve residual {residual:.3g} above tolerance", residual=residual)
    if np.any(scheme.vgrid.on_boundary[policy]):
        raise VelocityGridTooSmall("optimal velocity on the boundary of the velocity grid; increase R")
    return (u, policy) if return_policy else u


def richardson_zero(xs, ys) -> float:
    """Neville extrapolation of the interpolating polynomial through (xs, ys) to x = 0."""
    xs = list(map(float, xs))
    p = list(map(float, ys))
    n = len(xs)
    for k in range(1, n):
        for i in range(n - k):
            p[i] = (xs[i + k] * p[i] - xs[i] * p[i + 1]) / (xs[i + k] - xs[i])
    return p[0]


@dataclass(eq=False)
class WeakKamSolution:
    lam: float
    corrector: np.ndarray
    policy: np.ndarray  # velocity-node index per state node
    discount_trace: list
    xgrid: TorusGrid
    vgrid: VelocityGrid
    dt: float
    W: np.ndarray = field(repr=False, default=None)

    @property
    def velocities(self) -> np.ndarray:
        return self.vgrid.nodes[self.policy]

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "grid": self.xgrid.to_dict(),
            "vgrid": self.vgrid.to_dict(),
            "dt": self.dt,
            "corrector": self.corrector.tolist(),
            "policy": self.velocities.tolist(),
            "discount_trace": [list(map(float, t)) for t in self.discount_trace],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def ergodic_constant(
    spec: LagrangianSpec,
    W=None,
    schedule=DEFAULT_SCHEDULE,
    xgrid: TorusGrid | None = None,
    vgrid: VelocityGrid | None = None,
    dt: float | None = None,
    tol: float = 1e-9,
) -> WeakKamSolution:
    schedule = [float(s) for s in schedule]
    if len(schedule) < 3 or any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ConfigurationError("discount schedule must be strictly decreasing with at least 3 entries")
    xgrid = xgrid or TorusGrid(spec.d, 64)
    vgrid = vgrid or VelocityGrid(3.0, 33, spec.d)
    scheme = SemiLagrangian(spec, W, xgrid, vgrid, dt)
    trace, u, policy = [], None, None
    for delta in schedule:
        u, policy = solve_discounted(spec, W, delta, tol=tol, scheme=scheme, return_policy=True)
        trace.append((delta, delta * float(np.mean(u))))
    lam = richardson_zero([t[0] for t in trace], [t[1] for t in trace])
    return WeakKamSolution(
        lam=lam,
        corrector=u - np.mean(u),
        policy=policy,
        discount_trace=trace,
        xgrid=xgrid,
        vgrid=vgrid,
        dt=scheme.dt,
        W=scheme.W,
    )


def critical_value(spec: LagrangianSpec, **grid_kw) -> float:
    """Mane critical value c(H) = -lambda for W = 0."""
    return -ergodic_constant(spec, None, **grid_kw).lam


def feedback_policy(solution: WeakKamSolution) -> np.ndarray:
    """(nodes, d) array of Bellman-minimizing velocities."""
    return solution.velocities


def hj_residual(solution: WeakKamSolution, spec: LagrangianSpec) -> np.ndarray:
    """Pointwise lambda + H(x, Du) - W with a central-difference gradient of the corrector."""
    p = central_gradient(solution.corrector, solution.xgrid)
    W = np.zeros(solution.xgrid.size) if solution.W is None else solution.W
    return solution.lam + hamiltonian(spec, solution.xgrid.nodes, p) - W
