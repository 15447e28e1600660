"""Euler-Lagrange flow, energy, invariance diagnostics and the domination/calibration
inequalities along trajectories of the N-player game."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .catalog import (
    LagrangianSpec,
    eval_lagrangian,
    momentum,
    player_cost,
    potential_gradient,
    velocity_from_momentum,
)
from .errors import ConfigurationError, SolverError
from .grids import TorusGrid, fourier_gradient
from .measures import PhaseMeasure


@dataclass(eq=False)
class Trajectory:
    dt: float
    x: np.ndarray  # (K + 1, d), wrapped into [0, 1)
    v: np.ndarray  # (K + 1, d)

    @property
    def T(self) -> float:
        return self.dt * (len(self.x) - 1)

    @property
    def t(self) -> np.ndarray:
        return self.dt * np.arange(len(self.x))

    def to_csv(self, path):
        d = self.x.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{k + 1}" for k in range(d)] + [f"v{k + 1}" for k in range(d)])
            for t, x, v in zip(self.t, self.x, self.v):
                w.writerow([repr(float(t))] + [repr(float(a)) for a in x] + [repr(float(a)) for a in v])


def _gradient_callable(potential_gradient_arg, d):
    if potential_gradient_arg is None:
        return None
    if callable(potential_gradient_arg):
        return potential_gradient_arg
    values = np.asarray(potential_gradient_arg, dtype=float).ravel()
    n = int(round(values.size ** (1.0 / d)))
    if n ** d != values.size:
        raise ConfigurationError("potential grid function has an incompatible size")
    return fourier_gradient(values, TorusGrid(d, n))


def _force(spec, grad_w, x):
    f = potential_gradient(spec, x)
    if grad_w is not None:
        f = f + np.asarray(grad_w(x)).reshape(f.shape)
    return f


def el_step(spec: LagrangianSpec, potential_grad, state, dt: float):
    """One Stormer-Verlet step of d/dt D_v L = D_x (L + W) for the separable catalog.

    ``potential_grad`` is None, a callable x -> D_x W(x), or the grid values of W (the
    gradient of its trigonometric interpolant is used).
    """
    if dt > 0.1 or dt <= 0:
        raise ConfigurationError(f"time step must lie in (0, 0.1], got {dt}")
    if spec.curvature <= 0:
        raise SolverError("singular velocity Hessian")
    grad_w = _gradient_callable(potential_grad, spec.d)
    return _verlet(spec, grad_w, state, dt)


def _verlet(spec, grad_w, state, dt):
    x, v = (np.asarray(s, dtype=float).reshape(-1, spec.d) for s in state)
    p_half = momentum(spec, v) + 0.5 * dt * _force(spec, grad_w, x)
    x_new = x + dt * velocity_from_momentum(spec, p_half)
    p_new = p_half + 0.5 * dt * _force(spec, grad_w, x_new)
    return np.mod(x_new, 1.0), velocity_from_momentum(spec, p_new)


def integrate(spec: LagrangianSpec, x0, v0, dt: float, T: float, potential_grad=None) -> Trajectory:
    steps = int(round(T / dt))
    grad_w = _gradient_callable(potential_grad, spec.d)
    el_step(spec, grad_w, (x0, v0), dt)  # validates arguments
    xs = np.empty((steps + 1, spec.d))
    vs = np.empty((steps + 1, spec.d))
    x = np.mod(np.asarray(x0, dtype=float).reshape(1, spec.d), 1.0)
    v = np.asarray(v0, dtype=float).reshape(1, spec.d)
    xs[0], vs[0] = x[0], v[0]
    for k in range(steps):
        x, v = _verlet(spec, grad_w, (x, v), dt)
        xs[k + 1], vs[k + 1] = x[0], v[0]
    return Trajectory(dt, xs, vs)


def energy(spec: LagrangianSpec, state, potential=None) -> np.ndarray:
    """<D_v L, v> - L - W(x); ``potential`` is None, a constant or a callable."""
    x, v = state
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    e = np.sum(momentum(spec, v) * v.reshape(momentum(spec, v).shape), axis=-1) - eval_lagrangian(spec, x, v)
    if potential is not None:
        e = e - (potential(x) if callable(potential) else potential)
    e = np.asarray(e)
    return float(e.reshape(-1)[0]) if e.size == 1 else e


def energy_drift(spec: LagrangianSpec, trajectory: Trajectory, potential=None, window: float = 1.0):
    """(secular drift, max pointwise deviation) of the energy along a trajectory.

    The drift compares energy means over the first and last ``window`` time units, which
    filters the bounded O(dt^2) oscillation every symplectic scheme carries.
    """
    E = np.atleast_1d(energy(spec, (trajectory.x, trajectory.v), potential))
    w = max(1, int(round(window / trajectory.dt)))
    if 2 * w > len(E):
        raise ConfigurationError("trajectory shorter than two averaging windows")
    return float(abs(E[-w:].mean() - E[:w].mean())), float(np.max(np.abs(E - E[0])))


def _test_functions(d: int):
    """Smooth periodic-in-x, polynomial-in-v test functions (x, v) -> value."""
    trig1 = [
        lambda s: np.ones_like(s),
        lambda s: np.cos(2 * np.pi * s),
        lambda s: np.sin(2 * np.pi * s),
        lambda s: np.cos(4 * np.pi * s),
        lambda s: np.sin(4 * np.pi * s),
    ]
    if d == 1:
        xs = [lambda x, g=g: g(x[..., 0]) for g in trig1]
        vs = [lambda v: np.ones(v.shape[:-1]), lambda v: v[..., 0], lambda v: v[..., 0] ** 2]
    else:
        xs = [lambda x, a=a, b=b: a(x[..., 0]) * b(x[..., 1]) for a in trig1[:3] for b in trig1[:3]]
        vs = [
            lambda v: np.ones(v.shape[:-1]),
            lambda v: v[..., 0],
            lambda v: v[..., 1],
            lambda v: v[..., 0] ** 2,
            lambda v: v[..., 0] * v[..., 1],
            lambda v: v[..., 1] ** 2,
        ]
    family = [(fx, fv) for fx in xs for fv in vs]
    return family[1:]  # drop the constant, it is trivially invariant


def invariance_residual(mu: PhaseMeasure, spec: LagrangianSpec, potential_grad=None, dt: float = 0.01, test_functions: int | None = None) -> float:
    """max_f | int f(Phi_dt) dmu - int f dmu | over the fixed test family."""
    family = _test_functions(spec.d)
    if test_functions is not None:
        family = family[:test_functions]
    ix, iv = np.nonzero(mu.weights > 0)
    w = mu.weights[ix, iv]
    X = mu.xgrid.nodes[ix]
    V = mu.vgrid.nodes[iv]
    X1, V1 = el_step(spec, potential_grad, (X, V), dt)
    worst = 0.0
    for fx, fv in family:
        before = np.dot(w, fx(X) * fv(V))
        after = np.dot(w, fx(X1) * fv(V1))
        worst = max(worst, abs(after - before))
    return float(worst)


def _interp_nd(values: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Periodic multilinear interpolation on a (n,)*D grid at points (K, D)."""
    D = values.ndim
    n = values.shape[0]
    s = np.mod(pts, 1.0) * n
    i0 = np.floor(s).astype(int)
    frac = s - i0
    out = np.zeros(len(pts))
    for corner in range(2 ** D):
        w = np.ones(len(pts))
        idx = []
        for a in range(D):
            bit = (corner >> a) & 1
            w = w * (frac[:, a] if bit else 1.0 - frac[:, a])
            idx.append(np.mod(i0[:, a] + bit, n))
        out += w * values[tuple(idx)]
    return out


def _joint(trajectories):
    dts = {t.dt for t in trajectories}
    lens = {len(t.x) for t in trajectories}
    if len(dts) != 1 or len(lens) != 1:
        raise ConfigurationError("trajectories must share dt and horizon")
    X = np.stack([t.x for t in trajectories], axis=1)  # (K+1, N, d)
    return trajectories[0].dt, X


def running_cost(game, i: int, trajectories) -> np.ndarray:
    """L^i(gamma_i, u_i) + F^i(gamma_1, ..., gamma_N) at every time sample."""
    _, X = _joint(trajectories)
    own = trajectories[i]
    return eval_lagrangian(game.lagrangians[i], own.x, own.v) + player_cost(game.couplings[i], X, i)


def _cumulative_trapezoid(f, dt):
    out = np.zeros_like(f)
    out[1:] = np.cumsum(0.5 * dt * (f[1:] + f[:-1]))
    return out


def _phi_along(phi, X, N, d):
    if callable(phi):
        return np.asarray(phi(X), dtype=float)
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != N * d:
        raise ConfigurationError(f"phi must be a grid function on T^(dN) with {N * d} axes, got {phi.ndim}")
    if N > 3:
        raise ConfigurationError("grid phi limited to N <= 3; pass a separable callable for larger N")
    return _interp_nd(phi, X.reshape(len(X), N * d))


def check_dominated(phi, c: float, trajectories, game, i: int, tol: float = 1e-9):
    """Test phi(gamma(b)) - phi(gamma(a)) <= int_a^b (L^i + F^i) + c (b - a) on every
    sample window [a, b] of the given trajectories. Returns (holds, worst_slack)."""
    dt, X = _joint(trajectories)
    N, d = X.shape[1], X.shape[2]
    if N != game.N:
        raise ConfigurationError("number of trajectories does not match the game")
    f = running_cost(game, i, trajectories)
    S = _cumulative_trapezoid(f, dt) + c * dt * np.arange(len(f)) - _phi_along(phi, X, N, d)
    # min over a < b of S_b - S_a
    prefix_max = np.maximum.accumulate(S)[:-1]
    worst = float(np.min(S[1:] - prefix_max))
    return worst >= -tol, worst


def calibration_defect(phi, c: float, trajectories, game, i: int) -> float:
    """right - left of the domination inequality on the full horizon [0, T]."""
    dt, X = _joint(trajectories)
    N, d = X.shape[1], X.shape[2]
    f = running_cost(game, i, trajectories)
    ph = _phi_along(phi, X, N, d)
    total = _cumulative_trapezoid(f, dt)[-1] + c * dt * (len(f) - 1)
    return float(total - (ph[-1] - ph[0]))


def check_calibrated(phi, c: float, trajectories, game, i: int, tol: float) -> bool:
    return abs(calibration_defect(phi, c, trajectories, game, i)) <= tol


def ergodic_average(game, i: int, trajectories, T: float | None = None) -> float:
    """(1/T) int_0^T (L^i + F^i) dt by the trapezoidal rule."""
    dt, _ = _joint(trajectories)
    f = running_cost(game, i, trajectories)
    if T is not None:
        if T < 10:
            raise ConfigurationError("ergodic averages need T >= 10")
        f = f[: int(round(T / dt)) + 1]
    return float(_cumulative_trapezoid(f, dt)[-1] / (dt * (len(f) - 1)))


def tail_average(game, i: int, trajectories) -> float:
    """Cesaro tail: the average over [T/2, T]."""
    dt, _ = _joint(trajectories)
    f = running_cost(game, i, trajectories)
    half = (len(f) - 1) // 2
    g = f[half:]
    return float(_cumulative_trapezoid(g, dt)[-1] / (dt * (len(g) - 1)))
