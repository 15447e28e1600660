"""N-player ergodic games: coupling potentials, mixed payoffs, LP best responses,
damped best-response iteration and the pure-strategy feedback game."""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .catalog import CouplingSpec, LagrangianSpec
from .errors import ConfigurationError
from .flow import Trajectory, calibration_defect, check_dominated, ergodic_average, tail_average
from .grids import TorusGrid, VelocityGrid, periodic_interp
from .mather import MatherResult, phase_cost, solve_mather
from .measures import PhaseMeasure, StateMeasure, marginal, product_measure, wasserstein1
from .weakkam import DEFAULT_SCHEDULE, WeakKamSolution, ergodic_constant


@dataclass(frozen=True, eq=False)
class GameSpec:
    N: int
    lagrangians: tuple
    couplings: tuple
    xgrid: TorusGrid = TorusGrid(1, 64)
    vgrid: VelocityGrid = VelocityGrid(3.0, 33)
    symmetric: bool = False
    schedule: tuple = DEFAULT_SCHEDULE
    dt: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "lagrangians", tuple(self.lagrangians))
        object.__setattr__(self, "couplings", tuple(self.couplings))
        if not 2 <= self.N <= 5:
            raise ConfigurationError(f"number of players must be between 2 and 5, got {self.N}")
        if len(self.lagrangians) != self.N or len(self.couplings) != self.N:
            raise ConfigurationError("need one Lagrangian and one coupling per player")
        if self.symmetric and (len(set(self.lagrangians)) != 1 or len(set(self.couplings)) != 1):
            raise ConfigurationError("symmetric game requires identical Lagrangians and couplings for all players")
        if any(L.d != self.xgrid.d for L in self.lagrangians):
            raise ConfigurationError("Lagrangian dimension does not match the grid")

    @classmethod
    def symmetric_game(cls, N: int, lagrangian: LagrangianSpec, coupling: CouplingSpec, **kw) -> "GameSpec":
        return cls(N, (lagrangian,) * N, (coupling,) * N, symmetric=True, **kw)

    @property
    def decoupled(self) -> bool:
        return all(c.kind in ("zero", "separable") for c in self.couplings)

    def with_shift(self, i: int, s: float) -> "GameSpec":
        cs = list(self.couplings)
        cs[i] = cs[i].shifted(s)
        return GameSpec(self.N, self.lagrangians, cs, self.xgrid, self.vgrid, False, self.schedule, self.dt)


def coupling_potential(game: GameSpec, i: int, marginals) -> np.ndarray:
    """V^i(y) = integral of F^i(x_1, .., y, .., x_N) against the product of the other marginals."""
    F = game.couplings[i]
    grid = game.xgrid
    if F.kind == "zero":
        return np.full(grid.size, float(F.shift))
    if F.kind == "separable":
        return F.separable(grid.nodes) + F.shift
    others = [marginals[j] for j in range(game.N) if j != i]
    K = F.kernel_matrix(grid)
    if F.kind in ("pairwise", "linear"):
        return F.amplitude * np.mean([K @ m.weights for m in others], axis=0) + F.shift
    # nonlinear in the empirical measure: exact sum over all node tuples of the others
    if game.N > 4:
        raise ConfigurationError(
            "exact tensor integration supports N <= 4; use meanfield.empirical_coupling for larger N"
        )
    P = product_measure(others)
    k = len(others)
    V = np.empty(grid.size)
    for y in range(grid.size):
        row = K[y]
        S = sum(row.reshape((1,) * j + (-1,) + (1,) * (k - j - 1)) for j in range(k)) / k
        V[y] = np.sum(P * F.amplitude * S ** 2)
    return V + F.shift


def mixed_payoff(game: GameSpec, i: int, marginals, eta: PhaseMeasure) -> float:
    return phase_cost(game.lagrangians[i], coupling_potential(game, i, marginals), eta)


def best_response(game: GameSpec, i: int, marginals) -> MatherResult:
    V = coupling_potential(game, i, marginals)
    res = solve_mather(game.lagrangians[i], V, game.xgrid, game.vgrid)
    res.extra["potential"] = V
    return res


@dataclass(eq=False)
class NashResult:
    measures: list
    state_marginals: list
    values: list
    lambdas: list
    deviation_gaps: list
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    iterates: list | None = None
    best_responses: list | None = None

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "values": self.values,
            "lambdas": self.lambdas,
            "deviation_gaps": self.deviation_gaps,
            "trace": self.trace,
            "measures": [m.to_dict() for m in self.measures],
            "state_marginals": [m.to_dict() for m in self.state_marginals],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def trace_to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "max_gap", "max_w1"] + [f"gap{i + 1}" for i in range(len(self.values))])
            for row in self.trace:
                w.writerow([row["iteration"], repr(float(row["max_gap"])), repr(float(row["max_w1"]))] + [repr(float(g)) for g in row["gaps"]])


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def solve_nash_mixed(
    game: GameSpec,
    theta: float = 0.5,
    tol: float = 1e-3,
    max_iter: int = 200,
    init=None,
    threads: int = 1,
    record_iterates: bool = False,
) -> NashResult:
    """Simultaneous damped best-response iteration from the uniform (resting) profile.

    Stops once every deviation gap and the last W1 movement are below tol; reaching
    max_iter is reported through ``converged = False``, not raised.
    """
    if not 0.0 < theta <= 1.0:
        raise ConfigurationError(f"damping must lie in (0, 1], got {theta}")
    if init is None:
        u = StateMeasure.uniform(game.xgrid)
        mus = [PhaseMeasure.resting(u, game.vgrid) for _ in range(game.N)]
    else:
        mus = list(init)
    # a decoupled best response ignores the profile, so damping only delays the fixed point
    step = 1.0 if game.decoupled else theta
    trace, iterates = [], [] if record_iterates else None
    last_move = 0.0
    converged = False
    k = 0
    while True:
        ms = [marginal(mu) for mu in mus]
        if record_iterates:
            iterates.append([m.weights.copy() for m in ms])
        brs = _map(lambda i: best_response(game, i, ms), range(game.N), threads)
        gaps = [phase_cost(game.lagrangians[i], brs[i].extra["potential"], mus[i]) - brs[i].value for i in range(game.N)]
        trace.append({"iteration": k, "max_gap": max(gaps), "max_w1": last_move, "gaps": gaps})
        if max(gaps) <= tol and (k == 0 or last_move <= tol):
            converged = True
            break
        if k >= max_iter:
            break
        new = [mus[i].mix(brs[i].measure, step) for i in range(game.N)]
        last_move = max(wasserstein1(ms[i], marginal(new[i])) for i in range(game.N))
        mus = new
        k += 1

    values = [phase_cost(game.lagrangians[i], brs[i].extra["potential"], mus[i]) for i in range(game.N)]
    sols = _map(
        lambda i: ergodic_constant(game.lagrangians[i], brs[i].extra["potential"], game.schedule, game.xgrid, game.vgrid, game.dt),
        range(game.N),
        threads,
    )
    return NashResult(
        measures=mus,
        state_marginals=ms,
        values=values,
        lambdas=[s.lam for s in sols],
        deviation_gaps=gaps,
        iterations=k,
        converged=converged,
        trace=trace,
        iterates=iterates,
        best_responses=brs,
    )


def deviation_gap(game: GameSpec, i: int, result: NashResult) -> float:
    """J^i at the profile minus J^i at player i's exact best response (an epsilon-Nash certificate)."""
    ms = [marginal(mu) for mu in result.measures]
    br = best_response(game, i, ms)
    return phase_cost(game.lagrangians[i], br.extra["potential"], result.measures[i]) - br.value


# ---------------------------------------------------------------------------
# pure strategies (decoupled games)


def _simulate_one(grid: TorusGrid, pol, x0, dt: float, steps: int) -> Trajectory:
    d = grid.d
    xs = np.empty((steps + 1, d))
    vs = np.empty((steps + 1, d))
    x = np.mod(np.asarray(x0, dtype=float).reshape(d), 1.0)
    nodes = grid.nodes[:, 0]
    for k in range(steps + 1):
        if callable(pol):
            u = np.asarray(pol(k, x), dtype=float).reshape(d)
        elif d == 1:
            u = np.array([np.interp(x[0], nodes, pol[:, 0], period=1.0)])
        else:
            u = np.array([periodic_interp(pol[:, a], grid, x[None])[0] for a in range(d)])
        xs[k], vs[k] = x, u
        x = np.mod(x + dt * u, 1.0)
    return Trajectory(dt, xs, vs)


def simulate_feedback(game: GameSpec, policies, x0, dt: float, T: float) -> list:
    """Players follow x' = u_i(x_i), the policy field interpolated multilinearly (explicit Euler).

    ``policies[i]`` is a (nodes, d) array of velocities or a callable (k, x) -> velocity.
    """
    steps = int(round(T / dt))
    return [_simulate_one(game.xgrid, policies[i], x0[i], dt, steps) for i in range(game.N)]


@dataclass(eq=False)
class PureStrategyReport:
    lambdas: list
    averages: list
    tail_averages: list
    calibration_defects: list
    dominated: list
    deviations: list  # per player: list of (label, average)
    tol: float
    trajectories: list
    solutions: list

    @property
    def passed(self) -> bool:
        ok_avg = all(abs(a - l) <= self.tol for a, l in zip(self.averages, self.lambdas))
        ok_dev = all(min(v for _, v in devs) >= l - 0.01 for devs, l in zip(self.deviations, self.lambdas))
        return ok_avg and ok_dev

    def to_dict(self) -> dict:
        return {
            "lambdas": self.lambdas,
            "averages": self.averages,
            "tail_averages": self.tail_averages,
            "calibration_defects": self.calibration_defects,
            "dominated": self.dominated,
            "deviations": [[[lab, v] for lab, v in devs] for devs in self.deviations],
            "tol": self.tol,
            "passed": self.passed,
        }


def pure_strategy_game(
    game: GameSpec,
    T: float = 100.0,
    dt: float = 0.01,
    initial_states=None,
    tol: float = 0.05,
    n_random: int = 3,
    seed: int = 0,
) -> PureStrategyReport:
    """Feedback Nash equilibrium of a decoupled game and its certificates."""
    if not game.decoupled:
        raise ConfigurationError(
            "pure-strategy construction needs a decoupled game (separable couplings), the regime where "
            "each player's value gradient depends only on that player's own state"
        )
    grid = game.xgrid
    d = grid.d
    if initial_states is None:
        initial_states = [np.full(d, 0.5)] * game.N
    ms = [StateMeasure.uniform(grid)] * game.N
    sols: list[WeakKamSolution] = []
    for i in range(game.N):
        W = coupling_potential(game, i, ms)
        sols.append(ergodic_constant(game.lagrangians[i], W, game.schedule, grid, game.vgrid, game.dt))
    policies = [s.velocities for s in sols]
    trajs = simulate_feedback(game, policies, initial_states, dt, T)

    rng = np.random.default_rng(seed)
    averages, tails, defects, dominated, deviations = [], [], [], [], []
    for i, s in enumerate(sols):
        averages.append(ergodic_average(game, i, trajs))
        tails.append(tail_average(game, i, trajs))

        def phi(X, s=s, i=i):
            return -periodic_interp(s.corrector, grid, X[:, i, :])

        defects.append(calibration_defect(phi, -s.lam, trajs, game, i))
        dominated.append(check_dominated(phi, -s.lam, trajs, game, i, tol=tol)[1])

        panel = []
        e1 = np.zeros(d)
        e1[0] = 1.0
        for speed in (0.0, 0.5, -0.5, 1.0, -1.0):
            const = np.tile(speed * e1, (grid.size, 1))
            panel.append((f"constant v={speed:+.1f}", const))
        for r in range(n_random):
            pick = rng.integers(0, game.vgrid.size, size=grid.size)
            panel.append((f"random policy {r}", game.vgrid.nodes[pick]))
        devs = []
        steps = int(round(T / dt))
        for label, pol in panel:
            # unilateral deviation: the other players keep their equilibrium paths
            alt = list(trajs)
            alt[i] = _simulate_one(grid, pol, initial_states[i], dt, steps)
            devs.append((label, ergodic_average(game, i, alt)))
        deviations.append(devs)

    return PureStrategyReport(
        lambdas=[s.lam for s in sols],
        averages=averages,
        tail_averages=tails,
        calibration_defects=defects,
        dominated=dominated,
        deviations=deviations,
        tol=tol,
        trajectories=trajs,
        solutions=sols,
    )
