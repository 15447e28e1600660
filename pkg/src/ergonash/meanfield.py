"""Symmetric games with empirical-measure couplings and their mean-field limit."""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .catalog import CouplingSpec, LagrangianSpec
from .errors import ConfigurationError
from .grids import TorusGrid, VelocityGrid
from .mather import assemble_constraints, phase_cost, solve_mather
from .measures import PhaseMeasure, StateMeasure, marginal, wasserstein1
from .weakkam import DEFAULT_SCHEDULE, ergodic_constant, hj_residual

CHUNK = 2000


@dataclass(frozen=True, eq=False)
class MeanFieldGame:
    """One representative player: all players share the Lagrangian and the coupling."""

    lagrangian: LagrangianSpec
    coupling: CouplingSpec
    xgrid: TorusGrid = TorusGrid(1, 64)
    vgrid: VelocityGrid = VelocityGrid(3.0, 33)
    schedule: tuple = DEFAULT_SCHEDULE
    dt: float | None = None

    @classmethod
    def from_game(cls, game) -> "MeanFieldGame":
        if isinstance(game, cls):
            return game
        if not game.symmetric:
            raise ConfigurationError("mean-field routines need a symmetric game")
        return cls(game.lagrangians[0], game.couplings[0], game.xgrid, game.vgrid, game.schedule, game.dt)


def _rng(seed: int, N: int):
    # one independent stream per N, derived from the root seed
    return np.random.default_rng([int(seed), int(N)])


def empirical_coupling(game, m: StateMeasure, N: int, K: int = 100_000, seed: int = 0):
    """V^N(x) = E F(x, (1/(N-1)) sum_{j<N} delta_{X_j}) with X_j iid ~ m.

    Returns (V, stderr). Couplings linear in the measure are evaluated in closed form
    (stderr 0); the others by seeded Monte Carlo over K draws.
    """
    game = MeanFieldGame.from_game(game)
    F, grid = game.coupling, game.xgrid
    if N < 2:
        raise ConfigurationError("need N >= 2 players")
    if F.linear_in_measure:
        return F.mean_field(grid, m.weights), np.zeros(grid.size)
    if K < 1000:
        raise ConfigurationError("sampled couplings need K >= 1000 draws")
    rng = _rng(seed, N)
    total = np.zeros(grid.size)
    total_sq = np.zeros(grid.size)
    done = 0
    while done < K:
        k = min(CHUNK, K - done)
        idx = rng.choice(grid.size, size=(k, N - 1), p=m.weights)
        vals = F.on_empirical(grid, idx)  # (k, size)
        total += vals.sum(axis=0)
        total_sq += (vals * vals).sum(axis=0)
        done += k
    mean = total / K
    var = np.maximum(total_sq / K - mean * mean, 0.0)
    return mean, np.sqrt(var / (K - 1))


def _fixed_point(game: MeanFieldGame, potential, tol, theta, max_iter):
    """Damped best response m <- (1 - theta) m + theta pi#(LP minimizer) for one population."""
    if not 0.0 < theta <= 1.0:
        raise ConfigurationError(f"damping must lie in (0, 1], got {theta}")
    mu = PhaseMeasure.resting(StateMeasure.uniform(game.xgrid), game.vgrid)
    trace = []
    last_move = 0.0
    k = 0
    while True:
        m = marginal(mu)
        V = potential(m)
        br = solve_mather(game.lagrangian, V, game.xgrid, game.vgrid)
        gap = phase_cost(game.lagrangian, V, mu) - br.value
        trace.append({"iteration": k, "gap": gap, "w1": last_move})
        if gap <= tol and (k == 0 or last_move <= tol):
            return mu, V, br, gap, trace, True, k
        if k >= max_iter:
            return mu, V, br, gap, trace, False, k
        new = mu.mix(br.measure, theta)
        last_move = wasserstein1(m, marginal(new))
        mu = new
        k += 1


@dataclass(eq=False)
class SymmetricNash:
    N: int
    mu: PhaseMeasure
    lam: float
    v: np.ndarray
    lp_value: float
    gap: float
    converged: bool
    iterations: int
    potential: np.ndarray
    stderr: float
    trace: list = field(default_factory=list)


def solve_symmetric_nash(game, N: int, tol: float = 1e-3, theta: float = 0.5, max_iter: int = 200, K: int = 100_000, seed: int = 0) -> SymmetricNash:
    """Symmetric mixed equilibrium of the N-player game (one-population fixed point)."""
    game = MeanFieldGame.from_game(game)
    errs = {}

    def potential(m):
        V, se = empirical_coupling(game, m, N, K, seed)
        errs["se"] = float(se.max())
        return V

    mu, V, br, gap, trace, ok, k = _fixed_point(game, potential, tol, theta, max_iter)
    sol = ergodic_constant(game.lagrangian, V, game.schedule, game.xgrid, game.vgrid, game.dt)
    return SymmetricNash(N, mu, sol.lam, sol.corrector, br.value, gap, ok, k, V, errs.get("se", 0.0), trace)


@dataclass(eq=False)
class MfgSolution:
    lambda_bar: float  # LP value at the fixed point
    lambda_pde: float  # weak-KAM constant of L + F(., m_bar), cross-check
    v_bar: np.ndarray
    mu_bar: PhaseMeasure
    fp_trace: list
    converged: bool
    gap: float
    potential: np.ndarray
    stationarity_residual: float
    hj_support_residual: float

    def to_dict(self) -> dict:
        return {
            "lambda_bar": self.lambda_bar,
            "lambda_pde": self.lambda_pde,
            "converged": self.converged,
            "gap": self.gap,
            "stationarity_residual": self.stationarity_residual,
            "hj_support_residual": self.hj_support_residual,
            "v_bar": self.v_bar.tolist(),
            "potential": self.potential.tolist(),
            "mu_bar": self.mu_bar.to_dict(),
            "fp_trace": self.fp_trace,
        }


def solve_ergodic_mfg(game, tol: float = 1e-7, theta: float = 0.5, max_iter: int = 200) -> MfgSolution:
    """Stationary ergodic mean-field equilibrium (lambda_bar, v_bar, mu_bar)."""
    game = MeanFieldGame.from_game(game)
    F = game.coupling
    mu, V, br, gap, trace, ok, _ = _fixed_point(game, lambda m: F.mean_field(game.xgrid, m.weights), tol, theta, max_iter)
    sol = ergodic_constant(game.lagrangian, V, game.schedule, game.xgrid, game.vgrid, game.dt)
    cons = assemble_constraints(game.xgrid, game.vgrid)
    stat = float(np.max(np.abs(cons.residual(mu.weights)[:-1])))
    support = marginal(mu).weights > 1e-6
    hj = float(np.max(np.abs(hj_residual(sol, game.lagrangian)[support])))
    return MfgSolution(br.value, sol.lam, sol.corrector, mu, trace, ok, gap, V, stat, hj)


@dataclass(eq=False)
class NSweepRecord:
    rows: list
    mfg: MfgSolution
    members: list = field(default_factory=list)

    COLUMNS = ("N", "lambda_N", "dist_lambda", "dist_v_sup", "dist_m_W1", "stderr")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for r in self.rows:
                w.writerow([r["N"]] + [repr(float(r[c])) for c in self.COLUMNS[1:]])

    def to_dict(self) -> dict:
        return {"rows": self.rows, "mfg": self.mfg.to_dict()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def nsweep(game, Ns=(2, 4, 8, 16, 32), tol: float = 1e-3, theta: float = 0.5, K: int = 100_000, seed: int = 0, mfg_tol: float | None = None, threads: int = 1) -> NSweepRecord:
    """Symmetric equilibria for each N against the mean-field solution.

    Distances compare like with like: lambda_N and v_N are weak-KAM outputs, so they are
    measured against the weak-KAM cross-check of the limit problem.
    """
    game = MeanFieldGame.from_game(game)
    Ns = [int(n) for n in Ns]
    if any(b <= a for a, b in zip(Ns, Ns[1:])):
        raise ConfigurationError("Ns must be strictly increasing")
    mfg = solve_ergodic_mfg(game, tol=tol if mfg_tol is None else mfg_tol, theta=theta)
    m_bar = marginal(mfg.mu_bar)

    def member(N):
        try:
            return solve_symmetric_nash(game, N, tol, theta, K=K, seed=seed)
        except Exception as exc:  # a failed member is recorded and the sweep continues
            return exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            members = list(ex.map(member, Ns))
    else:
        members = [member(N) for N in Ns]
    rows = []
    for N, res in zip(Ns, members):
        if isinstance(res, Exception):
            nan = float("nan")
            rows.append({"N": N, "lambda_N": nan, "dist_lambda": nan, "dist_v_sup": nan, "dist_m_W1": nan, "stderr": nan, "error": str(res)})
            continue
        rows.append(
            {
                "N": N,
                "lambda_N": res.lam,
                "dist_lambda": abs(res.lam - mfg.lambda_pde),
                "dist_v_sup": float(np.max(np.abs(res.v - mfg.v_bar))),
                "dist_m_W1": wasserstein1(marginal(res.mu), m_bar),
                "stderr": res.stderr,
                "converged": res.converged,
            }
        )
    return NSweepRecord(rows, mfg, members)


def hewitt_savage_check(m: StateMeasure, phi: CouplingSpec, Ns=(2, 4, 8, 16, 32), K: int = 100_000, seed: int = 0, x_index: int = 0) -> list:
    """Monte Carlo estimate of E phi((1/N) sum_{i<=N} delta_{X_i}), X_i iid ~ m, for each N.

    ``phi`` is a mean-field coupling read at the fixed node ``x_index``; the limit value
    is phi(m). Returns rows {N, estimate, stderr, limit, error}.
    """
    grid = m.grid
    limit = float(phi.mean_field(grid, m.weights)[x_index])
    rows = []
    for N in Ns:
        rng = _rng(seed, N)
        total = total_sq = 0.0
        done = 0
        while done < K:
            k = min(CHUNK, K - done)
            idx = rng.choice(grid.size, size=(k, N), p=m.weights)
            vals = phi.on_empirical(grid, idx)[:, x_index]
            total += vals.sum()
            total_sq += (vals * vals).sum()
            done += k
        est = total / K
        se = float(np.sqrt(max(total_sq / K - est * est, 0.0) / (K - 1)))
        rows.append({"N": int(N), "estimate": float(est), "stderr": se, "limit": limit, "error": float(est - limit)})
    return rows


def hewitt_savage_to_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "estimate", "stderr", "limit", "error"])
        for r in rows:
            w.writerow([r["N"]] + [repr(float(r[c])) for c in ("estimate", "stderr", "limit", "error")])
