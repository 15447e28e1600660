import csv

import numpy as np
import pytest

from ergonash.catalog import CouplingSpec, LagrangianSpec
from ergonash.errors import ConfigurationError
from ergonash.flow import (
    Trajectory,
    check_calibrated,
    check_dominated,
    el_step,
    energy,
    energy_drift,
    ergodic_average,
    integrate,
    invariance_residual,
)
from ergonash.game import GameSpec
from ergonash.grids import TorusGrid, VelocityGrid
from ergonash.measures import PhaseMeasure, StateMeasure

FREE = LagrangianSpec()
PEND = LagrangianSpec(amplitude=1.0)


def test_free_motion_step():
    x, v = el_step(FREE, None, (0.0, 1.0), 0.1)
    assert x[0, 0] == pytest.approx(0.1) and v[0, 0] == pytest.approx(1.0)


def test_pendulum_sign_from_euler_lagrange():
    # d/dt v = D_x L = +2 pi sin(2 pi x): at x = 0.25 the velocity grows
    dt = 1 / 64
    _, v = el_step(PEND, None, (0.25, 0.0), dt)
    assert v[0, 0] > 0
    assert v[0, 0] == pytest.approx(2 * np.pi * dt, rel=1e-3)


def test_fixed_point_and_dt_guard():
    for dt in (0.1, 0.01, 1e-4):
        x, v = el_step(PEND, None, (0.0, 0.0), dt)
        assert x[0, 0] == 0.0 and v[0, 0] == 0.0
    with pytest.raises(ConfigurationError):
        el_step(PEND, None, (0.0, 0.0), 0.2)


def test_energy_examples():
    assert energy(FREE, (0.3, 0.0)) == pytest.approx(-1.0)
    assert energy(FREE, (0.3, 2.0)) == pytest.approx(1.0)
    assert energy(FREE, (0.3, 2.0), potential=0.25) == pytest.approx(0.75)


def _terminal(spec, dt, T=1.0, x0=0.1, v0=0.3):
    tr = integrate(spec, x0, v0, dt, T)
    return np.array([tr.x[-1, 0], tr.v[-1, 0]])


def test_second_order_convergence():
    ref = _terminal(PEND, 0.0005 / 100)
    e1 = np.abs(_terminal(PEND, 0.01) - ref).max()
    e2 = np.abs(_terminal(PEND, 0.005) - ref).max()
    assert 3.2 <= e1 / e2 <= 4.8


@pytest.mark.parametrize("state", [(0.1, 0.3), (0.25, 0.0), (0.0, 1.0), (0.4, 0.0)])
def test_energy_drift_long_run(state):
    tr = integrate(PEND, *state, 0.01, 100.0)
    drift, dev = energy_drift(PEND, tr)
    assert drift <= 1e-3
    assert dev <= 2.5e-3  # bounded oscillation, no growth


def test_quartic_and_external_potential_conserve_energy():
    spec = LagrangianSpec(kind="quartic", quartic=0.2, amplitude=0.5)
    g = TorusGrid(1, 64)
    W = 0.3 * np.cos(2 * np.pi * g.nodes[:, 0])

    def Wf(x):
        return 0.3 * np.cos(2 * np.pi * np.asarray(x)[..., 0])

    tr = integrate(spec, 0.2, 0.5, 0.01, 20.0, potential_grad=W)
    E = energy(spec, (tr.x, tr.v), potential=Wf)
    assert np.max(np.abs(E - E[0])) <= 1e-3


def test_invariance_residual_examples():
    xg, vg = TorusGrid(1, 64), VelocityGrid(3.0, 33)
    w = np.zeros((64, 33))
    w[0, vg.zero_index] = 1.0
    assert invariance_residual(PhaseMeasure(xg, vg, w), PEND) <= 1e-12
    w = np.zeros((64, 33))
    w[10, vg.zero_index + 3] = 1.0
    assert invariance_residual(PhaseMeasure(xg, vg, w), PEND, dt=0.1) > 1e-3


def _game(lag=FREE, coupling=CouplingSpec()):
    return GameSpec(2, (lag, lag), (coupling, coupling))


def _line(v0, T=20.0, dt=0.01, x0=0.0):
    t = np.arange(int(round(T / dt)) + 1) * dt
    x = np.mod(x0 + v0 * t, 1.0)[:, None]
    return Trajectory(dt, x, np.full_like(x, v0))


def test_ergodic_average_examples():
    g = _game()
    assert ergodic_average(g, 0, [_line(0.0, x0=0.3), _line(0.0)]) == pytest.approx(1.0)
    assert ergodic_average(g, 0, [_line(1.0), _line(0.0)]) == pytest.approx(1.5)
    with pytest.raises(ConfigurationError):
        ergodic_average(g, 0, [_line(1.0), _line(0.0)], T=5.0)


def test_domination_examples():
    g = _game()
    trajs = [_line(1.0), _line(0.0)]
    grid2 = np.zeros((16, 16))
    holds, slack = check_dominated(grid2, 0.0, trajs, g, 0)
    assert holds and slack >= 0
    assert not check_calibrated(grid2, 0.0, trajs, g, 0, tol=0.05)
    # steep phi increasing along the player's path defeats a small c
    steep = np.tile(100.0 * np.sin(2 * np.pi * np.arange(16) / 16)[:, None], (1, 16))
    assert not check_dominated(steep, -1.5, trajs, g, 0)[0]
    # phi = 0 with c = -1 calibrates the resting player exactly
    rest = [_line(0.0, x0=0.3), _line(0.0)]
    assert check_calibrated(grid2, -1.0, rest, g, 0, tol=1e-12)


def test_domination_monotone_in_c():
    rng = np.random.default_rng(5)
    g = _game(PEND, CouplingSpec("pairwise", 0.5))
    trajs = [_line(0.7), _line(-0.2, x0=0.4)]
    for _ in range(20):
        phi = rng.normal(size=(8, 8))
        c = rng.uniform(-3, 1)
        if check_dominated(phi, c, trajs, g, 0)[0]:
            assert check_dominated(phi, c + rng.uniform(0, 1), trajs, g, 0)[0]
        s0 = check_dominated(phi, c, trajs, g, 0)[1]
        s1 = check_dominated(phi, c + 0.5, trajs, g, 0)[1]
        assert s1 >= s0


def test_dimension_mismatch():
    g = _game()
    with pytest.raises(ConfigurationError):
        check_dominated(np.zeros(16), 0.0, [_line(1.0), _line(0.0)], g, 0)
    with pytest.raises(ConfigurationError):
        check_dominated(np.zeros((4, 4)), 0.0, [_line(1.0), _line(0.0, T=10.0)], g, 0)


def test_trajectory_csv(tmp_path):
    tr = integrate(FREE, 0.0, 1.0, 0.1, 1.0)
    assert len(tr.x) == 11 and tr.T == pytest.approx(1.0)
    tr.to_csv(tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["t", "x1", "v1"] and len(rows) == 12
    assert float(rows[-1][1]) == pytest.approx(0.0, abs=1e-12) or float(rows[-1][1]) == pytest.approx(1.0)
