import numpy as np
import pytest

from morphogen import (ModelParams, Snapshot, integrate, iter_integrate, mass_balance_residual,
                       picard_steady, s_explicit_solution, step)
from morphogen.errors import StepRejected
from morphogen.evolution import DiffusionSolver, MassBalanceTracker, output_schedule, ramp_step

from conftest import grid_1d, grid_2d

P = ModelParams(1.0, 1.0, 1.0, 1.0)


@pytest.fixture(scope="module")
def g1():
    return grid_1d(128)


@pytest.fixture(scope="module")
def steady1(g1):
    return picard_steady(g1, 1.0, 1.0, 1.0, 1.0, tol=1e-13)


def zeros(g):
    return np.zeros(g.ndof)


def test_steady_state_is_stationary(g1, steady1):
    traj = integrate(g1, P, steady1.l_inf, steady1.s_inf, 1.0, 1e-2)
    assert np.max(np.abs(traj.l - steady1.l_inf)) < 1e-8
    assert np.max(np.abs(traj.s - steady1.s_inf)) < 1e-8


def test_stationary_in_2d():
    g = grid_2d((17, 17))
    st_ = picard_steady(g, 1.0, 1.0, 1.0, 1.0, tol=1e-13)
    traj = integrate(g, P, st_.l_inf, st_.s_inf, 1.0, 1e-2)
    assert np.max(np.abs(traj.l - st_.l_inf)) < 1e-8


def test_zero_influx_keeps_zero(g1):
    traj = integrate(g1, ModelParams(1.0, 1.0, 1.0, 0.0), zeros(g1), zeros(g1), 1.0, 1e-2)
    assert np.all(traj.l == 0) and np.all(traj.s == 0)


def test_unbound_decay_without_morphogen(g1):
    """With nu = 0 and l = 0 the receptor pool relaxes; mass leaves only by epsilon and outflow."""
    s0 = np.full(g1.ndof, 0.5)
    traj = integrate(g1, ModelParams(1.0, 1.0, 1.0, 0.0), zeros(g1), s0, 2.0, 1e-3,
                     output_schedule(2.0, 1e-3, 10))
    assert traj.s[-1].max() < 0.5 * np.exp(-1.0 * 2.0)
    assert np.all(traj.l >= 0)


@pytest.mark.parametrize("dt", [1e-3, 0.1, 1.0])
def test_sign_bounds_for_admissible_steps(g1, dt):
    traj = integrate(g1, ModelParams(1.0, 1.0, 1.0, 5.0), zeros(g1), np.full(g1.ndof, 0.9),
                     5.0, dt)
    assert traj.l.min() >= 0
    assert traj.s.min() >= 0 and traj.s.max() < 1


def test_large_steps_are_halved(g1):
    # weak diffusion and no influx: the explicit reaction part overshoots for dt > 4
    params = ModelParams(1e-3, 1.0, 1.0, 0.0)
    l0 = np.full(g1.ndof, 2.0)
    state = Snapshot(0.0, l0, zeros(g1))
    with pytest.raises(StepRejected):
        step(state, 5.0, params, g1)
    traj = integrate(g1, params, l0, zeros(g1), 10.0, 5.0)
    assert traj.l.min() >= -1e-10
    assert traj.times[-1] == 10.0
    with pytest.raises(StepRejected):
        integrate(g1, params, l0, zeros(g1), 10.0, 5.0, max_halvings=0)


def test_first_order_in_time(g1):
    ref = integrate(g1, P, zeros(g1), zeros(g1), 0.5, 1e-5, [0.5]).snapshots[-1]
    errs = []
    for dt in (4e-3, 2e-3, 1e-3):
        end = integrate(g1, P, zeros(g1), zeros(g1), 0.5, dt, [0.5]).snapshots[-1]
        errs.append(max(np.max(np.abs(end.l - ref.l)), np.max(np.abs(end.s - ref.s))))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 1.8) & (ratios < 2.2))


def test_s_oracle_agrees_with_stepper(g1, steady1):
    times = output_schedule(1.0, 1e-3, 1)
    traj = integrate(g1, P, zeros(g1), zeros(g1), 1.0, 1e-3, times)
    s, factor = s_explicit_solution(g1, traj.times, traj.l, traj.initial.s, steady1, P,
                                    return_factor=True)
    assert np.max(np.abs(s[-1] - traj.s[-1])) < 1e-4
    assert np.all(factor <= np.exp(-2.0 * traj.times)[:, None] * (1 + 1e-12))


def test_s_oracle_constant_morphogen(g1, steady1):
    """With l frozen at a constant the oracle reproduces the closed form to quadrature accuracy."""
    times = np.linspace(0, 1, 2001)
    l_path = np.full((times.size, g1.ndof), 0.7)
    s = s_explicit_solution(g1, times, l_path, zeros(g1), steady1, P)
    r = 2.0 + 0.7
    exact = 0.7 / r * (1 - np.exp(-r * times))
    np.testing.assert_allclose(s, np.repeat(exact[:, None], g1.ndof, 1), atol=1e-6)


def test_mass_balance_at_steady_state(g1, steady1):
    traj = integrate(g1, P, steady1.l_inf, steady1.s_inf, 0.2, 1e-2)
    assert np.max(np.abs(mass_balance_residual(traj, g1, P))) < 1e-6


def test_mass_balance_along_transient(g1):
    times = output_schedule(1.0, 1e-3, 1)
    traj = integrate(g1, P, zeros(g1), zeros(g1), 1.0, 1e-3, times)
    res = mass_balance_residual(traj, g1, P)
    assert np.max(np.abs(res[traj.times[1:-1] > 0.1])) < 1e-3


def test_mass_balance_needs_uniform_outputs(g1):
    traj = integrate(g1, P, zeros(g1), zeros(g1), 1.0, 1e-2, [0.1, 0.3, 1.0])
    with pytest.raises(ValueError, match="uniform"):
        mass_balance_residual(traj, g1, P)


def test_output_landing_and_every_step(g1):
    snaps = list(iter_integrate(g1, P, zeros(g1), zeros(g1), 0.1, 0.03, [0.05, 0.1],
                                every_step=True))
    out = [s.t for s in snaps if s.output]
    assert out == [0.0, 0.05, 0.1]
    inner = [s.t for s in snaps if not s.output]
    assert inner == pytest.approx([0.03, 0.08])


def test_output_schedule():
    np.testing.assert_allclose(output_schedule(1.0, 0.1, 3), [0, 0.3, 0.6, 0.9, 1.0])
    assert output_schedule(40.0, 1e-3, 5).size == 8001
    with pytest.raises(ValueError):
        output_schedule(1.0, 0.1, 0)


def test_ramp_steps():
    dt = 1e-3
    assert ramp_step(0.0, dt, 0.1, 10) == dt * 2.0**-10
    assert ramp_step(0.1, dt, 0.1, 10) == dt
    assert ramp_step(0.03, dt, 0.1, 10) == dt / 4      # 0.3 dt rounded down the ladder
    assert ramp_step(5.0, dt, 0.0, 10) == dt
    hs = [ramp_step(t, dt, 0.1, 10) for t in np.linspace(0, 0.2, 50)]
    assert np.all(np.diff(hs) >= 0)


def test_ramp_reuses_factorizations(g1):
    solver_sizes = []
    orig = DiffusionSolver.solve

    def spy(self, rhs, dt):
        solver_sizes.append(len(self._lu))
        return orig(self, rhs, dt)

    DiffusionSolver.solve = spy
    try:
        list(iter_integrate(g1, P, zeros(g1), zeros(g1), 0.3, 1e-3,
                            output_schedule(0.3, 1e-3, 5), ramp_time=0.1))
    finally:
        DiffusionSolver.solve = orig
    assert max(solver_sizes) <= 12


def test_rejects_inadmissible_initial_data(g1):
    with pytest.raises(ValueError, match="s must lie"):
        integrate(g1, P, zeros(g1), np.ones(g1.ndof), 1.0, 0.1)
    with pytest.raises(ValueError, match="nonnegative"):
        integrate(g1, P, -np.ones(g1.ndof), zeros(g1), 1.0, 0.1)
    with pytest.raises(ValueError, match="exceeds"):
        integrate(g1, P, zeros(g1), zeros(g1), 1.0, 0.1, [2.0])


def test_params_validation(g1):
    with pytest.raises(ValueError, match="epsilon"):
        ModelParams(1.0, 1.0, 0.0, 1.0).validate(g1)
    with pytest.raises(ValueError, match="p must exceed"):
        ModelParams(1.0, 1.0, 1.0, 1.0, p=1.0).validate(g1)


def _tracked(g, params, l0, s0, t_end, dt):
    tracker = MassBalanceTracker(g, params)
    for snap in iter_integrate(g, params, l0, s0, t_end, dt, output_schedule(t_end, dt, 10),
                               every_step=True):
        tracker.update(snap)
    return tracker


def test_integrated_mass_defect_vanishes_at_steady_state(g1, steady1):
    tr = _tracked(g1, P, steady1.l_inf, steady1.s_inf, 0.5, 1e-2)
    assert np.max(np.abs(tr.table()["integrated_defect"])) < 1e-9


def test_integrated_mass_defect_is_first_order(g1):
    defects = [_tracked(g1, P, zeros(g1), zeros(g1), 2.0, dt).relative_defect()
               for dt in (4e-3, 2e-3, 1e-3)]
    ratios = np.array(defects[:-1]) / np.array(defects[1:])
    assert np.all((ratios > 1.8) & (ratios < 2.2))
    table = _tracked(g1, P, zeros(g1), zeros(g1), 0.1, 1e-3).table()
    assert np.isnan(table["centered_residual"][[0, -1]]).all()
    assert table["t"][-1] == 0.1
