import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from consortium.equilibria import (
    Regime,
    d2_threshold,
    equilibrium_x0,
    equilibrium_x10,
    equilibrium_x11,
    psi_alpha,
)
from consortium.errors import DomainError
from consortium.model import DEFAULTS, Control, State, rhs_unchecked
from consortium.sim import (
    TerminalEvent,
    candidate_equilibria,
    converge_to_equilibrium,
    integrate,
    relative_distance,
)

U = Control(0.5, 0.5, 1.0)
START = [0.5, 0.1, 0.1, 3.0, 0.1]


def test_matches_scipy_reference():
    traj = integrate(START, U, 30.0, rtol=1e-10, atol=1e-12)
    ref = solve_ivp(
        lambda t, y: rhs_unchecked(y, U.alpha, U.d, U.s_in), (0, 30.0), START, method="DOP853", rtol=1e-12, atol=1e-14
    )
    np.testing.assert_allclose(traj.states[-1], ref.y[:, -1], rtol=1e-7, atol=1e-9)
    assert traj.times[-1] == 30.0
    assert traj.terminal_event is TerminalEvent.MAX_TIME


def test_fixed_step_order():
    """Halving the step cuts the global error by ~2^5 (fifth-order propagation)."""
    ref = integrate(START, U, 2.0, rtol=1e-13, atol=1e-15).states[-1]
    errs = []
    for h in (0.02, 0.01, 0.005):
        errs.append(np.max(np.abs(integrate(START, U, 2.0, fixed_step=h).states[-1] - ref)))
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) >= 4.0


def test_equilibrium_persists():
    x11 = equilibrium_x11(Control(0.5, 0.3, 1.0))
    traj = integrate(x11, Control(0.5, 0.3, 1.0), 100.0)
    assert np.max(np.abs(traj.states - x11.as_array())) < 1e-8


def test_perturbed_coexistence_returns():
    u = Control(0.5, 0.3, 1.0)
    x11 = equilibrium_x11(u).as_array()
    traj = integrate(x11 * 1.01, u, 500.0)
    assert np.max(np.abs(traj.states[-1] - x11)) < 1e-6


def test_washout_attracts_above_d2():
    u = Control(0.5, 3.5, 1.0)
    assert u.d > d2_threshold(0.5, 1.0)
    rep = converge_to_equilibrium(START, u)
    assert rep.conclusive and rep.nearest == "x0" and rep.regime is Regime.TOTAL_WASHOUT_GAS
    np.testing.assert_allclose(rep.state.as_array(), equilibrium_x0(u).as_array(), atol=1e-6)


def test_coexistence_probe():
    u = Control(0.5, 0.3, 1.0)
    rep = converge_to_equilibrium(START, u)
    assert rep.conclusive and rep.nearest == "x11" and rep.regime is Regime.COEXISTENCE_GAS
    assert not rep.outside_stability_domain
    assert rep.to_dict()["regime"] == "COEXISTENCE_GAS"


def test_algal_washout_probe():
    d1, d2 = psi_alpha(0.5, 1.0), d2_threshold(0.5, 1.0)
    u = Control(0.5, 0.5 * (d1 + d2), 1.0)
    rep = converge_to_equilibrium(START, u)
    assert rep.conclusive and rep.nearest == "x10"
    np.testing.assert_allclose(rep.state.as_array(), equilibrium_x10(u).as_array(), rtol=1e-3, atol=1e-5)


def test_no_bacteria_stays_without_bacteria():
    rep = converge_to_equilibrium([0.5, 0.0, 0.1, 3.0, 0.1], Control(0.5, 0.3, 1.0))
    assert rep.outside_stability_domain
    assert rep.state.e == 0.0
    assert rep.nearest != "x11"


def test_no_production_keeps_vitamin_zero():
    traj = integrate([0.5, 0.1, 0.0, 3.0, 0.1], Control(0.0, 0.3, 1.0), 50.0)
    assert np.all(traj.states[:, 2] == 0.0)


def test_states_stay_in_domain():
    traj = integrate([1.0, 1e-6, 0.0, DEFAULTS.q_min, 1e-6], Control(0.9, 0.05, 2.0), 200.0)
    assert np.all(traj.states[:, [0, 1, 2, 4]] >= 0.0)
    assert np.all(traj.states[:, 3] >= DEFAULTS.q_min)


def test_stop_callback():
    traj = integrate(START, U, 100.0, stop=lambda t, y, dy: t > 1.0)
    assert traj.terminal_event is TerminalEvent.CONVERGED
    assert 1.0 < traj.times[-1] < 100.0


def test_step_failure():
    traj = integrate(START, U, 10.0, h_min=1.0, h0=1.0, h_max=1.0, rtol=1e-14, atol=1e-16)
    assert traj.terminal_event is TerminalEvent.STEP_FAILURE
    assert len(traj.times) >= 1


def test_validation():
    with pytest.raises(DomainError):
        integrate([-1.0, 0, 0, 3.0, 0], U, 1.0)
    with pytest.raises(ValueError):
        integrate([1.0, 0, 0, 3.0], U, 1.0)
    with pytest.raises(ValueError):
        integrate(START, U, 0.0)
    with pytest.raises(ValueError):
        integrate(START, U, 1.0, rtol=0.0)


def test_trajectory_rows_and_final():
    traj = integrate(State(*START), U, 1.0)
    rows = list(traj.rows())
    assert len(rows) == len(traj.times)
    assert rows[-1]["c"] == traj.final.c


def test_candidates_and_distance():
    assert set(candidate_equilibria(U)) == {"x0", "x10", "x11"}
    assert set(candidate_equilibria(Control(0.5, 3.5, 1.0))) == {"x0"}
    assert relative_distance(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == 0.0
    assert relative_distance(np.array([1.0, 1e-3]), np.array([1.0, 0.0])) == pytest.approx(1.0)


def test_inconclusive_when_horizon_short():
    rep = converge_to_equilibrium(START, Control(0.5, 0.3, 1.0), t_max=1.0)
    assert not rep.conclusive and rep.nearest is None and rep.regime is None
