import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from consortium.equilibria import psi_alpha, psi_alpha_inv_masked
from consortium.errors import ConvergenceError, DomainError, InfeasibleError
from consortium.model import DEFAULTS, Control
from consortium.objectives import p_out, p_out_grid, p_theta_grid, p_yield, p_yield_grid
from consortium.optimizer import (
    Definiteness,
    OptimOptions,
    admissible_alpha_interval,
    classify_definiteness,
    golden_max,
    gradient_fd,
    grid_axes,
    grid_oracle,
    hessian_g0,
    hessian_map_g0,
    maximize_p_out,
    maximize_p_theta,
    maximize_yield_alpha,
    yield_global_argmax,
)

from oracles import symbolic_g0

FAST = OptimOptions(starts=4)


@pytest.fixture(scope="module")
def pout_1():
    return maximize_p_out(1.0, OptimOptions(oracle_n=400))


def test_pout_optimum(pout_1):
    u = pout_1.u_star
    assert (u.alpha, u.d) == pytest.approx((0.85259, 0.45734), abs=1e-5)
    assert pout_1.value == pytest.approx(0.7187046, abs=1e-7)
    assert pout_1.oracle_gap < 1e-6
    assert pout_1.spread < 1e-6
    assert not pout_1.boundary_supremum


def test_pout_gradient_vanishes(pout_1):
    u = pout_1.u_star
    grad = gradient_fd(lambda a, d: math.log(p_out(Control(a, d, 1.0))), u.alpha, u.d)
    assert np.max(np.abs(grad)) < 1e-6


def test_pout_beats_random_points(pout_1, rng):
    A = rng.uniform(0, 1, 10000)
    D = rng.uniform(0, DEFAULTS.d_sup, 10000)
    values = p_out_grid(A, D, 1.0)
    assert np.nanmax(values) <= pout_1.value


@pytest.mark.parametrize("s_in, value", [(0.5, 0.33085), (2.0, 1.52023)])
def test_pout_other_feeds(s_in, value):
    res = maximize_p_out(s_in, FAST)
    assert res.value == pytest.approx(value, abs=1e-5)


def test_pout_increases_with_feed():
    values = [maximize_p_out(s, FAST).value for s in (0.5, 1.0, 1.5)]
    assert values[0] < values[1] < values[2]


def test_pout_domain():
    with pytest.raises(DomainError):
        maximize_p_out(0.0)


def test_iteration_cap():
    with pytest.raises(ConvergenceError) as info:
        maximize_p_out(1.0, OptimOptions(starts=1, max_iter=5))
    assert info.value.best is not None


def test_threads_do_not_change_result():
    one = maximize_p_out(1.0, OptimOptions(starts=6, workers=1))
    many = maximize_p_out(1.0, OptimOptions(starts=6, workers=4))
    assert one.to_dict() == many.to_dict()


def test_ptheta_one_equals_pout(pout_1):
    res = maximize_p_theta(1.0, 1.0)
    assert (res.u_star.alpha, res.u_star.d) == pytest.approx((pout_1.u_star.alpha, pout_1.u_star.d), abs=1e-5)


def test_ptheta_zero_is_boundary():
    res = maximize_p_theta(0.0, 1.0)
    assert res.boundary_supremum and res.value == 0.0
    assert (res.u_star.alpha, res.u_star.d) == (1.0, 0.0)


@pytest.mark.parametrize("theta", [0.3, 0.5, 0.7, 0.9])
def test_ptheta_matches_grid(theta):
    res = maximize_p_theta(theta, 1.0, OptimOptions(oracle_n=400))
    assert res.oracle_gap < 1e-4
    assert res.value >= grid_oracle("ptheta", 1.0, 400, theta=theta).value - 1e-12


def test_ptheta_small_weight_interior():
    # just above the critical weight the optimum hugs the (1, 0) corner but stays interior
    res = maximize_p_theta(0.22, 1.0)
    assert not res.boundary_supremum
    assert res.value > 0
    alphas, ds = np.linspace(0.98, 0.9999, 600), np.linspace(1e-4, 0.02, 600)
    A, D = np.meshgrid(alphas, ds)
    assert res.value >= np.nanmax(p_theta_grid(A, D, 1.0, 0.22)) - 1e-9


def test_ptheta_below_critical_weight_is_boundary():
    critical = 1.0 / (1.0 + DEFAULTS.yield_batch_max)
    assert maximize_p_theta(critical * 0.9, 1.0, FAST).boundary_supremum


def test_ptheta_domain():
    with pytest.raises(DomainError):
        maximize_p_theta(1.5, 1.0)


def test_grid_axes_nested():
    a1, d1 = grid_axes(50)
    a2, d2 = grid_axes(100)
    np.testing.assert_allclose(a1, a2[1::2], rtol=1e-15)
    np.testing.assert_allclose(d1, d2[1::2], rtol=1e-15)
    with pytest.raises(ValueError):
        grid_axes(1)


def test_grid_oracle_empty():
    with pytest.raises(InfeasibleError):
        grid_oracle("pout", 1e-9, 10)


def test_grid_oracle_tie_break():
    best = grid_oracle(lambda a, d: np.zeros_like(a), 1.0, 10)
    assert best.alpha == 0.1 and best.d == pytest.approx(DEFAULTS.d_sup / 10)


def test_golden_max():
    assert golden_max(lambda x: -(x - 0.3) ** 2, 0.0, 1.0) == pytest.approx(0.3, abs=1e-9)
    with pytest.raises(ConvergenceError):
        golden_max(lambda x: -x * x, -1.0, 1.0, tol=0.0, max_iter=5)


def test_yield_alpha_interior_matches_scan():
    res = maximize_yield_alpha(0.5, 1.0)
    assert 0.0 < res.alpha_lo < res.alpha < res.alpha_hi < 1.0
    alphas = np.arange(res.alpha_lo, res.alpha_hi, 1e-5)
    scan = p_yield_grid(alphas, 0.5, 1.0)
    best = alphas[np.nanargmax(scan)]
    assert res.alpha == pytest.approx(best, abs=1e-5)
    assert res.value >= np.nanmax(scan) - 1e-12


def test_yield_alpha_limit_small_d():
    res = maximize_yield_alpha(1e-6, 1.0)
    assert res.alpha > 0.99
    assert res.value == pytest.approx(DEFAULTS.yield_batch_max, rel=1e-2)


def test_yield_alpha_infeasible():
    with pytest.raises(InfeasibleError):
        maximize_yield_alpha(0.95, 1.0)
    with pytest.raises(InfeasibleError):
        maximize_yield_alpha(0.9, 0.01)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.9), st.floats(0.3, 3.0))
def test_admissible_interval_edges(d, s_in):
    try:
        lo, hi = admissible_alpha_interval(d, s_in)
    except InfeasibleError:
        return
    inside = psi_alpha_inv_masked(np.linspace(lo, hi, 50)[1:-1], d)
    assert np.all(inside < s_in)
    assert float(psi_alpha_inv_masked(lo, d)) == pytest.approx(s_in, rel=1e-6) or lo < 1e-12
    assert float(psi_alpha_inv_masked(hi, d)) >= s_in * (1 - 1e-6)


def test_yield_global_argmax():
    res = yield_global_argmax()
    assert (res.alpha, res.d) == (1.0, 0.0)
    assert res.value == pytest.approx(3.6666666666666665, abs=1e-12)
    assert res.batch_degenerate
    for d in (0.1, 0.3, 0.5):
        assert res.value > maximize_yield_alpha(d, 1.0).value


def test_hessian_matches_symbolic():
    _, H = symbolic_g0()
    for a, d in [(0.3, 0.1), (0.5, 0.5), (0.85, 0.3), (0.1, 0.05), (0.7, 0.6)]:
        exact = np.array(H(a, d), dtype=float)
        h_aa, h_ad, h_dd = hessian_g0(a, d)
        got = np.array([[h_aa, h_ad], [h_ad, h_dd]], dtype=float)
        np.testing.assert_allclose(got, exact, rtol=1e-4, atol=1e-6)


def test_hessian_map_classes_match_symbolic():
    _, H = symbolic_g0()
    checked = 0
    for c in hessian_map_g0(60, 1.0):
        if c.classification is None:
            continue
        exact = np.linalg.eigvalsh(np.array(H(c.alpha, c.d), dtype=float))
        if np.min(np.abs(exact)) < 1e-3 * np.max(np.abs(exact)):
            continue  # too close to singular for a sign comparison
        expected = classify_definiteness(exact[0], exact[1])
        assert c.classification is expected, (c.alpha, c.d)
        checked += 1
    assert checked > 1000


def test_hessian_symmetric_and_threshold_increasing():
    cells = [c for c in hessian_map_g0(40, 1.0) if c.classification is not None]
    from consortium.equilibria import psi_alpha_inv_partials

    for c in cells:
        assert psi_alpha_inv_partials(c.alpha, c.d)[1] > 0
    h = hessian_g0(np.array([0.4]), np.array([0.3]))
    assert np.all(np.isfinite(h))


def test_classify_definiteness():
    assert classify_definiteness(1.0, 2.0) is Definiteness.POS_DEF
    assert classify_definiteness(-2.0, -1.0) is Definiteness.NEG_DEF
    assert classify_definiteness(-1.0, 1.0) is Definiteness.NON_DEF
    assert classify_definiteness(0.0, 1.0) is Definiteness.SINGULAR


def test_hessian_map_both_kinds():
    cells = hessian_map_g0(100, 1.0)
    assert len(cells) == 100 * 100
    kinds = {c.classification for c in cells}
    assert Definiteness.NON_DEF in kinds
    assert Definiteness.POS_DEF in kinds
    assert None in kinds
    absent = next(c for c in cells if c.classification is None)
    assert absent.to_dict()["classification"] == "ABSENT"
    assert math.isnan(absent.h_aa)


def test_hessian_map_cells_inside_u():
    for c in hessian_map_g0(30, 1.0):
        inside = float(psi_alpha_inv_masked(c.alpha, c.d)) < 1.0
        assert inside == (c.classification is not None)


def test_result_to_dict(pout_1):
    out = pout_1.to_dict()
    assert out["objective"] == "pout" and out["s_in"] == 1.0
    assert out["multistart_spread"] == pout_1.spread


def test_p_yield_consistent():
    u = Control(0.5, 0.3, 1.0)
    assert p_yield(u) == pytest.approx(float(p_yield_grid(0.5, 0.3, 1.0)))
    assert psi_alpha(0.5, 1.0) > 0.3
