import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from consortium.equilibria import equilibrium_x11, psi_alpha, psi_alpha_inv, psi_alpha_inv_masked
from consortium.errors import DomainError, MembershipError
from consortium.model import DEFAULTS, Control
from consortium.objectives import (
    AdmissibleSet,
    evaluate,
    in_admissible,
    p_in,
    p_in_grid,
    p_out,
    p_out_grid,
    p_theta,
    p_theta_grid,
    p_theta_sin_slope,
    p_yield,
    p_yield_batch_limit,
    p_yield_grid,
    theta0,
    theta_from_prices,
)

U = Control(0.5, 0.5, 1.0)
C_STAR = 0.9077019600877473


def admissible(alpha, frac, s_in=1.0):
    """Map ``frac`` in (0, 1) onto the admissible d-range at ``alpha``."""
    return Control(alpha, frac * psi_alpha(alpha, s_in), s_in)


def test_p_out_example():
    assert p_out(U) == pytest.approx(0.5 * equilibrium_x11(U).c, rel=1e-14)
    assert p_out(U) == pytest.approx(0.5 * C_STAR, rel=1e-12)


def test_p_out_limits():
    assert p_out(Control(0.5, 1e-9, 1.0)) < 1e-8
    d1 = psi_alpha(0.5, 1.0)
    assert p_out(Control(0.5, d1 * (1 - 1e-9), 1.0)) < 1e-7


def test_p_in_examples():
    assert p_in(Control(0.3, 0.5, 1.0)) == 0.5
    assert p_in(Control(0.3, 0.5, 2.0)) == 1.0
    with pytest.raises(DomainError):
        p_in(Control(0.3, 0.0, 1.0))


def test_yield_example():
    assert p_yield(U) == pytest.approx(C_STAR, rel=1e-12)
    assert p_yield_batch_limit(1.0) == pytest.approx(3.6666666666666665, abs=1e-12)
    assert p_yield_batch_limit(0.4) == pytest.approx(0.4 * 23 * 0.44 / 2.76)
    with pytest.raises(DomainError):
        p_yield_batch_limit(1.5)


def test_yield_tends_to_batch_limit():
    for alpha in (0.3, 0.7):
        assert p_yield(Control(alpha, 1e-7, 1.0)) == pytest.approx(p_yield_batch_limit(alpha), rel=1e-5)


def test_membership_errors():
    for u in (Control(0.5, 0.93, 1.0), Control(1.0, 0.5, 1.0), Control(0.5, 0.9, 0.01)):
        with pytest.raises(MembershipError):
            p_out(u)
        with pytest.raises(MembershipError):
            p_yield(u)


def test_p_theta_examples():
    assert p_theta(U, 1.0) == p_out(U)
    assert p_theta(U, 0.0) == -p_in(U)
    assert p_theta(U, 0.5) == pytest.approx(-0.023, abs=5e-4)
    with pytest.raises(DomainError):
        p_theta(U, 1.5)


def test_theta_from_prices():
    assert theta_from_prices(2.0, 2.0) == 0.5
    assert theta_from_prices(1.0, 3.0) == 0.75
    with pytest.raises(DomainError):
        theta_from_prices(0.0, 1.0)


def test_theta0_example():
    assert theta0(0.5, 0.5) == pytest.approx(0.51689, abs=1e-5)
    assert theta0(1e-9, 0.5) == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(DomainError):
        theta0(0.5, 1.02)


@settings(max_examples=300)
@given(st.floats(1e-6, 1.0), st.floats(0.0, 1.0))
def test_theta0_in_unit_interval(alpha, d):
    assert 0.0 < theta0(alpha, d) < 1.0


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(0.0, 1.0))
def test_p_theta_affine_in_feed(alpha, frac, theta):
    """P_theta is affine in s_in with slope (theta - theta0) (1 + a b g / mu_inv(d)) d."""
    u = admissible(alpha, frac, 1.0)
    values = [p_theta(Control(u.alpha, u.d, s), theta) for s in (1.0, 1.5, 2.0)]
    slope = p_theta_sin_slope(u.alpha, u.d, theta)
    assert values[1] - values[0] == pytest.approx(0.5 * slope, rel=1e-9, abs=1e-12)
    assert values[2] - values[1] == pytest.approx(0.5 * slope, rel=1e-9, abs=1e-12)
    assert np.sign(slope) == np.sign(theta - theta0(u.alpha, u.d)) or abs(theta - theta0(u.alpha, u.d)) < 1e-12


def test_admissible_examples():
    assert in_admissible(U, AdmissibleSet.U(1.0))
    assert not in_admissible(Control(0.5, 0.9247, 1.0), AdmissibleSet.U(1.0))
    assert not in_admissible(Control(0.0, 0.5, 1.0), AdmissibleSet.U(1.0))
    assert not in_admissible(Control(1.0, 0.5, 1.0), AdmissibleSet.U(1.0))
    assert in_admissible(U, AdmissibleSet.U())
    assert in_admissible(U, AdmissibleSet.W())
    assert not in_admissible(Control(0.5, 0.5, 0.01), AdmissibleSet.W())
    assert in_admissible(Control(0.5, 0.5, 0.5), AdmissibleSet.B(1.0))
    assert not in_admissible(Control(0.5, 0.5, 1.5), AdmissibleSet.B(1.0))


@settings(max_examples=300, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 0.93), st.floats(0.0, 1.0), st.floats(0.0, 0.93), st.floats(0.2, 3.0))
def test_admissible_set_is_convex(a1, d1, a2, d2, s_in):
    g = lambda a, d: float(psi_alpha_inv_masked(a, d))  # noqa: E731
    assume(g(a1, d1) < s_in and g(a2, d2) < s_in)
    assert g(0.5 * (a1 + a2), 0.5 * (d1 + d2)) < s_in


@settings(max_examples=300, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_log_concavity(a1, f1, a2, f2):
    u1, u2 = admissible(a1, f1), admissible(a2, f2)
    mid = Control(0.5 * (u1.alpha + u2.alpha), 0.5 * (u1.d + u2.d), 1.0)
    lhs = math.log(p_out(mid))
    rhs = 0.5 * (math.log(p_out(u1)) + math.log(p_out(u2)))
    assert lhs >= rhs - 1e-9


@settings(max_examples=100, deadline=None)
@given(st.floats(0.02, 0.98))
def test_yield_decreasing_in_d(alpha):
    d1 = psi_alpha(alpha, 1.0)
    ds = np.linspace(1e-6, d1 * (1 - 1e-9), 50)
    ys = [p_yield(Control(alpha, d, 1.0)) for d in ds]
    assert all(b < a for a, b in zip(ys, ys[1:]))


def test_evaluate():
    vals = evaluate(U)
    assert vals.p_yield == pytest.approx(vals.p_out / vals.p_in)
    row = vals.to_dict(theta=0.25)
    assert row["p_theta"] == pytest.approx(0.25 * vals.p_out - 0.75 * vals.p_in)


def test_grids_match_scalars(rng):
    A = rng.uniform(0, 1, 500)
    D = rng.uniform(0, 0.95, 500)
    po = p_out_grid(A, D, 1.0)
    pi = p_in_grid(A, D, 1.0)
    py = p_yield_grid(A, D, 1.0)
    pt = p_theta_grid(A, D, 1.0, 0.3)
    hits = 0
    for k in range(500):
        u = Control(A[k], D[k], 1.0)
        if in_admissible(u, AdmissibleSet.U(1.0)):
            hits += 1
            assert po[k] == pytest.approx(p_out(u), rel=1e-12)
            assert pi[k] == pytest.approx(p_in(u), rel=1e-15)
            assert py[k] == pytest.approx(p_yield(u), rel=1e-12)
            assert pt[k] == pytest.approx(p_theta(u, 0.3), rel=1e-10, abs=1e-14)
        else:
            assert np.isnan(po[k]) and np.isnan(pi[k]) and np.isnan(pt[k])
    assert hits > 100


def test_threshold_matches_scalar_inverse():
    assert float(psi_alpha_inv_masked(0.3, 0.2)) == pytest.approx(psi_alpha_inv(0.3, 0.2), rel=1e-15)
    assert DEFAULTS.d_sup > 0.9
