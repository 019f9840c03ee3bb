"""Independent reference computations shared by the tests (symbolic and brute force)."""

from functools import lru_cache

import sympy as sp

from consortium.model import DEFAULTS

S, E, V, Q, C = sp.symbols("s e v q c", nonnegative=True)
ALPHA, D, SIN = sp.symbols("alpha d s_in", positive=True)


def symbolic_rhs(p=DEFAULTS):
    """Right-hand side typed in directly from the model equations (raw Droop form)."""
    phi = p.phi_max * S / (p.k_s + S)
    rho = p.rho_max * V / (p.k_v + V)
    mu = p.mu_max * (1 - p.q_min / Q)
    return sp.Matrix(
        [
            -phi * E / p.gamma + D * (SIN - S),
            (1 - ALPHA) * phi * E - D * E,
            ALPHA * p.beta * phi * E - rho * C - D * V,
            rho - p.mu_max * (Q - p.q_min),
            mu * C - D * C,
        ]
    )


@lru_cache(maxsize=None)
def symbolic_jacobian(p=DEFAULTS):
    rhs = symbolic_rhs(p)
    J = rhs.jacobian([S, E, V, Q, C])
    return sp.lambdify((S, E, V, Q, C, ALPHA, D, SIN), J, "numpy")


@lru_cache(maxsize=None)
def symbolic_g0(p=DEFAULTS):
    """Threshold g0(alpha, d) with its exact Hessian, from the inverse rate laws."""
    y = D / (1 - ALPHA)
    phi_inv = p.k_s * y / (p.phi_max - y)
    q_star = p.q_min * p.mu_max / (p.mu_max - D)
    u = D * q_star
    rho_inv = p.k_v * u / (p.rho_max - u)
    g0 = phi_inv + rho_inv / (ALPHA * p.beta * p.gamma)
    H = sp.hessian(g0, (ALPHA, D))
    return sp.lambdify((ALPHA, D), g0, "numpy"), sp.lambdify((ALPHA, D), H, "numpy")
