"""Closed-form steady states, existence thresholds and local stability."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError, ExistenceError, PreconditionError
from .model import (
    DEFAULTS,
    Control,
    ModelParams,
    State,
    jacobian,
    mu_inv,
    ode_rhs,
    phi,
    phi_inv,
    rho,
    rho_inv,
)

#: Half-width of the band around d1 and d2 reported as BOUNDARY.
BOUNDARY_BAND = 1e-9
#: Eigenvalue real parts within this band of zero are MARGINAL.
STABILITY_BAND = 1e-8
#: Largest residual accepted by :func:`local_stability`.
EQUILIBRIUM_RESIDUAL_TOL = 1e-8


class Regime(str, enum.Enum):
    COEXISTENCE_GAS = "COEXISTENCE_GAS"  # 0 < d < d1
    ALGAL_WASHOUT_GAS = "ALGAL_WASHOUT_GAS"  # d1 < d < d2
    TOTAL_WASHOUT_GAS = "TOTAL_WASHOUT_GAS"  # d2 < d
    BOUNDARY = "BOUNDARY"  # d within BOUNDARY_BAND of d1 or d2


class Stability(str, enum.Enum):
    STABLE = "STABLE"
    UNSTABLE = "UNSTABLE"
    MARGINAL = "MARGINAL"


#: Labels from the existence/stability table, keyed by regime then equilibrium.
EXPECTED_STABILITY = {
    Regime.COEXISTENCE_GAS: {"x0": Stability.UNSTABLE, "x10": Stability.UNSTABLE, "x11": Stability.STABLE},
    Regime.ALGAL_WASHOUT_GAS: {"x0": Stability.UNSTABLE, "x10": Stability.STABLE},
    Regime.TOTAL_WASHOUT_GAS: {"x0": Stability.STABLE},
}


# ---------------------------------------------------------------------------
# coexistence threshold


def d_upper(alpha: float, p: ModelParams = DEFAULTS) -> float:
    """Supremum of d on which the substrate threshold is finite for this alpha."""
    return min((1.0 - alpha) * p.phi_max, p.d_rho_bound)


def _check_alpha(alpha):
    if np.any(np.less_equal(alpha, 0.0)) or np.any(np.greater_equal(alpha, 1.0)):
        raise DomainError("alpha must lie in (0, 1)", bound="alpha")


def psi_alpha_inv(alpha, d, p: ModelParams = DEFAULTS):
    """Substrate feed needed for coexistence at dilution ``d``.

    ``phi_inv(d / (1 - alpha)) + rho_inv(d * mu_inv(d)) / (alpha * beta * gamma)``.
    Strictly increasing in ``d``; raises :class:`DomainError` naming the saturated
    rate law when ``d`` is beyond its finite range.
    """
    _check_alpha(alpha)
    if np.any(np.less(d, 0.0)):
        raise DomainError("d must be >= 0", bound="d")
    bacterial = phi_inv(d / (1.0 - alpha), p)
    algal = rho_inv(d * mu_inv(d, p), p)
    return bacterial + algal / (alpha * p.beta * p.gamma)


def psi_alpha_inv_masked(alpha, d, p: ModelParams = DEFAULTS):
    """Vectorised threshold returning ``inf`` wherever it is undefined (no exceptions)."""
    alpha = np.asarray(alpha, dtype=float)
    d = np.asarray(d, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        y = d / (1.0 - alpha)
        qd = p.q_min * p.mu_max / (p.mu_max - d)
        uptake = d * qd
        out = p.k_s * y / (p.phi_max - y) + p.k_v * uptake / (p.rho_max - uptake) / (alpha * p.beta * p.gamma)
    ok = (
        (alpha > 0.0)
        & (alpha < 1.0)
        & (d >= 0.0)
        & (y < p.phi_max - 1e-12)
        & (d < p.mu_max - 1e-12)
        & (uptake < p.rho_max - 1e-12)
    )
    return np.where(ok, out, np.inf)


def _psi_inv_fast(alpha: float, d: float, p: ModelParams) -> float:
    y = d / (1.0 - alpha)
    if y >= p.phi_max - 1e-12 or d >= p.mu_max - 1e-12:
        return math.inf
    uptake = d * p.q_min * p.mu_max / (p.mu_max - d)
    if uptake >= p.rho_max - 1e-12:
        return math.inf
    return p.k_s * y / (p.phi_max - y) + p.k_v * uptake / (p.rho_max - uptake) / (alpha * p.beta * p.gamma)


def psi_alpha_inv_partials(alpha: float, d: float, p: ModelParams = DEFAULTS) -> tuple[float, float]:
    """Analytic ``(d/dalpha, d/dd)`` of :func:`psi_alpha_inv`."""
    _check_alpha(alpha)
    y = d / (1.0 - alpha)
    dphi_inv = p.k_s * p.phi_max / (p.phi_max - y) ** 2
    q_star = mu_inv(d, p)
    dq_star = p.q_min * p.mu_max / (p.mu_max - d) ** 2
    uptake = d * q_star
    drho_inv = p.k_v * p.rho_max / (p.rho_max - uptake) ** 2
    abg = alpha * p.beta * p.gamma
    by_alpha = dphi_inv * d / (1.0 - alpha) ** 2 - rho_inv(uptake, p) / (alpha * abg)
    by_d = dphi_inv / (1.0 - alpha) + drho_inv * (q_star + d * dq_star) / abg
    return by_alpha, by_d


def psi_alpha(alpha: float, s_in: float, p: ModelParams = DEFAULTS) -> float:
    """Dilution threshold ``d1``: the root of ``psi_alpha_inv(alpha, d) = s_in``.

    Bisection on ``(0, d_upper(alpha))`` down to a bracket of width 1e-13,
    followed by a single Newton step from the better bracket end.
    """
    _check_alpha(alpha)
    if not s_in > 0:
        raise DomainError(f"s_in must be > 0, got {s_in}", bound="s_in")
    lo, hi = 0.0, d_upper(alpha, p)
    while hi - lo > 1e-13:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _psi_inv_fast(alpha, mid, p) < s_in:
            lo = mid
        else:
            hi = mid
    best = lo
    r_lo = abs(_psi_inv_fast(alpha, lo, p) - s_in)
    r_hi = abs(_psi_inv_fast(alpha, hi, p) - s_in)
    if r_hi < r_lo:
        best = hi
    residual = _psi_inv_fast(alpha, best, p) - s_in
    if best > 0.0 and math.isfinite(residual):
        slope = psi_alpha_inv_partials(alpha, best, p)[1]
        candidate = best - residual / slope
        if lo <= candidate <= hi:
            r_new = _psi_inv_fast(alpha, candidate, p) - s_in
            if abs(r_new) < abs(residual):
                best = candidate
    return best


def d2_threshold(alpha: float, s_in: float, p: ModelParams = DEFAULTS) -> float:
    """Bacterial washout threshold ``(1 - alpha) * phi(s_in)``."""
    return (1.0 - alpha) * float(phi(s_in, p))


# ---------------------------------------------------------------------------
# steady states


def equilibrium_x0(u: Control, p: ModelParams = DEFAULTS) -> State:
    """Total washout ``(s_in, 0, 0, q_min, 0)``; exists for every control."""
    return State(u.s_in, 0.0, 0.0, p.q_min, 0.0)


def _bacterial_part(u: Control, p: ModelParams):
    s_star = float(phi_inv(u.d / (1.0 - u.alpha), p))
    remaining = u.s_in - s_star
    e_star = (1.0 - u.alpha) * p.gamma * remaining
    v_in = u.alpha * p.beta * p.gamma * remaining
    return s_star, e_star, v_in


def equilibrium_x10(u: Control, p: ModelParams = DEFAULTS) -> State:
    """Algal washout state; exists iff ``d < d2 = (1 - alpha) phi(s_in)``."""
    if u.alpha >= 1.0 or u.d <= 0.0 or u.s_in <= 0.0:
        raise ExistenceError(f"algal washout state needs alpha < 1, d > 0, s_in > 0 (got {u})")
    d2 = d2_threshold(u.alpha, u.s_in, p)
    if not u.d < d2:
        raise ExistenceError(f"algal washout state needs d < d2 = {d2!r}, got d = {u.d!r}")
    s_star, e_star, v_in = _bacterial_part(u, p)
    q0 = p.q_min + float(rho(v_in, p)) / p.mu_max
    return State(s_star, e_star, v_in, q0, 0.0)


def equilibrium_x11(u: Control, p: ModelParams = DEFAULTS) -> State:
    """Coexistence state; exists iff ``psi_alpha_inv(alpha, d) < s_in``."""
    try:
        u.check_open()
        threshold = psi_alpha_inv(u.alpha, u.d, p)
    except DomainError as exc:
        raise ExistenceError(f"coexistence state does not exist: {exc}") from exc
    if not threshold < u.s_in:
        raise ExistenceError(f"coexistence state needs psi_alpha_inv = {threshold!r} < s_in = {u.s_in!r}")
    s_star, e_star, v_in = _bacterial_part(u, p)
    q_star = float(mu_inv(u.d, p))
    v_star = float(rho_inv(u.d * q_star, p))
    c_star = (v_in - v_star) / q_star
    return State(s_star, e_star, v_star, q_star, c_star)


def residual_norm(x: State, u: Control, p: ModelParams = DEFAULTS) -> float:
    return float(np.max(np.abs(ode_rhs(x, u, p))))


def eigenvalues(x: State, u: Control, p: ModelParams = DEFAULTS) -> np.ndarray:
    ev = np.linalg.eigvals(jacobian(x, u, p))
    return ev[np.lexsort((ev.imag, ev.real))]


def local_stability(x: State, u: Control, p: ModelParams = DEFAULTS) -> Stability:
    """Label an equilibrium by the signs of the Jacobian eigenvalue real parts."""
    res = residual_norm(x, u, p)
    if not res < EQUILIBRIUM_RESIDUAL_TOL:
        raise PreconditionError(f"state is not an equilibrium (residual {res:.3e})")
    real = eigenvalues(x, u, p).real
    if np.all(real < -STABILITY_BAND):
        return Stability.STABLE
    if np.any(real > STABILITY_BAND):
        return Stability.UNSTABLE
    return Stability.MARGINAL


# ---------------------------------------------------------------------------
# classification


@dataclass
class EquilibriumReport:
    control: Control
    x0: State
    x10: Optional[State]
    x11: Optional[State]
    d1: float
    d2: float
    regime: Regime
    residuals: dict = field(default_factory=dict)
    stability: dict = field(default_factory=dict)
    eigenvalues: dict = field(default_factory=dict)

    def equilibria(self) -> dict:
        out = {"x0": self.x0}
        if self.x10 is not None:
            out["x10"] = self.x10
        if self.x11 is not None:
            out["x11"] = self.x11
        return out

    def to_dict(self) -> dict:
        return {
            "control": self.control.to_dict(),
            "d1": self.d1,
            "d2": self.d2,
            "regime": self.regime.value,
            "x0": self.x0.to_dict(),
            "x10": None if self.x10 is None else self.x10.to_dict(),
            "x11": None if self.x11 is None else self.x11.to_dict(),
            "residuals": dict(self.residuals),
            "stability": {k: v.value for k, v in self.stability.items()},
            "eigenvalues": {
                k: [{"re": float(z.real), "im": float(z.imag)} for z in v] for k, v in self.eigenvalues.items()
            },
        }


def regime_of(d: float, d1: float, d2: float) -> Regime:
    if abs(d - d1) < BOUNDARY_BAND or abs(d - d2) < BOUNDARY_BAND:
        return Regime.BOUNDARY
    if d < d1:
        return Regime.COEXISTENCE_GAS
    if d < d2:
        return Regime.ALGAL_WASHOUT_GAS
    return Regime.TOTAL_WASHOUT_GAS


def classify(u: Control, p: ModelParams = DEFAULTS) -> EquilibriumReport:
    """Thresholds, existing equilibria and their local stability for ``u``."""
    u.check_open()
    d1 = psi_alpha(u.alpha, u.s_in, p)
    d2 = d2_threshold(u.alpha, u.s_in, p)
    regime = regime_of(u.d, d1, d2)

    x10 = x11 = None
    if u.d < d2:
        x10 = equilibrium_x10(u, p)
    if u.d < d1:
        try:
            x11 = equilibrium_x11(u, p)
        except ExistenceError:
            # only reachable inside the boundary band, where d and d1 agree to ~1e-13
            x11 = None

    report = EquilibriumReport(u, equilibrium_x0(u, p), x10, x11, d1, d2, regime)
    for name, x in report.equilibria().items():
        report.residuals[name] = residual_norm(x, u, p)
        report.eigenvalues[name] = eigenvalues(x, u, p)
        report.stability[name] = local_stability(x, u, p)
    return report
