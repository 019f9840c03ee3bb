"""Steady-state criteria at the coexistence equilibrium and admissible-set tests."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .equilibria import psi_alpha_inv, psi_alpha_inv_masked
from .errors import DomainError, MembershipError
from .model import DEFAULTS, Control, ModelParams, mu_inv


class SetMode(str, enum.Enum):
    U_2D = "U_2D"  # (alpha, d) at a fixed feed s_in
    W_3D = "W_3D"  # (alpha, d, s_in) with the feed free
    B_BOX = "B_BOX"  # (alpha, d) in U(z) and s_in in (0, z)


@dataclass(frozen=True)
class AdmissibleSet:
    mode: SetMode
    bound: Optional[float] = None  # s_in for U_2D, z for B_BOX, unused for W_3D

    @classmethod
    def U(cls, s_in: Optional[float] = None) -> "AdmissibleSet":
        return cls(SetMode.U_2D, s_in)

    @classmethod
    def W(cls) -> "AdmissibleSet":
        return cls(SetMode.W_3D)

    @classmethod
    def B(cls, z: float) -> "AdmissibleSet":
        return cls(SetMode.B_BOX, z)


def _threshold_below(alpha, d, level, p) -> bool:
    try:
        return bool(psi_alpha_inv(alpha, d, p) < level)
    except DomainError:
        return False


def in_admissible(u: Control, aset: AdmissibleSet, p: ModelParams = DEFAULTS) -> bool:
    """Strict membership test; never raises."""
    if not (0.0 < u.alpha < 1.0 and u.d > 0.0):
        return False
    if aset.mode is SetMode.U_2D:
        # the 2-D set is defined at its own feed when one is given
        level = u.s_in if aset.bound is None else aset.bound
        return level > 0.0 and _threshold_below(u.alpha, u.d, level, p)
    if aset.mode is SetMode.W_3D:
        return u.s_in > 0.0 and _threshold_below(u.alpha, u.d, u.s_in, p)
    if aset.mode is SetMode.B_BOX:
        return 0.0 < u.s_in < aset.bound and _threshold_below(u.alpha, u.d, aset.bound, p)
    raise ValueError(f"unknown admissible-set mode {aset.mode!r}")


def _require_coexistence(u: Control, p: ModelParams) -> float:
    try:
        u.check_open()
        threshold = psi_alpha_inv(u.alpha, u.d, p)
    except DomainError as exc:
        raise MembershipError(f"control {u} is not admissible: {exc}") from exc
    if not threshold < u.s_in:
        raise MembershipError(f"control {u} is not admissible: threshold {threshold!r} >= s_in")
    return float(threshold)


def p_out(u: Control, p: ModelParams = DEFAULTS) -> float:
    """Algal productivity ``d * c*`` [g/L/day]."""
    threshold = _require_coexistence(u, p)
    return u.alpha * p.beta * p.gamma * u.d * (u.s_in - threshold) / float(mu_inv(u.d, p))


def p_in(u: Control, p: ModelParams = DEFAULTS) -> float:
    """Glucose feed rate ``d * s_in`` [g/L/day]."""
    if not (u.d > 0.0 and u.s_in > 0.0):
        raise DomainError("p_in needs d > 0 and s_in > 0", bound="d,s_in")
    return u.d * u.s_in


def p_yield(u: Control, p: ModelParams = DEFAULTS) -> float:
    """Yield ``c* / s_in`` (dimensionless)."""
    threshold = _require_coexistence(u, p)
    return u.alpha * p.beta * p.gamma * (u.s_in - threshold) / (u.s_in * float(mu_inv(u.d, p)))


def p_yield_batch_limit(alpha: float, p: ModelParams = DEFAULTS) -> float:
    """Limit of the yield as ``d -> 0``: ``alpha * beta * gamma / q_min``. Defined on [0, 1]."""
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}", bound="alpha")
    return alpha * p.beta * p.gamma / p.q_min


def _check_theta(theta: float):
    if not 0.0 <= theta <= 1.0:
        raise DomainError(f"theta must lie in [0, 1], got {theta}", bound="theta")


def p_theta(u: Control, theta: float, p: ModelParams = DEFAULTS) -> float:
    """Weighted net profit ``theta * P_out - (1 - theta) * P_in``."""
    _check_theta(theta)
    return theta * p_out(u, p) - (1.0 - theta) * p_in(u, p)


def theta_from_prices(w_in: float, w_out: float) -> float:
    """Weight equivalent to the price pair (glucose cost, algae value)."""
    if not (w_in > 0 and w_out > 0):
        raise DomainError("prices must be > 0", bound="prices")
    return w_out / (w_in + w_out)


def theta0(alpha, d, p: ModelParams = DEFAULTS):
    """Weight at which ``dP_theta/ds_in`` changes sign for fixed ``(alpha, d)``."""
    if np.any(np.greater_equal(d, p.mu_max)):
        raise DomainError(f"theta0 needs d < mu_max = {p.mu_max}", bound="mu_max")
    return 1.0 / (1.0 + alpha * p.beta * p.gamma / mu_inv(d, p))


def p_theta_sin_slope(alpha, d, theta, p: ModelParams = DEFAULTS):
    """``dP_theta/ds_in = (theta - theta0) (1 + alpha beta gamma / mu_inv(d)) d``."""
    gain = 1.0 + alpha * p.beta * p.gamma / mu_inv(d, p)
    return (theta - theta0(alpha, d, p)) * gain * d


@dataclass(frozen=True)
class ObjectiveValues:
    p_out: float
    p_in: float
    p_yield: float

    def p_theta(self, theta: float) -> float:
        _check_theta(theta)
        return theta * self.p_out - (1.0 - theta) * self.p_in

    def to_dict(self, theta: Optional[float] = None) -> dict:
        row = {"p_out": self.p_out, "p_in": self.p_in, "p_yield": self.p_yield}
        if theta is not None:
            row["theta"] = theta
            row["p_theta"] = self.p_theta(theta)
        return row


def evaluate(u: Control, p: ModelParams = DEFAULTS) -> ObjectiveValues:
    out = p_out(u, p)
    inflow = p_in(u, p)
    return ObjectiveValues(out, inflow, out / inflow)


# ---------------------------------------------------------------------------
# vectorised evaluation (NaN outside the admissible set)


def p_out_grid(alpha, d, s_in, p: ModelParams = DEFAULTS):
    alpha = np.asarray(alpha, dtype=float)
    d = np.asarray(d, dtype=float)
    threshold = psi_alpha_inv_masked(alpha, d, p)
    ok = (threshold < s_in) & (d > 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        q_star = p.q_min * p.mu_max / (p.mu_max - d)
        value = alpha * p.beta * p.gamma * d * (s_in - threshold) / q_star
    return np.where(ok, value, np.nan)


def p_in_grid(alpha, d, s_in, p: ModelParams = DEFAULTS):
    alpha = np.asarray(alpha, dtype=float)
    d = np.asarray(d, dtype=float)
    ok = np.isfinite(p_out_grid(alpha, d, s_in, p))
    return np.where(ok, d * s_in, np.nan)


def p_yield_grid(alpha, d, s_in, p: ModelParams = DEFAULTS):
    return p_out_grid(alpha, d, s_in, p) / p_in_grid(alpha, d, s_in, p)


def p_theta_grid(alpha, d, s_in, theta, p: ModelParams = DEFAULTS):
    _check_theta(theta)
    return theta * p_out_grid(alpha, d, s_in, p) - (1.0 - theta) * p_in_grid(alpha, d, s_in, p)
