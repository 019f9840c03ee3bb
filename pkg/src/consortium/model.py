"""Consortium chemostat model: parameters, rate laws, dynamics and Jacobian.

State ordering throughout the package is ``(s, e, v, q, c)``:

=====  ==============================  ============
 s     glucose                          g/L
 e     E. coli biomass                  g/L
 v     secreted vitamin                 mg/L
 q     internal algal vitamin quota     mg/g
 c     algal biomass                    g/L
=====  ==============================  ============

Rate laws accept Python floats or numpy arrays and broadcast.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .errors import DomainError

#: Inverses refuse arguments this close to their saturation limit.
SATURATION_GUARD = 1e-12

PARAM_NAMES = ("k_v", "k_s", "rho_max", "phi_max", "q_min", "gamma", "mu_max", "beta")

PARAM_UNITS = {
    "k_v": "mg/L",
    "k_s": "g/L",
    "rho_max": "mg/g/day",
    "phi_max": "1/day",
    "q_min": "mg/g",
    "gamma": "g/g",
    "mu_max": "1/day",
    "beta": "mg/g",
}


@dataclass(frozen=True)
class ModelParams:
    """Biological constants of the consortium (defaults: reference parameter set)."""

    k_v: float = 0.57  # half-saturation, vitamin uptake [mg/L]
    k_s: float = 0.09  # half-saturation, glucose [g/L]
    rho_max: float = 27.3  # max vitamin uptake rate [mg/g/day]
    phi_max: float = 6.48  # max bacterial growth rate [1/day]
    q_min: float = 2.76  # minimal vitamin quota [mg/g]
    gamma: float = 0.44  # bacterial growth yield [g/g]
    mu_max: float = 1.02  # max algal growth rate [1/day]
    beta: float = 23.0  # vitamin synthesis yield [mg/g]

    def __post_init__(self):
        for name in PARAM_NAMES:
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise TypeError(f"parameter {name} must be a number, got {value!r}")
            if not math.isfinite(value) or value <= 0:
                raise DomainError(f"parameter {name} must be finite and > 0, got {value}", bound=name)
            object.__setattr__(self, name, float(value))

    # Derived validity bounds. Properties so that overrides never see stale values.

    @property
    def d_rho_bound(self) -> float:
        """Largest dilution with ``d * mu_inv(d) < rho_max``."""
        return self.mu_max * self.rho_max / (self.rho_max + self.q_min * self.mu_max)

    @property
    def d_sup(self) -> float:
        """Supremum of dilution rates for which a coexistence state can exist (any alpha)."""
        return min(self.phi_max, self.d_rho_bound)

    @property
    def yield_batch_max(self) -> float:
        """Batch-limit yield ``beta * gamma / q_min`` reached at (alpha, d) = (1, 0)."""
        return self.beta * self.gamma / self.q_min

    def replace(self, **overrides) -> "ModelParams":
        unknown = set(overrides) - set(PARAM_NAMES)
        if unknown:
            raise KeyError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
        return dataclasses.replace(self, **overrides)

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def bounds_dict(self) -> dict:
        return {
            "d_rho_bound": self.d_rho_bound,
            "d_sup": self.d_sup,
            "yield_batch_max": self.yield_batch_max,
        }


DEFAULTS = ModelParams()


def parse_params_text(text: str, base: ModelParams = DEFAULTS) -> ModelParams:
    """Parse ``key = value`` lines (``#`` starts a comment) into overrides of ``base``."""
    overrides = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in PARAM_NAMES:
            raise ValueError(f"line {lineno}: unknown parameter {key!r}")
        if key in overrides:
            raise ValueError(f"line {lineno}: duplicate parameter {key!r}")
        try:
            overrides[key] = float(value)
        except ValueError:
            raise ValueError(f"line {lineno}: {key} is not a number: {value!r}") from None
    return base.replace(**overrides)


def load_params(path: Union[str, Path]) -> ModelParams:
    return parse_params_text(Path(path).read_text(encoding="utf-8"))


def format_params(p: ModelParams) -> str:
    lines = ["# consortium model parameters"]
    for name in PARAM_NAMES:
        lines.append(f"{name} = {getattr(p, name)!r}  # [{PARAM_UNITS[name]}]")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class State:
    """Point ``(s, e, v, q, c)`` of the state space."""

    s: float
    e: float
    v: float
    q: float
    c: float

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.e, self.v, self.q, self.c], dtype=float)

    @classmethod
    def from_array(cls, x: Iterable[float]) -> "State":
        s, e, v, q, c = (float(xi) for xi in x)
        return cls(s, e, v, q, c)

    def in_omega(self, p: ModelParams = DEFAULTS, slack: float = 0.0) -> bool:
        return in_omega(self.as_array(), p, slack)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class Control:
    """Operating point ``(alpha, d, s_in)``.

    Construction accepts the closed box ``alpha in [0, 1]``, ``d >= 0``, ``s_in >= 0``
    so that degenerate limits (batch operation, boundary suprema) stay representable.
    Criteria that need the open set call :meth:`check_open`.
    """

    alpha: float
    d: float
    s_in: float

    def __post_init__(self):
        for name in ("alpha", "d", "s_in"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value}", bound=name)
            object.__setattr__(self, name, value)
        if not 0.0 <= self.alpha <= 1.0:
            raise DomainError(f"alpha must lie in [0, 1], got {self.alpha}", bound="alpha")
        if self.d < 0.0:
            raise DomainError(f"d must be >= 0, got {self.d}", bound="d")
        if self.s_in < 0.0:
            raise DomainError(f"s_in must be >= 0, got {self.s_in}", bound="s_in")

    def check_open(self) -> "Control":
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}", bound="alpha")
        if self.d <= 0.0:
            raise DomainError(f"d must be > 0, got {self.d}", bound="d")
        if self.s_in <= 0.0:
            raise DomainError(f"s_in must be > 0, got {self.s_in}", bound="s_in")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# rate laws


def _require(violated, message, bound):
    if np.any(violated):
        raise DomainError(message, bound=bound)


def phi(s, p: ModelParams = DEFAULTS):
    """Monod growth rate of the bacteria on glucose [1/day]."""
    _require(np.less(s, 0), "phi: glucose concentration must be >= 0", "s>=0")
    return p.phi_max * s / (p.k_s + s)


def rho(v, p: ModelParams = DEFAULTS):
    """Vitamin uptake rate per unit algal biomass [mg/g/day]."""
    _require(np.less(v, 0), "rho: vitamin concentration must be >= 0", "v>=0")
    return p.rho_max * v / (p.k_v + v)


def mu(q, p: ModelParams = DEFAULTS):
    """Droop growth rate of the algae [1/day]."""
    _require(np.less(q, p.q_min), "mu: quota must be >= q_min", "q>=q_min")
    return p.mu_max * (1.0 - p.q_min / q)


def mu_times_q(q, p: ModelParams = DEFAULTS):
    """``mu(q) * q`` written as ``mu_max * (q - q_min)`` (no 1/q term)."""
    _require(np.less(q, p.q_min), "mu: quota must be >= q_min", "q>=q_min")
    return p.mu_max * (q - p.q_min)


def _check_inverse_arg(y, limit, name, bound):
    _require(np.less(y, 0), f"{name}: argument must be >= 0", f"{bound}>=0")
    _require(
        np.greater_equal(y, limit - SATURATION_GUARD),
        f"{name}: argument must be < {bound} = {limit!r}",
        bound,
    )


def phi_inv(y, p: ModelParams = DEFAULTS):
    _check_inverse_arg(y, p.phi_max, "phi_inv", "phi_max")
    return p.k_s * y / (p.phi_max - y)


def rho_inv(y, p: ModelParams = DEFAULTS):
    _check_inverse_arg(y, p.rho_max, "rho_inv", "rho_max")
    return p.k_v * y / (p.rho_max - y)


def mu_inv(y, p: ModelParams = DEFAULTS):
    _check_inverse_arg(y, p.mu_max, "mu_inv", "mu_max")
    return p.q_min * p.mu_max / (p.mu_max - y)


# ---------------------------------------------------------------------------
# dynamics


def in_omega(x, p: ModelParams = DEFAULTS, slack: float = 0.0) -> bool:
    s, e, v, q, c = x
    return min(s, e, v, c) >= -slack and q >= p.q_min - slack


def _as_vector(x) -> np.ndarray:
    if isinstance(x, State):
        return x.as_array()
    arr = np.asarray(x, dtype=float)
    if arr.shape != (5,):
        raise ValueError(f"state must have 5 components, got shape {arr.shape}")
    return arr


def rhs_unchecked(x, alpha, d, s_in, p: ModelParams = DEFAULTS):
    """Right-hand side without domain checks, as a tuple of floats (integrator hot path)."""
    s, e, v, q, c = x
    growth = p.phi_max * s / (p.k_s + s) * e
    uptake = p.rho_max * v / (p.k_v + v)
    return (
        -growth / p.gamma + d * (s_in - s),
        (1.0 - alpha) * growth - d * e,
        alpha * p.beta * growth - uptake * c - d * v,
        uptake - p.mu_max * (q - p.q_min),
        p.mu_max * (1.0 - p.q_min / q) * c - d * c,
    )


def ode_rhs(x, u: Control, p: ModelParams = DEFAULTS) -> np.ndarray:
    """Time derivative of the state, ``(ds, de, dv, dq, dc)`` per day."""
    arr = _as_vector(x)
    if not in_omega(arr, p):
        raise DomainError(f"state {arr.tolist()} is outside the state space", bound="omega")
    return np.array(rhs_unchecked(arr, u.alpha, u.d, u.s_in, p))


def jacobian(x, u: Control, p: ModelParams = DEFAULTS) -> np.ndarray:
    """Analytic 5x5 Jacobian of :func:`ode_rhs` with respect to ``(s, e, v, q, c)``."""
    arr = _as_vector(x)
    if not in_omega(arr, p):
        raise DomainError(f"state {arr.tolist()} is outside the state space", bound="omega")
    s, e, v, q, c = arr
    alpha, d = u.alpha, u.d
    phi_s = p.phi_max * s / (p.k_s + s)
    dphi = p.phi_max * p.k_s / (p.k_s + s) ** 2
    rho_v = p.rho_max * v / (p.k_v + v)
    drho = p.rho_max * p.k_v / (p.k_v + v) ** 2
    mu_q = p.mu_max * (1.0 - p.q_min / q)
    dmu = p.mu_max * p.q_min / q**2

    J = np.zeros((5, 5))
    J[0, 0] = -dphi * e / p.gamma - d
    J[0, 1] = -phi_s / p.gamma
    J[1, 0] = (1.0 - alpha) * dphi * e
    J[1, 1] = (1.0 - alpha) * phi_s - d
    J[2, 0] = alpha * p.beta * dphi * e
    J[2, 1] = alpha * p.beta * phi_s
    J[2, 2] = -drho * c - d
    J[2, 4] = -rho_v
    J[3, 2] = drho
    J[3, 3] = -p.mu_max
    J[4, 3] = dmu * c
    J[4, 4] = mu_q - d
    return J
