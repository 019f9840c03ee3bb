"""Adaptive Dormand-Prince 5(4) integration of the consortium dynamics."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .equilibria import (
    Regime,
    equilibrium_x0,
    equilibrium_x10,
    equilibrium_x11,
)
from .errors import DomainError, ExistenceError
from .model import DEFAULTS, Control, ModelParams, State, in_omega, rhs_unchecked

# Dormand-Prince tableau (fifth-order solution propagated, FSAL)
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

SAFETY = 0.9
PI_ALPHA = 0.7 / 5  # proportional exponent
PI_BETA = 0.4 / 5  # integral exponent
MIN_FACTOR, MAX_FACTOR = 0.2, 5.0
PROJECTION_BAND = 1e-12


class TerminalEvent(str, enum.Enum):
    CONVERGED = "CONVERGED"
    MAX_TIME = "MAX_TIME"
    STEP_FAILURE = "STEP_FAILURE"


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # shape (n, 5), columns s, e, v, q, c
    control: Control
    terminal_event: TerminalEvent
    rejected_steps: int = 0

    @property
    def final(self) -> State:
        return State.from_array(self.states[-1])

    def rows(self):
        for t, x in zip(self.times, self.states):
            yield {"t": float(t), "s": x[0], "e": x[1], "v": x[2], "q": x[3], "c": x[4]}


def _project(y: list, p: ModelParams) -> list:
    for i in (0, 1, 2, 4):
        if -PROJECTION_BAND <= y[i] < 0.0:
            y[i] = 0.0
    if p.q_min - PROJECTION_BAND <= y[3] < p.q_min:
        y[3] = p.q_min
    return y


def _combine(y, h, coeffs, ks):
    """``y + h * sum(c_j * k_j)`` on plain float lists (5-vectors are too small for numpy)."""
    out = list(y)
    for c, k in zip(coeffs, ks):
        if c:
            hc = h * c
            for m in range(5):
                out[m] += hc * k[m]
    return out


def _step(f, y, h, k1):
    ks = [k1]
    for i in range(1, 7):
        ks.append(f(_combine(y, h, _A[i], ks)))
    return ks


def integrate(
    x0,
    u: Control,
    t_end: float,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    p: ModelParams = DEFAULTS,
    h0: Optional[float] = None,
    h_min: float = 1e-12,
    h_max: float = math.inf,
    fixed_step: Optional[float] = None,
    stop: Optional[Callable[[float, tuple, tuple], bool]] = None,
) -> Trajectory:
    """Integrate from ``x0`` over ``[0, t_end]``.

    ``stop(t, y, dy)`` is checked after each accepted step and ends the run with
    ``CONVERGED``. ``fixed_step`` disables error control (used for order studies).
    """
    y = [float(v) for v in (x0.as_array() if isinstance(x0, State) else x0)]
    if len(y) != 5:
        raise ValueError(f"state must have 5 components, got {len(y)}")
    if not in_omega(y, p):
        raise DomainError(f"initial state {y} is outside the state space", bound="omega")
    if not (rtol > 0 and atol > 0):
        raise ValueError("tolerances must be > 0")
    if not t_end > 0:
        raise ValueError("t_end must be > 0")
    alpha, d, s_in = u.alpha, u.d, u.s_in
    f = lambda z: rhs_unchecked(z, alpha, d, s_in, p)  # noqa: E731

    t = 0.0
    times, states = [t], [tuple(y)]
    k1 = f(y)
    rejected = 0

    if fixed_step is not None:
        for _ in range(int(round(t_end / fixed_step))):
            ks = _step(f, y, fixed_step, k1)
            y = _combine(y, fixed_step, _B5, ks)
            t += fixed_step
            k1 = f(y)
            times.append(t)
            states.append(tuple(y))
        return Trajectory(np.array(times), np.array(states), u, TerminalEvent.MAX_TIME)

    if h0 is None:
        d0 = math.sqrt(sum((yi / (atol + rtol * abs(yi))) ** 2 for yi in y) / 5)
        d1 = math.sqrt(sum((ki / (atol + rtol * abs(yi))) ** 2 for ki, yi in zip(k1, y)) / 5)
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h = min(max(h0, h_min), h_max, t_end)
    err_prev = 1.0
    event = TerminalEvent.MAX_TIME

    while t < t_end:
        h = min(h, t_end - t)
        ks = _step(f, y, h, k1)
        y_new = _combine(y, h, _B5, ks)
        acc = 0.0
        for m in range(5):
            e_m = h * sum(c * k[m] for c, k in zip(_E, ks) if c)
            acc += (e_m / (atol + rtol * max(abs(y[m]), abs(y_new[m])))) ** 2
        err = math.sqrt(acc / 5)

        if err <= 1.0:
            t += h
            y = _project(list(y_new), p)
            k1 = ks[6] if y == y_new else f(y)
            times.append(t)
            states.append(tuple(y))
            err = max(err, 1e-10)
            factor = SAFETY * err ** (-PI_ALPHA) * err_prev**PI_BETA
            err_prev = err
            h = min(h * min(MAX_FACTOR, max(MIN_FACTOR, factor)), h_max)
            if stop is not None and stop(t, y, k1):
                event = TerminalEvent.CONVERGED
                break
        else:
            rejected += 1
            h *= max(MIN_FACTOR, SAFETY * err ** (-1 / 5))
            if h < h_min:
                event = TerminalEvent.STEP_FAILURE
                break
    return Trajectory(np.array(times), np.array(states), u, event, rejected)


# ---------------------------------------------------------------------------
# attractor identification

_REGIME_OF = {"x0": Regime.TOTAL_WASHOUT_GAS, "x10": Regime.ALGAL_WASHOUT_GAS, "x11": Regime.COEXISTENCE_GAS}


@dataclass
class ConvergenceReport:
    state: State
    nearest: Optional[str]  # "x0", "x10" or "x11"
    regime: Optional[Regime]
    distance: float  # relative distance to the nearest equilibrium
    t_final: float
    conclusive: bool
    outside_stability_domain: bool
    distances: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "state": self.state.to_dict(),
            "nearest": self.nearest,
            "regime": None if self.regime is None else self.regime.value,
            "distance": self.distance,
            "t_final": self.t_final,
            "conclusive": self.conclusive,
            "outside_stability_domain": self.outside_stability_domain,
            "distances": dict(self.distances),
        }


def relative_distance(x: np.ndarray, ref: np.ndarray, floor: float = 1e-3) -> float:
    return float(np.max(np.abs(x - ref) / np.maximum(np.abs(ref), floor)))


def candidate_equilibria(u: Control, p: ModelParams = DEFAULTS) -> dict:
    out = {"x0": equilibrium_x0(u, p)}
    for name, fn in (("x10", equilibrium_x10), ("x11", equilibrium_x11)):
        try:
            out[name] = fn(u, p)
        except ExistenceError:
            pass
    return out


def identify_attractor(
    traj: Trajectory, p: ModelParams = DEFAULTS, match_tol: float = 1e-3, outside: bool = False
) -> ConvergenceReport:
    """Name the closed-form equilibrium closest to the end of ``traj``."""
    u = traj.control
    final = traj.states[-1]
    distances = {
        name: relative_distance(final, eq.as_array()) for name, eq in candidate_equilibria(u, p).items()
    }
    nearest = min(distances, key=distances.get)
    converged = traj.terminal_event is TerminalEvent.CONVERGED
    conclusive = converged and distances[nearest] < match_tol
    return ConvergenceReport(
        state=State.from_array(final),
        nearest=nearest if conclusive else None,
        regime=_REGIME_OF[nearest] if conclusive else None,
        distance=distances[nearest],
        t_final=float(traj.times[-1]),
        conclusive=conclusive,
        outside_stability_domain=outside,
        distances=distances,
    )


def run_to_equilibrium(x0, u: Control, tol: float = 1e-7, t_max: float = 2000.0, p: ModelParams = DEFAULTS) -> Trajectory:
    """Integrate until ``max |dx/dt| < tol`` or ``t_max``."""
    return integrate(x0, u, t_max, p=p, stop=lambda t, y, dy: max(map(abs, dy)) < tol)


def converge_to_equilibrium(
    x0,
    u: Control,
    tol: float = 1e-7,
    t_max: float = 2000.0,
    p: ModelParams = DEFAULTS,
    match_tol: float = 1e-3,
) -> ConvergenceReport:
    """Integrate until ``max |dx/dt| < tol`` and name the closed-form equilibrium reached."""
    y0 = np.array(x0.as_array() if isinstance(x0, State) else x0, dtype=float)
    outside = bool(y0[1] == 0.0 or y0[4] == 0.0)
    return identify_attractor(run_to_equilibrium(y0, u, tol, t_max, p), p, match_tol, outside)
