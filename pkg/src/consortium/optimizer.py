"""Scalar steady-state maximisation over the admissible set at fixed feed.

Interior maximisers are found with a log-barrier on ``s_in - psi_alpha_inv(alpha, d) > 0``
(plus the box ``0 < alpha < 1``, ``d > 0``) driven by Nelder-Mead, with barrier
continuation and a final unbarriered polish. Every maximiser can be compared
against :func:`grid_oracle`, an exhaustive grid evaluation.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Union

import numpy as np
from scipy.optimize import minimize

from .equilibria import _psi_inv_fast, d_upper, psi_alpha, psi_alpha_inv_masked
from .errors import ConvergenceError, DomainError, InfeasibleError
from .model import DEFAULTS, Control, ModelParams
from .objectives import p_out_grid, p_theta_grid, p_yield_grid

BARRIER_SCHEDULE = (1e-2, 1e-4, 1e-6)
D_GUARD = 0.999  # optimisation box keeps d below this fraction of d_upper(alpha)
MAX_ITER = 20000


@dataclass(frozen=True)
class OptimOptions:
    starts: int = 8
    barrier_schedule: tuple = BARRIER_SCHEDULE
    xatol: float = 1e-10
    fatol: float = 1e-14
    max_iter: int = MAX_ITER
    oracle_n: int = 0  # 0 disables the grid oracle comparison
    workers: int = 1
    warm_start: Optional[tuple] = None  # extra (alpha, d) start, e.g. from a previous theta


@dataclass
class OptimResult:
    objective: str
    u_star: Control
    value: float
    iterations: int
    converged: bool
    boundary_supremum: bool = False
    oracle_gap: Optional[float] = None
    theta: Optional[float] = None
    start_optima: list = field(default_factory=list)

    @property
    def spread(self) -> float:
        """Largest control-space distance between the per-start optima."""
        pts = np.array(self.start_optima, dtype=float).reshape(-1, 2)
        if len(pts) < 2:
            return 0.0
        return float(np.max(np.abs(pts[:, None, :] - pts[None, :, :])))

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "theta": self.theta,
            "alpha": self.u_star.alpha,
            "d": self.u_star.d,
            "s_in": self.u_star.s_in,
            "value": self.value,
            "iterations": self.iterations,
            "converged": self.converged,
            "boundary_supremum": self.boundary_supremum,
            "oracle_gap": self.oracle_gap,
            "multistart_spread": self.spread,
        }


# ---------------------------------------------------------------------------
# grid oracle


class GridBest(NamedTuple):
    alpha: float
    d: float
    value: float
    n_admissible: int


def grid_axes(n: int, p: ModelParams = DEFAULTS):
    """Grid ``alpha_i = i/n`` and ``d_j = d_sup * j/n`` for ``i, j = 1..n``.

    Doubling ``n`` keeps every old node, so the grid maximum can only improve.
    """
    if n < 2:
        raise ValueError(f"grid size must be >= 2, got {n}")
    k = np.arange(1, n + 1, dtype=float)
    return k / n, p.d_sup * k / n


def objective_grid(objective: str, s_in: float, theta: Optional[float] = None, p: ModelParams = DEFAULTS):
    """Vectorised ``f(alpha, d)`` for a named criterion (NaN outside U)."""
    if objective == "pout":
        return lambda a, d: p_out_grid(a, d, s_in, p)
    if objective == "log_pout":
        return lambda a, d: np.log(p_out_grid(a, d, s_in, p))
    if objective == "ptheta":
        if theta is None:
            raise ValueError("ptheta needs theta")
        return lambda a, d: p_theta_grid(a, d, s_in, theta, p)
    if objective == "yield":
        return lambda a, d: p_yield_grid(a, d, s_in, p)
    raise ValueError(f"unknown objective {objective!r}")


def grid_oracle(
    objective: Union[str, Callable],
    s_in: float,
    n: int,
    p: ModelParams = DEFAULTS,
    theta: Optional[float] = None,
) -> GridBest:
    """Exhaustive ``n x n`` evaluation; ties go to the smallest d, then smallest alpha."""
    f = objective_grid(objective, s_in, theta, p) if isinstance(objective, str) else objective
    alphas, ds = grid_axes(n, p)
    A, D = np.meshgrid(alphas, ds, indexing="ij")
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.asarray(f(A, D), dtype=float)
    ok = np.isfinite(values)
    if not ok.any():
        raise InfeasibleError(f"no admissible point on the {n}x{n} grid at s_in = {s_in}")
    best = np.max(values[ok])
    ties = np.flatnonzero((values == best).ravel())
    order = np.lexsort((A.ravel()[ties], D.ravel()[ties]))
    k = ties[order[0]]
    return GridBest(float(A.ravel()[k]), float(D.ravel()[k]), float(best), int(ok.sum()))


# ---------------------------------------------------------------------------
# barrier search


def _barrier(alpha, d, s_in, p) -> float:
    """Log-slack of the coexistence constraint plus ``log d``; -inf outside the box.

    ``alpha -> 0``, ``alpha -> 1`` and the saturation cap all send the threshold to
    infinity, so the coexistence slack already guards them; they are only rejected.
    """
    if not (0.0 < alpha < 1.0 and d > 0.0):
        return -math.inf
    if d >= D_GUARD * d_upper(alpha, p):
        return -math.inf
    slack = s_in - _psi_inv_fast(alpha, d, p)
    if not slack > 0.0:
        return -math.inf
    return math.log(slack) + math.log(d)


def _log_pout(alpha, d, s_in, p) -> float:
    slack = s_in - _psi_inv_fast(alpha, d, p)
    if not slack > 0.0:
        return -math.inf
    q_star = p.q_min * p.mu_max / (p.mu_max - d)
    return math.log(alpha * p.beta * p.gamma * d * slack / q_star)


def _make_ptheta(theta):
    def f(alpha, d, s_in, p):
        slack = s_in - _psi_inv_fast(alpha, d, p)
        if not slack > 0.0:
            return -math.inf
        q_star = p.q_min * p.mu_max / (p.mu_max - d)
        return theta * alpha * p.beta * p.gamma * d * slack / q_star - (1.0 - theta) * d * s_in

    return f


def _make_ptheta_scale(theta):
    def scale(alpha, d, s_in, p):
        slack = s_in - _psi_inv_fast(alpha, d, p)
        q_star = p.q_min * p.mu_max / (p.mu_max - d)
        return theta * alpha * p.beta * p.gamma * d * slack / q_star + (1.0 - theta) * d * s_in

    return scale


def _start_points(s_in: float, count: int, p: ModelParams) -> list:
    """Spread interior starts: alpha on a grid, d at fractions of the coexistence threshold."""
    starts = []
    n_alpha = max(1, (count + 1) // 2)
    alphas = [(i + 1) / (n_alpha + 1) for i in range(n_alpha)]
    fractions = (0.35, 0.75)
    for k in range(count):
        a = alphas[k % n_alpha]
        frac = fractions[(k // n_alpha) % 2]
        starts.append((a, frac * psi_alpha(a, s_in, p)))
    return starts


def _initial_simplex(x0, s_in, p):
    a, d = x0
    step_a = 0.05 * min(a, 1.0 - a)
    step_d = 0.1 * d
    for _ in range(60):
        simplex = np.array([[a, d], [a + step_a, d], [a, d + step_d]])
        if all(math.isfinite(_barrier(x[0], x[1], s_in, p)) for x in simplex):
            return simplex
        step_a *= 0.5
        step_d *= 0.5
    return simplex


def _climb(f, x0, s_in, p, opts: OptimOptions, scale=None):
    """Barrier continuation from ``x0``; returns (alpha, d, f-value, iterations).

    Barrier weights are multiplied by ``scale(alpha, d)`` evaluated at the start,
    so the barrier never dominates objectives of small magnitude.
    """
    x = np.array(x0, dtype=float)
    iterations = 0
    magnitude = 1.0 if scale is None else max(scale(x[0], x[1], s_in, p), 1e-12)
    for weight in tuple(w * magnitude for w in opts.barrier_schedule) + (0.0,):

        def neg(z, weight=weight):
            a, d = float(z[0]), float(z[1])
            b = _barrier(a, d, s_in, p)
            if not math.isfinite(b):
                return math.inf
            val = f(a, d, s_in, p)
            if not math.isfinite(val):
                return math.inf
            return -(val + weight * b)

        res = minimize(
            neg,
            x,
            method="Nelder-Mead",
            options={
                "xatol": opts.xatol,
                "fatol": opts.fatol,
                "maxiter": opts.max_iter,
                "maxfev": 2 * opts.max_iter,
                "initial_simplex": _initial_simplex(x, s_in, p),
            },
        )
        iterations += int(res.nit)
        if res.nit >= opts.max_iter:
            raise ConvergenceError(
                f"Nelder-Mead hit the iteration cap ({opts.max_iter}) at barrier weight {weight}",
                best=(float(res.x[0]), float(res.x[1])),
            )
        if math.isfinite(res.fun):
            x = np.array(res.x, dtype=float)
    return float(x[0]), float(x[1]), f(float(x[0]), float(x[1]), s_in, p), iterations


def _multistart(f, s_in, opts: OptimOptions, p, extra_starts=(), scale=None):
    starts = list(extra_starts) + _start_points(s_in, opts.starts, p)
    run = lambda x0: _climb(f, x0, s_in, p, opts, scale)  # noqa: E731
    if opts.workers > 1:
        with ThreadPoolExecutor(max_workers=opts.workers) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(x0) for x0 in starts]
    # fixed reduction order: best value, then smallest d, then smallest alpha
    best = max(results, key=lambda r: (r[2], -r[1], -r[0]))
    return best, results


def _attach_oracle(result: OptimResult, objective, s_in, p, opts, theta=None):
    if opts.oracle_n:
        oracle = grid_oracle(objective, s_in, opts.oracle_n, p, theta=theta)
        result.oracle_gap = abs(result.value - oracle.value)
    return result


def maximize_p_out(s_in: float, opts: OptimOptions = OptimOptions(), p: ModelParams = DEFAULTS) -> OptimResult:
    """Global maximiser of the productivity over U(s_in) (unique: log-concave objective on a convex set)."""
    if not s_in > 0:
        raise DomainError(f"s_in must be > 0, got {s_in}", bound="s_in")
    extra = [opts.warm_start] if opts.warm_start else []
    (a, d, logv, _), results = _multistart(_log_pout, s_in, opts, p, extra)
    iterations = sum(r[3] for r in results)
    result = OptimResult(
        objective="pout",
        u_star=Control(a, d, s_in),
        value=math.exp(logv),
        iterations=iterations,
        converged=True,
        start_optima=[(r[0], r[1]) for r in results[len(extra):]],
    )
    return _attach_oracle(result, "pout", s_in, p, opts)


def maximize_p_theta(
    theta: float, s_in: float, opts: OptimOptions = OptimOptions(), p: ModelParams = DEFAULTS
) -> OptimResult:
    """Maximiser of ``theta P_out - (1 - theta) P_in`` over the closure of U(s_in).

    When no interior point has positive value the supremum 0 is only approached
    as ``d -> 0``; the result is then flagged ``boundary_supremum`` and reports
    the limit control ``(alpha, d) = (1, 0)`` with ``P_out = P_in = 0``.
    """
    if not 0.0 <= theta <= 1.0:
        raise DomainError(f"theta must lie in [0, 1], got {theta}", bound="theta")
    if not s_in > 0:
        raise DomainError(f"s_in must be > 0, got {s_in}", bound="s_in")
    if theta == 1.0:
        res = maximize_p_out(s_in, opts, p)
        res.objective, res.theta = "ptheta", theta
        return res

    extra = [opts.warm_start] if opts.warm_start else []
    if theta > 0.0:
        # positive profit needs alpha close to 1 when theta is small
        a_min = (1.0 - theta) / (theta * p.yield_batch_max)
        if a_min < 1.0:
            a_hi = 0.5 * (1.0 + a_min)
            extra.append((a_hi, 0.5 * psi_alpha(a_hi, s_in, p)))
        (a, d, val, _), results = _multistart(_make_ptheta(theta), s_in, opts, p, extra, _make_ptheta_scale(theta))
        iterations = sum(r[3] for r in results)
    else:
        val, results, iterations = -math.inf, [], 0

    if val > 0.0:
        result = OptimResult(
            objective="ptheta",
            theta=theta,
            u_star=Control(a, d, s_in),
            value=val,
            iterations=iterations,
            converged=True,
            start_optima=[(r[0], r[1]) for r in results[len(extra):]],
        )
    else:
        result = OptimResult(
            objective="ptheta",
            theta=theta,
            u_star=Control(1.0, 0.0, s_in),
            value=0.0,
            iterations=iterations,
            converged=True,
            boundary_supremum=True,
        )
    return _attach_oracle(result, "ptheta", s_in, p, opts, theta=theta)


def gradient_fd(f: Callable[[float, float], float], alpha: float, d: float, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient with relative steps."""
    ha, hd = h * alpha, h * d
    return np.array(
        [
            (f(alpha + ha, d) - f(alpha - ha, d)) / (2 * ha),
            (f(alpha, d + hd) - f(alpha, d - hd)) / (2 * hd),
        ]
    )


# ---------------------------------------------------------------------------
# yield


class AlphaYield(NamedTuple):
    alpha: float
    value: float
    alpha_lo: float
    alpha_hi: float


class YieldArgmax(NamedTuple):
    alpha: float
    d: float
    value: float
    batch_degenerate: bool


INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_max(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-10, max_iter: int = 500):
    """Golden-section search for the maximiser of a unimodal ``f`` on ``[lo, hi]``."""
    a, b = lo, hi
    x1 = b - INV_PHI * (b - a)
    x2 = a + INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + INV_PHI * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - INV_PHI * (b - a)
            f1 = f(x1)
    else:
        raise ConvergenceError("golden-section search did not converge", best=0.5 * (a + b))
    return 0.5 * (a + b)


def _bisect_level(g, lo, hi, level, increasing, tol=1e-14):
    """Point where ``g`` crosses ``level`` inside ``[lo, hi]``."""
    for _ in range(200):
        if hi - lo < tol:
            break
        mid = 0.5 * (lo + hi)
        if (g(mid) < level) == increasing:
            lo = mid
        else:
            hi = mid
    return lo if increasing else hi


def admissible_alpha_interval(d: float, s_in: float, p: ModelParams = DEFAULTS) -> tuple[float, float]:
    """Open interval of alpha with ``psi_alpha_inv(alpha, d) < s_in`` (convex in alpha)."""
    if not (0.0 < d < p.d_rho_bound):
        raise InfeasibleError(f"d = {d} admits no coexistence state (needs 0 < d < {p.d_rho_bound!r})")
    top = 1.0 - d / p.phi_max
    g = lambda a: _psi_inv_fast(a, d, p)  # noqa: E731
    a_min = golden_max(lambda a: -g(a), 0.0, top, tol=1e-13)
    if not g(a_min) < s_in:
        raise InfeasibleError(f"no alpha admits coexistence at d = {d}, s_in = {s_in}")
    lo = _bisect_level(g, 0.0, a_min, s_in, increasing=False)
    hi = _bisect_level(g, a_min, top, s_in, increasing=True)
    return lo, hi


def maximize_yield_alpha(d: float, s_in: float, p: ModelParams = DEFAULTS) -> AlphaYield:
    """Unique alpha maximising the yield at fixed ``d`` (strictly concave in alpha)."""
    lo, hi = admissible_alpha_interval(d, s_in, p)
    f = lambda a: float(p_yield_grid(a, d, s_in, p))  # noqa: E731
    safe = lambda a: f(a) if lo < a < hi else -math.inf  # noqa: E731
    alpha = golden_max(safe, lo, hi, tol=1e-10)
    return AlphaYield(alpha, f(alpha), lo, hi)


def yield_global_argmax(p: ModelParams = DEFAULTS) -> YieldArgmax:
    """Yield maximum over the closure of U: batch operation at ``(alpha, d) = (1, 0)``."""
    return YieldArgmax(1.0, 0.0, p.yield_batch_max, True)


# ---------------------------------------------------------------------------
# Hessian definiteness of the substrate threshold


class Definiteness(str, enum.Enum):
    POS_DEF = "POS_DEF"
    NEG_DEF = "NEG_DEF"
    NON_DEF = "NON_DEF"
    SINGULAR = "SINGULAR"


@dataclass(frozen=True)
class HessianMapCell:
    alpha: float
    d: float
    classification: Optional[Definiteness]  # None marks a cell outside U
    h_aa: float = math.nan
    h_ad: float = math.nan
    h_dd: float = math.nan
    eig_min: float = math.nan
    eig_max: float = math.nan

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "d": self.d,
            "classification": "ABSENT" if self.classification is None else self.classification.value,
            "h_aa": self.h_aa,
            "h_ad": self.h_ad,
            "h_dd": self.h_dd,
            "eig_min": self.eig_min,
            "eig_max": self.eig_max,
        }


def _hessian_fd(g, A, D, rel):
    ha, hd = rel * A, rel * D
    f0 = g(A, D)
    h_aa = (g(A + ha, D) - 2 * f0 + g(A - ha, D)) / ha**2
    h_dd = (g(A, D + hd) - 2 * f0 + g(A, D - hd)) / hd**2
    h_ad = (g(A + ha, D + hd) - g(A + ha, D - hd) - g(A - ha, D + hd) + g(A - ha, D - hd)) / (4 * ha * hd)
    return h_aa, h_ad, h_dd


def hessian_g0(alpha, d, p: ModelParams = DEFAULTS, rel_step: float = 1e-5):
    """Second derivatives of ``psi_alpha_inv`` by central differences, one Richardson step."""
    g = lambda a, x: psi_alpha_inv_masked(a, x, p)  # noqa: E731
    A = np.asarray(alpha, dtype=float)
    D = np.asarray(d, dtype=float)
    coarse = _hessian_fd(g, A, D, rel_step)
    fine = _hessian_fd(g, A, D, rel_step / 2)
    return tuple((4 * f - c) / 3 for f, c in zip(fine, coarse))


def classify_definiteness(eig_min, eig_max, threshold: float = 1e-9):
    if eig_min > threshold:
        return Definiteness.POS_DEF
    if eig_max < -threshold:
        return Definiteness.NEG_DEF
    if eig_min < -threshold and eig_max > threshold:
        return Definiteness.NON_DEF
    return Definiteness.SINGULAR


def hessian_map_g0(n: int, s_in: float, p: ModelParams = DEFAULTS, threshold: float = 1e-9) -> list[HessianMapCell]:
    """Definiteness of the Hessian of ``g0(alpha, d) = psi_alpha_inv(alpha, d)`` on the oracle grid."""
    if n < 2:
        raise ValueError(f"grid size must be >= 2, got {n}")
    alphas, ds = grid_axes(n, p)
    A, D = np.meshgrid(alphas, ds, indexing="ij")
    inside = psi_alpha_inv_masked(A, D, p) < s_in
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        h_aa, h_ad, h_dd = hessian_g0(A, D, p)
    # eigenvalues of the symmetric 2x2 matrix [[h_aa, h_ad], [h_ad, h_dd]]
    mean = 0.5 * (h_aa + h_dd)
    radius = np.hypot(0.5 * (h_aa - h_dd), h_ad)
    eig_min, eig_max = mean - radius, mean + radius
    cells = []
    for i in range(n):
        for j in range(n):
            if not inside[i, j]:
                cells.append(HessianMapCell(float(A[i, j]), float(D[i, j]), None))
                continue
            cells.append(
                HessianMapCell(
                    float(A[i, j]),
                    float(D[i, j]),
                    classify_definiteness(eig_min[i, j], eig_max[i, j], threshold),
                    float(h_aa[i, j]),
                    float(h_ad[i, j]),
                    float(h_dd[i, j]),
                    float(eig_min[i, j]),
                    float(eig_max[i, j]),
                )
            )
    return cells
