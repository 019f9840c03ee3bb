"""Pareto front of (max P_out, min P_in) by the weighting method, and the feed analysis."""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .equilibria import psi_alpha
from .errors import ConsortiumError
from .model import DEFAULTS, ModelParams
from .objectives import p_out_grid, theta0
from .optimizer import OptimOptions, grid_axes, maximize_p_theta

log = logging.getLogger(__name__)

DOMINANCE_SLACK = 1e-9
FRONT_COLUMNS = ("theta", "alpha", "d", "s_in", "p_out", "p_in", "p_theta")


class SinChoice(str, enum.Enum):
    ZERO = "ZERO"  # degenerate s_in = 0: U is empty, P_out = P_in = 0
    UPPER_BOUND = "UPPER_BOUND"  # s_in = z
    INDIFFERENT = "INDIFFERENT"  # theta == theta0: P_theta constant in s_in
    FIXED = "FIXED"  # 2-D problem, feed not a decision variable


@dataclass(frozen=True)
class ParetoPoint:
    theta: float
    alpha: float
    d: float
    s_in: float
    p_out: float
    p_in: float
    p_theta: float
    s_in_choice: SinChoice = SinChoice.FIXED
    boundary: bool = False
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def row(self) -> dict:
        return {name: getattr(self, name) for name in FRONT_COLUMNS}

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["s_in_choice"] = self.s_in_choice.value
        return out


def _point(theta, alpha, d, s_in, p_out, p_in, **kw) -> ParetoPoint:
    return ParetoPoint(theta, alpha, d, s_in, p_out, p_in, theta * p_out - (1.0 - theta) * p_in, **kw)


def default_thetas(n: int = 101) -> list[float]:
    return [k / (n - 1) for k in range(n)]


def _solve_point(theta, s_in, opts, p, warm):
    o = dataclasses.replace(opts, warm_start=warm, starts=2 if warm else opts.starts, oracle_n=0)
    res = maximize_p_theta(theta, s_in, o, p)
    if res.boundary_supremum:
        return _point(theta, res.u_star.alpha, res.u_star.d, s_in, 0.0, 0.0, boundary=True), None
    u = res.u_star
    out = float(p_out_grid(u.alpha, u.d, s_in, p))
    return _point(theta, u.alpha, u.d, s_in, out, u.d * s_in), (u.alpha, u.d)


def non_dominated(points: Sequence[ParetoPoint]) -> list[ParetoPoint]:
    """Drop points strictly dominated by another (higher-or-equal P_out, lower-or-equal P_in)."""
    kept = []
    for i, a in enumerate(points):
        if a.failed:
            continue
        dominated = any(
            j != i
            and not b.failed
            and b.p_out >= a.p_out
            and b.p_in <= a.p_in
            and (b.p_out > a.p_out or b.p_in < a.p_in)
            for j, b in enumerate(points)
        )
        if not dominated:
            kept.append(a)
    return kept


def sweep_front(
    s_in: float,
    thetas: Optional[Sequence[float]] = None,
    opts: OptimOptions = OptimOptions(),
    p: ModelParams = DEFAULTS,
    warm_start: bool = True,
    keep_failed: bool = False,
) -> list[ParetoPoint]:
    """Solve the weighted problem for each theta (ascending) and keep the non-dominated points.

    With ``warm_start`` each solve starts from the previous optimum (sequential and
    deterministic). Failed solves are logged and, with ``keep_failed``, returned as
    entries with ``error`` set.
    """
    thetas = default_thetas() if thetas is None else list(thetas)
    if any(not 0.0 <= t <= 1.0 for t in thetas):
        raise ValueError("theta values must lie in [0, 1]")
    if any(b < a for a, b in zip(thetas, thetas[1:])):
        raise ValueError("theta values must be sorted ascending")
    points, failed = [], []
    warm = None
    for theta in thetas:
        try:
            pt, opt = _solve_point(theta, s_in, opts, p, warm if warm_start else None)
        except ConsortiumError as exc:
            log.warning("theta=%r solve failed: %s", theta, exc)
            failed.append(_point(theta, math.nan, math.nan, s_in, math.nan, math.nan, error=str(exc)))
            continue
        points.append(pt)
        if opt is not None:
            warm = opt
    front = non_dominated(points)
    if keep_failed:
        front = sorted(front + failed, key=lambda q: q.theta)
    return front


# ---------------------------------------------------------------------------
# dominance oracle


@dataclass(frozen=True)
class Violation:
    theta: float
    point_p_out: float
    point_p_in: float
    grid_alpha: float
    grid_d: float
    grid_p_out: float
    grid_p_in: float


def _grid_image(s_in, grid_n, p):
    alphas, ds = grid_axes(grid_n, p)
    A, D = np.meshgrid(alphas, ds, indexing="ij")
    po = p_out_grid(A, D, s_in, p)
    ok = np.isfinite(po)
    return A[ok], D[ok], po[ok], D[ok] * s_in


def dominance_check(
    points: Sequence[ParetoPoint],
    grid_n: int,
    s_in: float,
    p: ModelParams = DEFAULTS,
    slack: float = DOMINANCE_SLACK,
) -> list[Violation]:
    """Grid points of U that dominate a front point.

    A grid point violates if it beats the front point by more than ``slack`` in one
    objective while being no worse in the other.
    """
    if grid_n < 100:
        raise ValueError(f"dominance check needs grid_n >= 100, got {grid_n}")
    pts = [q for q in points if not q.failed]
    if not pts:
        return []
    A, D, po, pi = _grid_image(s_in, grid_n, p)
    violations = []
    for q in pts:
        better_out = (po > q.p_out + slack) & (pi <= q.p_in)
        better_in = (pi < q.p_in - slack) & (po >= q.p_out)
        hits = np.flatnonzero(better_out | better_in)
        if hits.size:
            k = hits[np.argmax(po[hits] - q.p_out + q.p_in - pi[hits])]
            violations.append(
                Violation(q.theta, q.p_out, q.p_in, float(A[k]), float(D[k]), float(po[k]), float(pi[k]))
            )
    return violations


def grid_front(s_in: float, grid_n: int, p: ModelParams = DEFAULTS) -> np.ndarray:
    """Non-dominated grid points as rows ``(alpha, d, p_out, p_in)`` sorted by ``p_in``."""
    A, D, po, pi = _grid_image(s_in, grid_n, p)
    order = np.lexsort((-po, pi))
    best = -np.inf
    keep = []
    for k in order:
        if po[k] > best:
            keep.append(k)
            best = po[k]
    keep = np.array(keep, dtype=int)
    return np.column_stack([A[keep], D[keep], po[keep], pi[keep]])


def front_gap(front: Sequence[ParetoPoint], grid_nd: np.ndarray) -> float:
    """Largest P_out excess of a grid non-dominated point over the swept front at equal P_in.

    The front is interpolated linearly in P_in; the value is informative only, since
    the weighting method can miss non-convex stretches of a front.
    """
    pts = sorted((q for q in front if not q.failed), key=lambda q: q.p_in)
    if len(pts) < 2 or grid_nd.size == 0:
        return math.nan
    x = np.array([q.p_in for q in pts])
    y = np.array([q.p_out for q in pts])
    inside = grid_nd[:, 3] <= x[-1]
    if not inside.any():
        return math.nan
    excess = grid_nd[inside, 2] - np.interp(grid_nd[inside, 3], x, y)
    return float(np.max(excess))


# ---------------------------------------------------------------------------
# feed as a decision variable


def sin_boundary_choice(alpha: float, d: float, theta: float, z: float, p: ModelParams = DEFAULTS, tie: float = 1e-12):
    """Optimal feed in ``[0, z]`` for fixed ``(alpha, d)``: the sign of ``theta - theta0``."""
    t0 = float(theta0(alpha, d, p))
    if abs(theta - t0) <= tie:
        return SinChoice.INDIFFERENT
    return SinChoice.UPPER_BOUND if theta > t0 else SinChoice.ZERO


def sin_choice_continuation(alpha: float, d: float, z: float, thetas: Sequence[float], p: ModelParams = DEFAULTS):
    """Feed choice along a theta sweep at fixed ``(alpha, d)``."""
    return [sin_boundary_choice(alpha, d, t, z, p) for t in thetas]


def count_jumps(choices: Sequence[SinChoice]) -> int:
    """Number of ZERO <-> UPPER_BOUND switches (INDIFFERENT entries are skipped)."""
    seq = [c for c in choices if c in (SinChoice.ZERO, SinChoice.UPPER_BOUND)]
    return sum(1 for a, b in zip(seq, seq[1:]) if a != b)


def front_vs_theta_profile(
    z: float,
    thetas: Optional[Sequence[float]] = None,
    opts: OptimOptions = OptimOptions(),
    p: ModelParams = DEFAULTS,
) -> list[ParetoPoint]:
    """Optimal ``(alpha, d, s_in)`` over the closure of U(z) x [0, z] for each theta.

    The feed always saturates: ``s_in = z`` when the best weighted value at ``s_in = z``
    is positive, otherwise the degenerate ``s_in = 0`` with ``P_out = P_in = 0``.
    """
    thetas = default_thetas() if thetas is None else list(thetas)
    rows = []
    for pt in sweep_front(z, thetas, opts, p, keep_failed=True):
        if pt.failed:
            rows.append(pt)
        elif pt.boundary:
            rows.append(
                dataclasses.replace(pt, s_in=0.0, p_out=0.0, p_in=0.0, p_theta=0.0, s_in_choice=SinChoice.ZERO)
            )
        else:
            choice = sin_boundary_choice(pt.alpha, pt.d, pt.theta, z, p)
            rows.append(dataclasses.replace(pt, s_in=z, s_in_choice=choice))
    return rows


# ---------------------------------------------------------------------------
# reachable sets


@dataclass
class ReachableCloud:
    s_in: float
    alpha: np.ndarray
    d: np.ndarray
    p_out: np.ndarray
    p_in: np.ndarray

    def rows(self):
        for a, d, po, pi in zip(self.alpha, self.d, self.p_out, self.p_in):
            yield {"s_in": self.s_in, "alpha": float(a), "d": float(d), "p_out": float(po), "p_in": float(pi)}


def reachable_set(s_in_list: Sequence[float], grid_n: int, p: ModelParams = DEFAULTS) -> list[ReachableCloud]:
    """Images of U(s_in) in the (P_out, P_in) plane, one cloud per feed.

    Every cloud is sampled on the same alpha grid and the same ``grid_n`` feed-rate
    levels ``P_in = c_k``, i.e. ``d = c_k / s_in``; points of U(s_in) at a level are
    then also represented (with larger P_out) at every larger feed.
    """
    s_list = [float(s) for s in s_in_list]
    if any(s <= 0 for s in s_list):
        raise ValueError("feeds must be > 0")
    if any(b <= a for a, b in zip(s_list, s_list[1:])):
        raise ValueError("feeds must be strictly ascending")
    alphas = grid_axes(grid_n, p)[0]
    interior = alphas[alphas < 1.0]
    top = max(s * max(psi_alpha(a, s, p) for a in interior) for s in s_list)
    levels = top * np.arange(1, grid_n + 1, dtype=float) / grid_n
    A, C = np.meshgrid(alphas, levels, indexing="ij")
    clouds = []
    for s in s_list:
        D = C / s
        po = p_out_grid(A, D, s, p)
        ok = np.isfinite(po)
        clouds.append(ReachableCloud(s, A[ok], D[ok], po[ok], D[ok] * s))
    return clouds


def covered_by(small: ReachableCloud, large: ReachableCloud, tol: float = 1e-12) -> np.ndarray:
    """Mask of points of ``small`` matched or dominated by some point of ``large``."""
    order = np.argsort(large.p_in, kind="stable")
    pi_sorted = large.p_in[order]
    best_out = np.maximum.accumulate(large.p_out[order])
    idx = np.searchsorted(pi_sorted, small.p_in + tol, side="right") - 1
    ok = idx >= 0
    covered = np.zeros(small.p_in.shape, dtype=bool)
    covered[ok] = best_out[idx[ok]] >= small.p_out[ok] - tol
    return covered


def nesting_violations(clouds: Sequence[ReachableCloud], tol: float = 1e-12) -> list[tuple]:
    """``(s_small, s_large, n_uncovered)`` for every ordered pair with uncovered points."""
    out = []
    for i, small in enumerate(clouds):
        for large in clouds[i + 1:]:
            missing = int(np.count_nonzero(~covered_by(small, large, tol)))
            if missing:
                out.append((small.s_in, large.s_in, missing))
    return out
