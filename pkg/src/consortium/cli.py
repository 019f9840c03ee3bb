"""Command-line front end.

Every command writes its outputs plus ``run_manifest.json`` into ``--out``.
``consortium rerun --manifest`` replays a manifest into a new directory and
reproduces the outputs byte for byte.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, io
from .equilibria import EXPECTED_STABILITY, classify
from .errors import ConvergenceError, DomainError, ExistenceError, InfeasibleError, MembershipError
from .model import DEFAULTS, Control, ModelParams, format_params, load_params
from .optimizer import (
    OptimOptions,
    grid_axes,
    hessian_map_g0,
    maximize_p_out,
    maximize_p_theta,
    maximize_yield_alpha,
    objective_grid,
)
from .pareto import (
    FRONT_COLUMNS,
    count_jumps,
    default_thetas,
    dominance_check,
    front_gap,
    front_vs_theta_profile,
    grid_front,
    nesting_violations,
    reachable_set,
    sweep_front,
)
from .sim import candidate_equilibria, identify_attractor, run_to_equilibrium


ENV_PARAMS = "CONSORTIUM_PARAMS"
EXIT_OK, EXIT_VALIDATION, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 2, 3, 4

# sampling box for random classification tables
SAMPLE_BOX = {"alpha": (0.0, 1.0), "d": (0.0, 0.9), "s_in": (0.2, 3.0)}

FLAG_OF = {"alpha": "--alpha", "d": "--d", "s_in": "--s-in", "theta": "--theta", "z": "--z"}


class FlagError(ValueError):
    """Invalid command-line value; the message names the flag."""


def _need(ok: bool, message: str):
    if not ok:
        raise FlagError(message)


# ---------------------------------------------------------------------------
# flag validation


def _alpha(ns) -> float:
    _need(ns.alpha is not None, "--alpha is required")
    _need(0.0 < ns.alpha < 1.0, f"--alpha must lie in (0, 1), got {ns.alpha!r}")
    return ns.alpha


def _d(ns) -> float:
    _need(ns.d is not None, "--d is required")
    _need(math.isfinite(ns.d) and ns.d > 0.0, f"--d must be > 0, got {ns.d!r}")
    return ns.d


def _s_in(ns) -> float:
    _need(math.isfinite(ns.s_in) and ns.s_in > 0.0, f"--s-in must be > 0, got {ns.s_in!r}")
    return ns.s_in


def _theta(ns) -> float:
    _need(ns.theta is not None, "--theta is required")
    _need(0.0 <= ns.theta <= 1.0, f"--theta must lie in [0, 1], got {ns.theta!r}")
    return ns.theta


def _grid_n(ns, minimum: int = 2) -> int:
    _need(ns.grid_n >= minimum, f"--grid-n must be >= {minimum}, got {ns.grid_n}")
    return ns.grid_n


def _control(ns) -> Control:
    return Control(_alpha(ns), _d(ns), _s_in(ns))


def _sin_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise FlagError(f"--sin-list must be comma-separated numbers, got {text!r}") from None
    _need(len(values) >= 1, "--sin-list must not be empty")
    _need(all(v > 0 for v in values), "--sin-list values must be > 0")
    values = sorted(set(values))
    return values


def _options(ns, oracle_n: int = 0) -> OptimOptions:
    _need(ns.threads >= 1, f"--threads must be >= 1, got {ns.threads}")
    _need(ns.starts >= 1, f"--starts must be >= 1, got {ns.starts}")
    return OptimOptions(starts=ns.starts, workers=ns.threads, oracle_n=oracle_n)


# ---------------------------------------------------------------------------
# output helpers


class Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, ns, params: ModelParams):
        self.ns = ns
        self.p = params
        self.out = Path(ns.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def table(self, stem: str, rows, columns):
        path = io.write_table(self.out, stem, list(rows), columns, self.ns.format)
        self.files.append(path.name)
        return path

    def json(self, name: str, obj):
        path = io.write_json(self.out / name, obj)
        self.files.append(path.name)
        return path

    def figure(self, fn_name: str, name: str, *args, **kwargs):
        if not self.ns.plot:
            return None
        from . import plots  # matplotlib import is slow; only pay for it when plotting

        path = getattr(plots, fn_name)(*args, path=self.out / name, **kwargs)
        self.files.append(path.name)
        return path


# ---------------------------------------------------------------------------
# commands


def cmd_params(run: Run):
    path = run.out / "params.txt"
    path.write_text(format_params(run.p), encoding="utf-8")
    run.files.append(path.name)
    run.json("params.json", {"params": run.p.to_dict(), "bounds": run.p.bounds_dict()})
    print(format_params(run.p), end="")


def cmd_equilibria(run: Run):
    report = classify(_control(run.ns), run.p)
    run.json("equilibria.json", report)
    print(f"regime {report.regime.value}  d1 {report.d1!r}  d2 {report.d2!r}")


CLASSIFY_COLUMNS = ("alpha", "d", "s_in", "d1", "d2", "regime", "x0", "x10", "x11", "consistent")


def _classify_row(u: Control, p: ModelParams) -> dict:
    rep = classify(u, p)
    row = {"alpha": u.alpha, "d": u.d, "s_in": u.s_in, "d1": rep.d1, "d2": rep.d2, "regime": rep.regime.value}
    for name in ("x0", "x10", "x11"):
        row[name] = rep.stability[name].value if name in rep.stability else ""
    expected = EXPECTED_STABILITY.get(rep.regime)
    row["consistent"] = "" if expected is None else bool(expected == rep.stability)
    return row


def cmd_classify(run: Run):
    ns = run.ns
    if ns.samples:
        _need(ns.samples > 0, f"--samples must be > 0, got {ns.samples}")
        rng = np.random.default_rng(ns.seed)
        controls = []
        while len(controls) < ns.samples:
            a, d, s = (rng.uniform(*SAMPLE_BOX[k]) for k in ("alpha", "d", "s_in"))
            if a > 0.0 and d > 0.0:
                controls.append(Control(float(a), float(d), float(s)))
    else:
        controls = [_control(ns)]
    rows = [_classify_row(u, run.p) for u in controls]
    run.table("classify", rows, CLASSIFY_COLUMNS)
    bad = sum(1 for r in rows if r["consistent"] is False)
    print(f"{len(rows)} controls classified, {bad} inconsistent with the stability table")


def _default_start(u: Control, ns, p: ModelParams) -> np.ndarray:
    eqs = candidate_equilibria(u, p)
    base = next(eqs[k] for k in ("x11", "x10", "x0") if k in eqs).as_array()
    rng = np.random.default_rng(ns.seed)
    y = base * (1.0 + ns.perturb * rng.uniform(-1.0, 1.0, size=5))
    y[[0, 1, 2, 4]] = np.maximum(y[[0, 1, 2, 4]], 0.0)
    if ns.perturb > 0.0:
        y[1] = max(y[1], ns.perturb)
        y[4] = max(y[4], ns.perturb)
    y[3] = max(y[3], p.q_min)
    return y


def _parse_state(text: str) -> np.ndarray:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise FlagError(f"--x0 must be 5 comma-separated numbers, got {text!r}") from None
    _need(len(values) == 5, f"--x0 must have 5 components (s,e,v,q,c), got {len(values)}")
    return np.array(values)


def cmd_simulate(run: Run):
    ns = run.ns
    u = _control(ns)
    _need(ns.perturb >= 0.0, f"--perturb must be >= 0, got {ns.perturb!r}")
    _need(ns.t_end > 0.0, f"--t-end must be > 0, got {ns.t_end!r}")
    x0 = _parse_state(ns.x0) if ns.x0 else _default_start(u, ns, run.p)
    _need(bool(x0[3] >= run.p.q_min and np.all(x0[[0, 1, 2, 4]] >= 0)), "--x0 lies outside the state space")
    traj = run_to_equilibrium(x0, u, ns.tol, ns.t_end, run.p)
    report = identify_attractor(traj, run.p, outside=bool(x0[1] == 0.0 or x0[4] == 0.0))
    run.table("trajectory", traj.rows(), ("t", "s", "e", "v", "q", "c"))
    out = report.to_dict()
    out["initial_state"] = [float(v) for v in x0]
    out["terminal_event"] = traj.terminal_event.value
    out["rejected_steps"] = traj.rejected_steps
    out["control"] = u.to_dict()
    run.json("convergence.json", out)
    run.figure("plot_trajectory", "trajectory.svg", traj)
    print(f"{traj.terminal_event.value} at t={report.t_final!r}, nearest {report.nearest}")


GRID_COLUMNS = ("alpha", "d", "value")


def _grid_rows(objective: str, s_in: float, n: int, p: ModelParams, theta=None):
    alphas, ds = grid_axes(n, p)
    A, D = np.meshgrid(alphas, ds, indexing="ij")
    with np.errstate(invalid="ignore", divide="ignore"):
        values = objective_grid(objective, s_in, theta, p)(A, D)
    for a, d, v in zip(A.ravel(), D.ravel(), values.ravel()):
        if np.isfinite(v):
            yield {"alpha": float(a), "d": float(d), "value": float(v)}


def cmd_optimize(run: Run):
    ns, p = run.ns, run.p
    s_in = _s_in(ns)
    if ns.objective == "yield-alpha":
        d = _d(ns)
        res = maximize_yield_alpha(d, s_in, p)
        run.json("optimum.json", {"objective": "yield-alpha", "d": d, "s_in": s_in, **res._asdict()})
        if ns.grid:
            run.table("grid", _grid_rows("yield", s_in, _grid_n(ns), p), GRID_COLUMNS)
        if ns.plot:
            curve = []
            for dj in grid_axes(100, p)[1]:
                try:
                    curve.append((maximize_yield_alpha(float(dj), s_in, p).alpha, float(dj)))
                except InfeasibleError:
                    pass
            run.figure("plot_yield", "yield.svg", s_in, curve, p=p)
        print(f"alpha* = {res.alpha!r}, yield = {res.value!r}")
        return

    oracle_n = _grid_n(ns) if ns.oracle else 0
    opts = _options(ns, oracle_n)
    if ns.objective == "pout":
        res = maximize_p_out(s_in, opts, p)
        grid_name, theta = "pout", None
    else:
        theta = _theta(ns)
        res = maximize_p_theta(theta, s_in, opts, p)
        grid_name = "ptheta"
    run.json("optimum.json", res)
    if ns.grid:
        run.table("grid", _grid_rows(grid_name, s_in, _grid_n(ns), p, theta), GRID_COLUMNS)
    optimum = None if res.boundary_supremum else (res.u_star.alpha, res.u_star.d)
    run.figure("plot_log_pout", "log_pout.svg", s_in, optimum, p=p)
    print(f"alpha* = {res.u_star.alpha!r}, d* = {res.u_star.d!r}, value = {res.value!r}")


def _thetas(ns) -> list[float]:
    _need(ns.theta_n >= 2, f"--theta-n must be >= 2, got {ns.theta_n}")
    return default_thetas(ns.theta_n)


def cmd_pareto(run: Run):
    ns, p = run.ns, run.p
    s_in = _s_in(ns)
    thetas = _thetas(ns)
    grid_n = _grid_n(ns, minimum=100)
    opts = _options(ns)
    points = sweep_front(s_in, thetas, opts, p, keep_failed=True)
    front = [q for q in points if not q.failed]
    if not front:
        raise InfeasibleError(f"every weighted solve failed at s_in = {s_in}")
    run.table("front", (q.row() for q in points), FRONT_COLUMNS)
    violations = dominance_check(front, grid_n, s_in, p)
    summary = {
        "s_in": s_in,
        "grid_n": grid_n,
        "points": len(front),
        "failed": [{"theta": q.theta, "error": q.error} for q in points if q.failed],
        "dominance_violations": len(violations),
        "violations": violations,
        "front_gap": front_gap(front, grid_front(s_in, grid_n, p)),
    }

    profile = None
    if ns.theta_profile:
        _need(ns.z is not None, "--theta-profile needs --z")
        _need(ns.z > 0.0, f"--z must be > 0, got {ns.z!r}")
        profile = front_vs_theta_profile(ns.z, thetas, opts, p)
        run.table("profile", (dict(q.row(), s_in_choice=q.s_in_choice.value) for q in profile),
                  FRONT_COLUMNS + ("s_in_choice",))
        summary["profile"] = {
            "z": ns.z,
            "s_in_values": sorted({q.s_in for q in profile if not q.failed}),
            "jumps": count_jumps([q.s_in_choice for q in profile if not q.failed]),
        }

    clouds = None
    if ns.sin_list:
        clouds = reachable_set(_sin_list(ns.sin_list), ns.reach_n, p)
        run.table("reachable", (r for c in clouds for r in c.rows()), ("s_in", "alpha", "d", "p_out", "p_in"))
        summary["nesting_violations"] = nesting_violations(clouds)

    run.json("pareto_report.json", summary)
    if ns.plot:
        run.figure("plot_pareto_controls", "pareto_controls.svg", s_in, front, p=p)
        run.figure("plot_pareto_image", "pareto_image.svg", front, reachable_set([s_in], 100, p)[0])
        if profile is not None:
            run.figure("plot_theta_profile", "theta_profile.svg", profile)
        if clouds is not None:
            run.figure("plot_reachable", "reachable.svg", clouds, front)
    print(f"{len(front)} front points, {len(violations)} dominance violations")


HESSIAN_COLUMNS = ("alpha", "d", "classification", "h_aa", "h_ad", "h_dd", "eig_min", "eig_max")


def cmd_hessian_map(run: Run):
    ns = run.ns
    n = _grid_n(ns)
    cells = hessian_map_g0(n, _s_in(ns), run.p)
    rows = [c.to_dict() for c in cells]
    run.table("hessian_map", rows, HESSIAN_COLUMNS)
    counts = {}
    for r in rows:
        counts[r["classification"]] = counts.get(r["classification"], 0) + 1
    run.json("hessian_summary.json", {"grid_n": n, "s_in": ns.s_in, "counts": dict(sorted(counts.items()))})
    run.figure("plot_hessian_map", "hessian_map.svg", cells, n)
    print(" ".join(f"{k}={v}" for k, v in sorted(counts.items())))


def cmd_reachable(run: Run):
    ns = run.ns
    _need(ns.sin_list is not None, "--sin-list is required")
    clouds = reachable_set(_sin_list(ns.sin_list), _grid_n(ns), run.p)
    run.table("reachable", (r for c in clouds for r in c.rows()), ("s_in", "alpha", "d", "p_out", "p_in"))
    nesting = nesting_violations(clouds)
    run.json(
        "reachable_report.json",
        {"s_in": [c.s_in for c in clouds], "points": [len(c.p_out) for c in clouds], "nesting_violations": nesting},
    )
    run.figure("plot_reachable", "reachable.svg", clouds, None)
    print(f"{len(clouds)} clouds, {len(nesting)} nesting violations")


COMMANDS = {
    "params": cmd_params,
    "equilibria": cmd_equilibria,
    "classify": cmd_classify,
    "simulate": cmd_simulate,
    "optimize": cmd_optimize,
    "pareto": cmd_pareto,
    "hessian-map": cmd_hessian_map,
    "reachable": cmd_reachable,
}


# ---------------------------------------------------------------------------
# parser


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--params", help=f"parameter file (key = value); default ${ENV_PARAMS} or built-in values")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")
    common.add_argument("--threads", type=int, default=1, help="worker threads for multistart solves")
    common.add_argument("--seed", type=int, default=0, help="seed for randomised sampling")
    common.add_argument("--plot", action="store_true", help="also write SVG figures")
    return common


def _control_flags(sp, alpha=True, d=True):
    if alpha:
        sp.add_argument("--alpha", type=float, help="allocation fraction in (0, 1)")
    if d:
        sp.add_argument("--d", type=float, help="dilution rate [1/day]")
    sp.add_argument("--s-in", dest="s_in", type=float, default=1.0, help="feed concentration [g/L] (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="consortium",
        description="Bacteria-microalgae chemostat consortium: steady states, optimisation and Pareto trade-offs.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()

    sub.add_parser("params", parents=[common], help="write the resolved parameter set")

    sp = sub.add_parser("equilibria", parents=[common], help="equilibrium report for one control")
    _control_flags(sp)

    sp = sub.add_parser("classify", parents=[common], help="regime and stability table")
    _control_flags(sp)
    sp.add_argument("--samples", type=int, default=0, help="classify N random controls instead")

    sp = sub.add_parser("simulate", parents=[common], help="integrate the dynamics")
    _control_flags(sp)
    sp.add_argument("--x0", help="initial state s,e,v,q,c (default: perturbed equilibrium)")
    sp.add_argument("--perturb", type=float, default=0.05, help="relative perturbation of the default start")
    sp.add_argument("--t-end", dest="t_end", type=float, default=2000.0, help="time horizon [day]")
    sp.add_argument("--tol", type=float, default=1e-7, help="stop when max |dx/dt| < tol")

    sp = sub.add_parser("optimize", parents=[common], help="scalar optimisation over U(s_in)")
    sp.add_argument("objective", choices=("pout", "ptheta", "yield-alpha"))
    _control_flags(sp, alpha=False)
    sp.add_argument("--theta", type=float, help="weight of P_out in [0, 1]")
    sp.add_argument("--grid-n", dest="grid_n", type=int, default=400, help="oracle/contour grid size")
    sp.add_argument("--starts", type=int, default=8, help="multistart count")
    sp.add_argument("--no-oracle", dest="oracle", action="store_false", help="skip the grid oracle")
    sp.add_argument("--grid", action="store_true", help="write the objective grid CSV")

    sp = sub.add_parser("pareto", parents=[common], help="weighted-sum Pareto sweep")
    _control_flags(sp, alpha=False, d=False)
    sp.add_argument("--theta-n", dest="theta_n", type=int, default=101, help="number of uniform weights in [0, 1]")
    sp.add_argument("--grid-n", dest="grid_n", type=int, default=400, help="dominance-check grid size")
    sp.add_argument("--starts", type=int, default=8, help="multistart count for the first weight")
    sp.add_argument("--z", type=float, help="upper bound on the feed for the theta profile")
    sp.add_argument(
        "--theta-profile", dest="theta_profile", action="store_true", help="also optimise the feed over [0, --z]"
    )
    sp.add_argument("--sin-list", dest="sin_list", help="comma-separated feeds for reachable clouds")
    sp.add_argument("--reach-n", dest="reach_n", type=int, default=200, help="reachable-set grid size")

    sp = sub.add_parser("hessian-map", parents=[common], help="definiteness map of the threshold Hessian")
    _control_flags(sp, alpha=False, d=False)
    sp.add_argument("--grid-n", dest="grid_n", type=int, default=100)

    sp = sub.add_parser("reachable", parents=[common], help="reachable (P_out, P_in) sets")
    sp.add_argument("--sin-list", dest="sin_list", default="0.5,1,2")
    sp.add_argument("--grid-n", dest="grid_n", type=int, default=200)

    sp = sub.add_parser("rerun", help="replay a run manifest")
    sp.add_argument("--manifest", required=True, help="path to run_manifest.json")
    sp.add_argument("--out", required=True, help="new output directory")
    return parser


# ---------------------------------------------------------------------------
# manifest and dispatch


def _strip(argv: Sequence[str], flags: tuple) -> list[str]:
    """Drop ``flags`` and their values (``--flag v`` or ``--flag=v``) from ``argv``."""
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
            continue
        name = tok.split("=", 1)[0]
        if name in flags:
            skip = "=" not in tok
            continue
        out.append(tok)
    return out


def _resolve_params(ns) -> tuple[ModelParams, Optional[str]]:
    source = ns.params or os.environ.get(ENV_PARAMS) or None
    if source is None:
        return DEFAULTS, None
    try:
        return load_params(source), source
    except OSError as exc:
        raise FlagError(f"--params: cannot read {source!r}: {exc.strerror}") from None
    except ValueError as exc:
        raise FlagError(f"--params {source!r}: {exc}") from None


def _config(ns) -> dict:
    return {k: v for k, v in sorted(vars(ns).items()) if k not in ("out", "params")}


def execute(argv: Sequence[str], params: Optional[ModelParams] = None, params_file: Optional[str] = None) -> Run:
    """Parse ``argv`` and run the command; ``params`` overrides file/env resolution."""
    ns = build_parser().parse_args(list(argv))
    if ns.command == "rerun":
        return rerun(ns.manifest, ns.out)
    if params is None:
        params, params_file = _resolve_params(ns)
    run = Run(ns, params)
    COMMANDS[ns.command](run)
    manifest = {
        "argv": _strip(argv, ("--out", "--params")),
        "command": ns.command,
        "config": _config(ns),
        "params_file": params_file,
        "params": params.to_dict(),
        "version": __version__,
        "outputs": sorted(run.files),
    }
    io.write_json(run.out / io.MANIFEST_NAME, manifest)
    return run


def rerun(manifest_path, out) -> Run:
    try:
        manifest = io.read_json(manifest_path)
    except (OSError, ValueError) as exc:
        raise FlagError(f"--manifest: cannot read {manifest_path!r}: {exc}") from None
    try:
        argv = list(manifest["argv"]) + ["--out", str(out)]
        params = ModelParams(**manifest["params"])
    except (KeyError, TypeError) as exc:
        raise FlagError(f"--manifest {manifest_path!r} is malformed: {exc}") from None
    return execute(argv, params=params, params_file=manifest.get("params_file"))


def _flagged(exc: Exception) -> str:
    bound = getattr(exc, "bound", None)
    flag = FLAG_OF.get(bound)
    return f"{flag}: {exc}" if flag else str(exc)


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        execute(argv)
    except SystemExit as exc:  # argparse: usage errors exit with 2, --help/--version with 0
        return int(exc.code or 0)
    except (InfeasibleError, ExistenceError, MembershipError) as exc:
        print(f"error: infeasible: {_flagged(exc)}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConvergenceError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FlagError, DomainError, ValueError) as exc:
        print(f"error: {_flagged(exc)}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
