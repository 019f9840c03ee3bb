"""Vector figures regenerated from the same data the CLI writes to CSV/JSON.

Plotting is never load-bearing: every figure can be rebuilt from the tables.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402

from .equilibria import psi_alpha  # noqa: E402
from .model import DEFAULTS, ModelParams  # noqa: E402
from .objectives import p_in_grid, p_out_grid, p_yield_grid  # noqa: E402

STYLE = {
    "font.family": "sans-serif",
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "svg.hashsalt": "consortium",  # stable element ids, byte-identical reruns
    "svg.fonttype": "path",
}

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def new(width: float = 5.0, nrows: int = 1, ncols: int = 1, height: Optional[float] = None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(nrows=nrows, ncols=ncols, figsize=(width, height or width * GOLDEN))
    return fig, ax


def save(fig, path) -> Path:
    path = Path(path)
    with plt.rc_context(STYLE):
        fig.savefig(path, format=path.suffix.lstrip(".") or "svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    return path


MAX_SCATTER = 4000


def _thin(*cols):
    """Deterministic stride subsample so clouds stay light as vector graphics."""
    step = max(1, -(-len(cols[0]) // MAX_SCATTER))
    return [np.asarray(c)[::step] for c in cols]


def _mesh(s_in: float, n: int, p: ModelParams):
    alphas = np.linspace(0.0, 1.0, n + 2)[1:-1]
    ds = np.linspace(0.0, p.d_sup, n + 2)[1:-1]
    return np.meshgrid(alphas, ds, indexing="xy")


def _border(ax, s_in: float, p: ModelParams, n: int = 200):
    """Coexistence boundary d = psi_alpha(s_in) in solid red."""
    alphas = np.linspace(0.0, 1.0, n + 2)[1:-1]
    ax.plot(alphas, [psi_alpha(a, s_in, p) for a in alphas], color="red", lw=1.5)


def plot_log_pout(s_in: float, optimum: Optional[tuple], path, p: ModelParams = DEFAULTS, n: int = 200):
    """Contours of log P_out over U(s_in) with the maximiser marked."""
    A, D = _mesh(s_in, n, p)
    with np.errstate(invalid="ignore", divide="ignore"):
        Z = np.log(p_out_grid(A, D, s_in, p))
    fig, ax = new()
    cs = ax.contourf(A, D, Z, levels=30, cmap="viridis")
    fig.colorbar(cs, ax=ax, label=r"$\log P_{out}$")
    _border(ax, s_in, p)
    if optimum is not None:
        ax.plot(*optimum, marker="*", color="white", markeredgecolor="black", markersize=12, ls="none")
    ax.set_xlabel(r"$\alpha$")
    ax.set_ylabel(r"$d$ [1/day]")
    return save(fig, path)


def plot_yield(s_in: float, alpha_curve: Sequence[tuple], path, p: ModelParams = DEFAULTS, n: int = 200):
    """Yield contours with the per-d optimal alpha as a dashed red line."""
    A, D = _mesh(s_in, n, p)
    with np.errstate(invalid="ignore", divide="ignore"):
        Z = p_yield_grid(A, D, s_in, p)
    fig, ax = new()
    cs = ax.contourf(A, D, Z, levels=30, cmap="viridis")
    fig.colorbar(cs, ax=ax, label=r"$P_{yield}$")
    _border(ax, s_in, p)
    if alpha_curve:
        a, d = zip(*alpha_curve)
        ax.plot(a, d, "r--")
    ax.plot([1.0], [0.0], marker="*", color="white", markeredgecolor="black", markersize=12, clip_on=False)
    ax.set_xlabel(r"$\alpha$")
    ax.set_ylabel(r"$d$ [1/day]")
    return save(fig, path)


def _front_line(ax, xs, ys, thetas):
    pts = ax.scatter(xs, ys, c=thetas, cmap="plasma", s=6, vmin=0.0, vmax=1.0, zorder=3)
    ax.plot(xs, ys, color="black", lw=0.5, zorder=2)
    return pts


def plot_pareto_controls(s_in: float, front, path, p: ModelParams = DEFAULTS, n: int = 200):
    """Contours of P_out and P_in over U with the Pareto set in the control plane."""
    A, D = _mesh(s_in, n, p)
    with np.errstate(invalid="ignore", divide="ignore"):
        po = p_out_grid(A, D, s_in, p)
        pi = p_in_grid(A, D, s_in, p)
    fig, ax = new()
    ax.contour(A, D, po, levels=15, cmap="Greens")
    ax.contour(A, D, pi, levels=15, cmap="Greys", linestyles="dotted")
    _border(ax, s_in, p)
    pts = [q for q in front if not q.failed and not q.boundary]
    if pts:
        sc = _front_line(ax, [q.alpha for q in pts], [q.d for q in pts], [q.theta for q in pts])
        fig.colorbar(sc, ax=ax, label=r"$\theta$")
    ax.set_xlabel(r"$\alpha$")
    ax.set_ylabel(r"$d$ [1/day]")
    return save(fig, path)


def plot_pareto_image(front, cloud, path):
    """Image of U in the (P_out, P_in) plane with the front."""
    fig, ax = new()
    if cloud is not None:
        ax.scatter(*_thin(cloud.p_out, cloud.p_in), s=1, color="0.8", zorder=1)
    pts = [q for q in front if not q.failed]
    if pts:
        sc = _front_line(ax, [q.p_out for q in pts], [q.p_in for q in pts], [q.theta for q in pts])
        fig.colorbar(sc, ax=ax, label=r"$\theta$")
    ax.set_xlabel(r"$P_{out}$ [g/L/day]")
    ax.set_ylabel(r"$P_{in}$ [g/L/day]")
    return save(fig, path)


_DEFINITENESS_COLORS = {"POS_DEF": 0, "NEG_DEF": 1, "NON_DEF": 2, "SINGULAR": 3}


def plot_hessian_map(cells, n: int, path):
    """Definiteness of the threshold Hessian; non-definite cells in yellow."""
    grid = np.full((n, n), np.nan)
    alphas = np.array([c.alpha for c in cells]).reshape(n, n)
    ds = np.array([c.d for c in cells]).reshape(n, n)
    for k, c in enumerate(cells):
        if c.classification is not None:
            grid.flat[k] = _DEFINITENESS_COLORS[c.classification.value]
    cmap = ListedColormap(["tab:blue", "tab:purple", "yellow", "black"])
    fig, ax = new()
    ax.pcolormesh(alphas, ds, grid, cmap=cmap, vmin=-0.5, vmax=3.5, shading="nearest")
    handles = [
        plt.Rectangle((0, 0), 1, 1, color=cmap(i)) for i in range(4)
    ]
    ax.legend(
        handles,
        ["positive definite", "negative definite", "non-definite", "singular"],
        loc="upper left",
        bbox_to_anchor=(1.01, 1.0),
    )
    ax.set_xlabel(r"$\alpha$")
    ax.set_ylabel(r"$d$ [1/day]")
    return save(fig, path)


def plot_theta_profile(rows, path):
    """Optimal controls (top) and objective values (bottom) against theta."""
    ok = [r for r in rows if not r.failed]
    th = [r.theta for r in ok]
    fig, (top, bottom) = new(nrows=2, height=5.0)
    top.step(th, [r.alpha for r in ok], where="mid", label=r"$\alpha^*$")
    top.step(th, [r.d for r in ok], where="mid", label=r"$d^*$")
    top.step(th, [r.s_in for r in ok], where="mid", label=r"$s_{in}^*$")
    top.legend(loc="upper left")
    top.set_ylabel("optimal control")
    bottom.plot(th, [r.p_out for r in ok], label=r"$P_{out}$")
    bottom.plot(th, [r.p_in for r in ok], label=r"$P_{in}$")
    bottom.plot(th, [r.p_theta for r in ok], label=r"$P_\theta$")
    bottom.legend(loc="upper left")
    bottom.set_xlabel(r"$\theta$")
    bottom.set_ylabel("objective value")
    return save(fig, path)


def plot_reachable(clouds, front, path):
    """Reachable (P_out, P_in) sets per feed, largest feed drawn first."""
    fig, ax = new()
    shades = plt.get_cmap("Blues")(np.linspace(0.25, 0.75, max(len(clouds), 1)))
    for cloud, shade in sorted(zip(clouds, shades), key=lambda cs: -cs[0].s_in):
        ax.scatter(*_thin(cloud.p_out, cloud.p_in), s=1, color=shade, label=f"$s_{{in}}$ = {cloud.s_in:g}")
    if front:
        pts = [q for q in front if not q.failed]
        _front_line(ax, [q.p_out for q in pts], [q.p_in for q in pts], [q.theta for q in pts])
    ax.legend(loc="upper left", bbox_to_anchor=(1.01, 1.0), markerscale=6)
    ax.set_xlabel(r"$P_{out}$ [g/L/day]")
    ax.set_ylabel(r"$P_{in}$ [g/L/day]")
    return save(fig, path)


def plot_trajectory(traj, path):
    names = ("s", "e", "v", "q", "c")
    fig, axes = new(nrows=5, height=7.0)
    for k, (ax, name) in enumerate(zip(axes, names)):
        ax.plot(traj.times, traj.states[:, k])
        ax.set_ylabel(name)
    axes[-1].set_xlabel("t [day]")
    return save(fig, path)
